#pragma once

#include "bias_audit/core_model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bias_audit::ceat {

/// Target sets X, Y and attribute sets A, B of a word embedding association test.
struct WeatSpec {
  std::vector<std::string> targets_x;
  std::vector<std::string> targets_y;
  std::vector<std::string> attributes_a;
  std::vector<std::string> attributes_b;

  /// Throws INVALID_WEAT_SPEC on empty sets or overlapping X/Y or A/B.
  void validate() const;
};

WeatSpec read_weat_spec(const std::filesystem::path& path);

using VectorSet = std::vector<Vector>;

/// A WeatSpec with one vector per word.
struct ResolvedWeat {
  VectorSet x;
  VectorSet y;
  VectorSet a;
  VectorSet b;
};

double cosine(const Vector& u, const Vector& v);

/// mean cos(w, A) - mean cos(w, B).
double weat_association(const Vector& w, const VectorSet& a, const VectorSet& b);

/// (mean_X s - mean_Y s) / sample std of s over X u Y.
double weat_effect_size(const ResolvedWeat& weat);

struct WeatResult {
  double effect_size = 0.0;
  double p_value = 1.0;
  std::size_t n_permutations_used = 0;
  bool exact = false;
};

/// One-sided permutation p-value over equal-size repartitions of X u Y.
/// Exact when C(|X|+|Y|, |X|) <= max_permutations.
WeatResult weat_p_value(const ResolvedWeat& weat, std::size_t max_permutations, std::uint64_t seed);

enum class EffectLabel { Small, Medium, Large };
/// |ES| > 0.8 large, > 0.5 medium.
EffectLabel effect_label(double effect_size) noexcept;
std::string_view to_string(EffectLabel l) noexcept;

/// Large-sample variance of a standardized mean difference.
double effect_size_variance(double effect_size, std::size_t n_x, std::size_t n_y) noexcept;

struct RandomEffects {
  double tau2 = 0.0;
  double ces = 0.0;
  double p_value = 1.0;
  double z = 0.0;
};

/// DerSimonian-Laird random-effects combination. tau2 is floored at zero.
RandomEffects combine_effect_sizes(std::span<const double> es, std::span<const double> variances);

struct CeatResult {
  std::vector<double> per_sample_es;
  std::vector<double> per_sample_var;
  double tau2 = 0.0;
  double ces = 0.0;
  double p_value = 1.0;
};

/// Context representations of each word.
using ContextPools = std::map<std::string, std::vector<Vector>>;

/// Draws one representation per word per sample (stream i derived from seed)
/// and combines the per-sample effect sizes.
CeatResult ceat_combine(const ContextPools& pools, const WeatSpec& spec, std::size_t n_samples, std::uint64_t seed);

struct TokenOccurrence {
  std::string word;
  Vector vector;
};

/// Up to pool_size occurrence vectors per word, sampled without replacement
/// (with replacement when the word is rarer than pool_size). Throws WORD_ABSENT.
ContextPools build_context_pools(std::span<const TokenOccurrence> corpus, const std::vector<std::string>& words,
                                 std::size_t pool_size, std::uint64_t seed);

/// Splits ids of the form word@occurrence (or a bare word) into occurrences.
std::vector<TokenOccurrence> occurrences_from_embeddings(const EmbeddingMatrix& embeddings);

}  // namespace bias_audit::ceat
