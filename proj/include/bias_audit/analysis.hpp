#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bias_audit::analysis {

/// Sample Pearson correlation. Throws LENGTH_MISMATCH (unequal or < 2 points)
/// or ZERO_VARIANCE.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Coefficient of determination of the least-squares line: pearson squared.
double r_squared(std::span<const double> xs, std::span<const double> ys);

struct PermutationResult {
  double p_value = 1.0;
  std::size_t permutations = 0;
  bool exact = false;
};

/// Two-sided Pitman permutation test on |mean(a) - mean(b)|. Enumerates all
/// C(|a|+|b|, |a|) relabelings when that count is <= max_permutations,
/// otherwise draws max_permutations - 1 seeded relabelings plus the observed one.
PermutationResult pitman_test(std::span<const double> a, std::span<const double> b, std::size_t max_permutations,
                              std::uint64_t seed);

/// Binomial coefficient, saturating at SIZE_MAX.
std::size_t choose(std::size_t n, std::size_t k) noexcept;

struct SeedSeries {
  std::string metric;
  std::vector<std::pair<std::uint64_t, double>> values;  // (seed or run id, value)
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample std; 0 when n == 1
  std::size_t n = 0;
};

Aggregate aggregate(const SeedSeries& series);
Aggregate aggregate(std::span<const double> values);

enum class Phase { Before, After };
std::string_view to_string(Phase p) noexcept;

struct CorrelationCell {
  std::string intrinsic;
  std::string extrinsic;
  Phase phase = Phase::Before;
  std::optional<double> r2;  // unset when either side has zero variance
  std::size_t n_points = 0;
};

/// One cell per (intrinsic, extrinsic) pair over seed-matched points.
/// Throws NO_COMMON_SEEDS when a pair shares fewer than two seeds.
std::vector<CorrelationCell> correlation_table(const std::map<std::string, SeedSeries>& intrinsic,
                                               const std::map<std::string, SeedSeries>& extrinsic, Phase phase);

}  // namespace bias_audit::analysis
