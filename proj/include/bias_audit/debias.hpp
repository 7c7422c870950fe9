#pragma once

#include "bias_audit/core_model.hpp"
#include "bias_audit/probe.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bias_audit::debias {

struct ScoredWord {
  std::string word;
  double weight = 0.0;  // log-odds weight toward the gender it was removed for
};

struct ScrubIteration {
  std::size_t iteration = 0;
  double probe_accuracy = 0.0;  // training accuracy of the gender probe before removal
  std::vector<ScoredWord> removed_female;
  std::vector<ScoredWord> removed_male;
};

struct TransformReport {
  std::string strategy;
  std::size_t records_in = 0;
  std::size_t records_out = 0;
  std::size_t tokens_removed = 0;
  std::size_t tokens_swapped = 0;
  std::size_t entities_masked = 0;
  /// Labels that could not be balanced because one gender is absent.
  std::vector<std::string> unbalanced_labels;
  std::vector<ScrubIteration> iterations;
  std::uint64_t seed = 0;
};

struct TransformResult {
  std::vector<LabeledRecord> records;
  TransformReport report;
};

/// Deletes first names and gendered terms (case-insensitive, token cores),
/// keeping any punctuation attached to a deleted token. Texts without hits
/// are returned byte-for-byte.
TransformResult scrub(const std::vector<LabeledRecord>& records, const GenderLexicon& lexicon);

/// Replaces every annotated entity span with "E".
TransformResult anonymize(const std::vector<LabeledRecord>& records);

/// Appends a gender-swapped copy of every record containing a swap-pair word.
/// Copies get the flipped gender and no pred/probs.
TransformResult counterfactual_augment(const std::vector<LabeledRecord>& records, const GenderLexicon& lexicon);

/// Swaps every swap-pair word in `text`; `swapped` receives the count.
std::string swap_gendered_words(std::string_view text, const GenderLexicon& lexicon, std::size_t* swapped = nullptr);

/// Keeps min(c_F, c_M) records of each gender per label. Output sorted by id.
TransformResult subsample(const std::vector<LabeledRecord>& records, std::uint64_t seed);

/// Duplicates minority-gender records per label (sampled with replacement)
/// until both genders have equal counts. Originals keep their order.
TransformResult oversample(const std::vector<LabeledRecord>& records, std::uint64_t seed);

/// Repeatedly trains a bag-of-words gender probe and deletes the n_words
/// words weighted most toward each gender.
TransformResult iterative_scrub(const std::vector<LabeledRecord>& records, std::size_t n_words, std::size_t iterations,
                                const probe::ProbeConfig& config, std::uint64_t seed);

/// Held-out accuracy of a fresh bag-of-words gender probe on a seeded 70/30 split.
double bow_probe_accuracy(const std::vector<LabeledRecord>& records, const probe::ProbeConfig& config,
                          std::uint64_t seed);

}  // namespace bias_audit::debias
