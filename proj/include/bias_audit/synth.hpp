#pragma once

#include "bias_audit/analysis.hpp"
#include "bias_audit/core_model.hpp"
#include "bias_audit/mdl.hpp"
#include "bias_audit/probe.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bias_audit::synth {

/// Optimizer settings for the two-stage model.
struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
};

/// Synthetic stand-in for a gender-skewed classification corpus.
struct SynthConfig {
  std::size_t n = 4000;       // training examples
  std::size_t n_test = 6000;  // test examples before gender balancing
  std::size_t d_obs = 64;
  std::size_t d_rep = 32;
  std::size_t k = 5;
  /// Stereotype strength: class c has female share 0.5 + 0.45 * corr * (2c/(k-1) - 1).
  double gender_label_corr = 0.8;
  /// Offset along the explicit gender direction (+ for F, - for M).
  double gender_signal = 3.0;
  /// Offset along a second, indirect gender direction that scrubbing leaves in place.
  double implicit_signal = 1.0;
  /// Scale of the class prototypes.
  double class_separation = 0.4;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  TrainConfig train;
  /// Probe used for the compression metric.
  probe::ProbeConfig mdl_probe;

  void validate() const;
};

struct SynthDataset {
  Matrix x;
  std::vector<std::size_t> labels;
  std::vector<Gender> genders;
  std::vector<std::string> classes;
  Vector gender_direction;  // unit vector removed by the scrub analog
};

/// The latent geometry shared by all splits generated with one seed.
struct Geometry {
  Matrix prototypes;  // k x d_obs
  Vector gender_direction;
  Vector implicit_direction;
  std::vector<double> female_share;  // per class
};

Geometry make_geometry(const SynthConfig& config);

/// Draws `n` examples from `geometry` using `stream_seed`.
SynthDataset sample(const SynthConfig& config, const Geometry& geometry, std::size_t n, std::uint64_t stream_seed);

struct Generated {
  SynthDataset train;
  ClassStats stats;  // training-set female shares before any balancing
};

/// Training split plus its class statistics. Deterministic per config.seed.
Generated generate(const SynthConfig& config);

/// Records view (id = zero-padded row index) used to route synthetic data
/// through the dataset transforms.
std::vector<LabeledRecord> to_records(const SynthDataset& data);
/// Rows of `data` selected by the ids of `records` (as produced by to_records,
/// including suffixed duplicates).
SynthDataset select_records(const SynthDataset& data, const std::vector<LabeledRecord>& records);

/// Removes the component along the explicit gender direction from every row.
SynthDataset scrub_analog(const SynthDataset& data);

/// Linear extractor + tanh followed by a softmax head.
struct TwoStageModel {
  Matrix extractor_weights;  // d_rep x d_obs
  Vector extractor_bias;     // d_rep
  probe::LinearModel head;

  Matrix represent(const Matrix& x) const;
  std::vector<std::size_t> predict(const Matrix& x) const;
  Matrix predict_proba(const Matrix& x) const;
};

/// Extractor drawn from N(0, 1/d_obs) by seed; head zero.
TwoStageModel init_two_stage(std::size_t d_obs, std::size_t d_rep, std::size_t k, std::uint64_t seed);

struct TwoStageGradient {
  double loss = 0.0;
  Matrix extractor_weights;
  Vector extractor_bias;
  Matrix head_weights;
  Vector head_bias;
};

TwoStageGradient two_stage_loss_and_gradient(const TwoStageModel& model, const Matrix& x,
                                             std::span<const std::size_t> labels,
                                             std::span<const std::size_t> rows = {});

/// Joint SGD of extractor and head on softmax cross-entropy.
TwoStageModel train_two_stage(const Matrix& x, std::span<const std::size_t> labels, std::size_t k, std::size_t d_rep,
                              const TrainConfig& config, std::uint64_t seed);

/// Keeps the extractor bit-for-bit, re-initializes the head to zero and
/// trains it on extractor outputs of `x`.
TwoStageModel freeze_and_retrain(const TwoStageModel& model, const Matrix& x, std::span<const std::size_t> labels,
                                 const TrainConfig& config, std::uint64_t seed);

/// All scalar extrinsic metrics for one evaluation.
struct ExtrinsicMetrics {
  double accuracy = 0.0;
  double tpr_gap_sum = 0.0;
  std::optional<double> tpr_gap_pearson;
  double fpr_gap_sum = 0.0;
  std::optional<double> fpr_gap_pearson;
  double precision_gap_sum = 0.0;
  std::optional<double> precision_gap_pearson;
  double independence = 0.0;
  double separation = 0.0;
  double sufficiency = 0.0;
};

/// Named scalar view; undefined Pearson values are omitted.
std::vector<std::pair<std::string, double>> named_values(const ExtrinsicMetrics& m);

ExtrinsicMetrics evaluate_extrinsic(const PredictionTable& table, const ClassStats& stats);

struct CellResult {
  std::string strategy;
  std::uint64_t seed = 0;
  std::uint64_t run_id = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double compression = 0.0;
  mdl::MdlReport mdl;
  ExtrinsicMetrics before;
  ExtrinsicMetrics after;
  bool extractor_frozen = true;  // extractor bit-identical across retraining
};

inline const std::vector<std::string> kStrategies = {"none", "subsample", "oversample", "scrub-analog"};

struct ExperimentConfig {
  SynthConfig synth;
  std::vector<std::string> strategies = kStrategies;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::uint64_t experiment_seed = 0;
  std::size_t pitman_permutations = 20000;
  std::size_t jobs = 1;

  void validate() const;
};

struct MetricSummary {
  std::string strategy;
  std::string metric;
  analysis::Aggregate before;
  analysis::Aggregate after;
  std::optional<double> p_before;  // Pitman vs "none"; unset for "none"
  std::optional<double> p_after;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<CellResult> cells;  // strategy-major, seeds in config order
  std::vector<MetricSummary> summary;
  /// False with a single strategy: all points come from one cluster.
  bool correlations_defined = false;
  std::vector<analysis::CorrelationCell> correlations_before;
  std::vector<analysis::CorrelationCell> correlations_after;
};

/// Runs one (strategy, seed) cell.
CellResult run_cell(const ExperimentConfig& config, const std::string& strategy, std::uint64_t seed,
                    std::uint64_t run_id);

/// Full before/after experiment over strategies x seeds, with Pitman tests
/// against "none" and the compression-vs-extrinsic correlation tables.
ExperimentReport run_experiment(const ExperimentConfig& config);

}  // namespace bias_audit::synth
