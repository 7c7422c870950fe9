#pragma once

#include "bias_audit/core_model.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bias_audit::extrinsic {

/// One-vs-rest confusion counts of a single (class, gender) cell.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct RateCell {
  ConfusionCounts counts;
  std::optional<double> tpr;        // tp / (tp + fn)
  std::optional<double> fpr;        // fp / (fp + tn)
  std::optional<double> precision;  // tp / (tp + fp)
};

struct PerClassRates {
  std::vector<std::string> classes;
  /// cells[class][gender]
  std::vector<std::array<RateCell, kNumGenders>> cells;
};

PerClassRates per_class_rates(const PredictionTable& table);

enum class RateMetric { Tpr, Fpr, Precision };
std::string_view to_string(RateMetric m) noexcept;

struct GapReport {
  RateMetric metric = RateMetric::Tpr;
  /// Female minus male, per class in table order; nullopt when either side is undefined.
  std::vector<std::optional<double>> gaps;
  std::vector<std::string> classes;
  double sum_abs = 0.0;
  /// Correlation of gaps with female share. Unset when no stats were given or
  /// either series has zero variance.
  std::optional<double> pearson;
  std::optional<StatsSource> stats_source;
  std::vector<std::string> skipped_classes;
  /// Classes with a defined gap but no entry in the class statistics.
  std::vector<std::string> unmapped_classes;
};

/// Pass `stats = nullptr` to compute only the absolute gap sum.
/// Throws TOO_FEW_CLASSES_FOR_PEARSON when stats are given but fewer than two
/// classes carry both a gap and a share.
GapReport gap_report(const PerClassRates& rates, RateMetric metric, const ClassStats* stats);

enum class LogBase { Nats, Bits };

/// Sum of divergences plus the number of conditioning cells skipped for lack of support.
struct DivergenceResult {
  double value = 0.0;
  std::size_t skipped_cells = 0;
};

/// Sum over z of KL(P(r|z) || P(r)).
DivergenceResult independence(const PredictionTable& table, LogBase base = LogBase::Nats);

/// Sum over (y, z) of KL(P(r|y,z) || P(r|y)); unsupported (y, z) cells are skipped.
DivergenceResult separation(const PredictionTable& table, LogBase base = LogBase::Nats);

/// Sum over (r, z) of W1(P(y|r,z), P(y|r)) with ground metric |i - j| on class indices.
DivergenceResult sufficiency(const PredictionTable& table);

/// W1 between two categorical distributions on unit-spaced indices.
double wasserstein1(std::span<const double> p, std::span<const double> q);

/// Micro-averaged F1(pro) - F1(anti).
double pro_anti_f1_diff(const PredictionTable& pro, const PredictionTable& anti);

/// Micro-averaged F1 over all classes (equals accuracy for single-label rows).
double micro_f1(const PredictionTable& table);

}  // namespace bias_audit::extrinsic
