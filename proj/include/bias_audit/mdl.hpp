#pragma once

#include "bias_audit/core_model.hpp"
#include "bias_audit/probe.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bias_audit::mdl {

/// Cumulative fractions of the (shuffled) data at which each block ends.
class TimestampSchedule {
 public:
  /// 2.0%, 3.0%, 4.4%, 6.5%, 9.5%, 14.0%, 21.0%, 31.0%, 45.7%, 67.6%, 100%.
  static TimestampSchedule standard();

  /// Throws INVALID_SCHEDULE unless strictly increasing in (0, 1] and ending at 1.
  explicit TimestampSchedule(std::vector<double> fractions);

  const std::vector<double>& fractions() const noexcept { return fractions_; }

  /// Exclusive end index of each block for n examples: ceil(fraction * n).
  std::vector<std::size_t> block_ends(std::size_t n) const;

 private:
  std::vector<double> fractions_;
};

/// Data handed to a block coder: the probe trains on `train` (with `validation`
/// for snapshot selection) and returns the codelength of `eval` in bits.
struct BlockTask {
  const Matrix& train_x;
  std::span<const std::size_t> train_y;
  const Matrix& val_x;
  std::span<const std::size_t> val_y;
  const Matrix& eval_x;
  std::span<const std::size_t> eval_y;
  std::size_t num_classes;
  std::uint64_t seed;
};

class BlockCoder {
 public:
  virtual ~BlockCoder() = default;
  virtual double code_bits(const BlockTask& task) const = 0;
};

/// Linear softmax probe from the probe engine; the default coder.
class LinearProbeCoder final : public BlockCoder {
 public:
  explicit LinearProbeCoder(probe::ProbeConfig config) : config_(config) {}
  double code_bits(const BlockTask& task) const override;
  const probe::ProbeConfig& config() const noexcept { return config_; }

 private:
  probe::ProbeConfig config_;
};

/// Fraction of the preceding data held out for snapshot selection.
inline constexpr double kValidationFraction = 0.1;

struct MdlReport {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> schedule;
  std::vector<std::size_t> block_ends;
  std::vector<double> block_bits;
  double online_bits = 0.0;
  double uniform_bits = 0.0;
  double compression = 0.0;
  std::uint64_t seed = 0;
  // Settings recorded for auditability.
  std::optional<probe::ProbeConfig> probe_config;
  double validation_fraction = kValidationFraction;
  double prob_clamp = probe::kProbClamp;
  bool grouped = false;
};

/// Prequential code of `labels` given `features`. The first block is coded
/// uniformly; block i >= 1 is coded by a probe trained on all earlier blocks.
/// With `group_keys`, examples are laid out group by group (group order
/// shuffled by seed) so that later blocks introduce groups the probe has not
/// seen.
MdlReport online_codelength_labels(const Matrix& features, std::span<const std::size_t> labels,
                                   std::size_t num_classes, const TimestampSchedule& schedule,
                                   const BlockCoder& coder, std::uint64_t seed,
                                   const std::vector<std::string>* group_keys = nullptr);

/// Gender-probing entry point. Throws SINGLE_GENDER, SCHEDULE_TOO_FINE,
/// DIM_MISMATCH.
MdlReport online_codelength(const EmbeddingMatrix& embeddings, std::span<const Gender> genders,
                            const TimestampSchedule& schedule, const probe::ProbeConfig& config, std::uint64_t seed,
                            const std::vector<std::string>* group_keys = nullptr);

MdlReport online_codelength(const Matrix& features, std::span<const Gender> genders,
                            const TimestampSchedule& schedule, const probe::ProbeConfig& config, std::uint64_t seed,
                            const std::vector<std::string>* group_keys = nullptr);

/// uniform_bits / online_bits.
double compression(const MdlReport& report);

}  // namespace bias_audit::mdl
