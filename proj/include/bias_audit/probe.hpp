#pragma once

#include "bias_audit/core_model.hpp"

#include <cstdint>
#include <span>

namespace bias_audit::probe {

/// Defaults are the linear-probe settings used for gender probing
/// (batch 16, learning rate 1e-3).
struct ProbeConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  double l2 = 0.0;

  void validate() const;
};

/// Softmax regression head: logits = W x + b.
struct LinearModel {
  Matrix weights;  // K x d
  Vector bias;     // K

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(weights.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
  bool operator==(const LinearModel& o) const { return weights == o.weights && bias == o.bias; }
};

LinearModel zero_model(std::size_t num_classes, std::size_t dim);

struct LabeledView {
  const Matrix& x;
  std::span<const std::size_t> y;
};

/// Mini-batch SGD on mean softmax cross-entropy from a zero initialization.
/// Batches are reshuffled every epoch from a stream derived from config.seed.
/// With `validation`, returns the end-of-epoch snapshot with the highest
/// validation accuracy (earliest wins ties).
LinearModel train(const Matrix& features, std::span<const std::size_t> labels, std::size_t num_classes,
                  const ProbeConfig& config, const LabeledView* validation = nullptr);

/// Row-wise softmax(W x + b).
Matrix predict_proba(const LinearModel& model, const Matrix& features);

std::vector<std::size_t> predict(const LinearModel& model, const Matrix& features);

double accuracy(const LinearModel& model, const Matrix& features, std::span<const std::size_t> labels);

/// Probabilities below this value are clamped before taking logs.
inline constexpr double kProbClamp = 1e-12;

/// Sum over examples of -log2 p(y|x).
double nll_bits(const LinearModel& model, const Matrix& features, std::span<const std::size_t> labels);

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy in nats, plus 0.5 * l2 * |W|^2
  Matrix grad_weights;
  Vector grad_bias;
};

/// Loss and analytic gradient over the given rows (all rows when `rows` is empty).
LossGradient loss_and_gradient(const LinearModel& model, const Matrix& features, std::span<const std::size_t> labels,
                               double l2 = 0.0, std::span<const std::size_t> rows = {});

/// Numerically stable softmax of one logit vector.
Vector softmax(const Vector& logits);

/// Throws DIM_MISMATCH / LABEL_OUT_OF_RANGE.
void check_inputs(const Matrix& features, std::span<const std::size_t> labels, std::size_t num_classes);

}  // namespace bias_audit::probe
