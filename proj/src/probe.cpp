#include "bias_audit/probe.hpp"

#include "bias_audit/error.hpp"
#include "bias_audit/rng.hpp"

#include <cmath>
#include <numeric>

namespace bias_audit::probe {

void ProbeConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw AuditError(ErrorCode::InvalidConfig, "learning_rate must be > 0");
  if (batch_size == 0) throw AuditError(ErrorCode::InvalidConfig, "batch_size must be > 0");
  if (!(l2 >= 0.0)) throw AuditError(ErrorCode::InvalidConfig, "l2 must be >= 0");
}

LinearModel zero_model(std::size_t num_classes, std::size_t dim) {
  return LinearModel{Matrix::Zero(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(dim)),
                     Vector::Zero(static_cast<Eigen::Index>(num_classes))};
}

void check_inputs(const Matrix& features, std::span<const std::size_t> labels, std::size_t num_classes) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw AuditError(ErrorCode::DimMismatch, std::to_string(features.rows()) + " rows vs " +
                                                 std::to_string(labels.size()) + " labels");
  for (auto y : labels) {
    if (y >= num_classes)
      throw AuditError(ErrorCode::LabelOutOfRange,
                       "label " + std::to_string(y) + " with " + std::to_string(num_classes) + " classes");
  }
}

namespace {

void check_model(const LinearModel& model, const Matrix& features) {
  if (model.dim() != static_cast<std::size_t>(features.cols()))
    throw AuditError(ErrorCode::DimMismatch, "model dim " + std::to_string(model.dim()) + " vs features " +
                                                 std::to_string(features.cols()));
}

}  // namespace

Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

LossGradient loss_and_gradient(const LinearModel& model, const Matrix& features, std::span<const std::size_t> labels,
                               double l2, std::span<const std::size_t> rows) {
  check_model(model, features);
  check_inputs(features, labels, model.num_classes());
  LossGradient out;
  out.grad_weights = Matrix::Zero(model.weights.rows(), model.weights.cols());
  out.grad_bias = Vector::Zero(model.bias.size());

  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(labels.size());
    std::iota(all.begin(), all.end(), 0);
    rows = all;
  }
  if (rows.empty()) return out;

  for (auto i : rows) {
    const Vector x = features.row(static_cast<Eigen::Index>(i)).transpose();
    Vector p = softmax(model.weights * x + model.bias);
    const auto y = static_cast<Eigen::Index>(labels[i]);
    out.loss -= std::log(std::max(p(y), kProbClamp));
    p(y) -= 1.0;
    out.grad_weights.noalias() += p * x.transpose();
    out.grad_bias += p;
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss *= inv;
  out.grad_weights *= inv;
  out.grad_bias *= inv;
  if (l2 > 0.0) {
    out.loss += 0.5 * l2 * model.weights.squaredNorm();
    out.grad_weights += l2 * model.weights;
  }
  return out;
}

LinearModel train(const Matrix& features, std::span<const std::size_t> labels, std::size_t num_classes,
                  const ProbeConfig& config, const LabeledView* validation) {
  config.validate();
  check_inputs(features, labels, num_classes);
  if (validation) {
    if (validation->x.cols() != features.cols())
      throw AuditError(ErrorCode::DimMismatch, "validation features differ in dimension");
    check_inputs(validation->x, validation->y, num_classes);
  }
  LinearModel model = zero_model(num_classes, static_cast<std::size_t>(features.cols()));
  const std::size_t n = labels.size();
  if (n == 0 || config.max_epochs == 0) return model;

  const bool select = validation && !validation->y.empty();
  LinearModel best = model;
  double best_acc = -1.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, {epoch}));
    shuffle_range(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const auto g = loss_and_gradient(model, features, labels, config.l2, batch);
      model.weights -= config.learning_rate * g.grad_weights;
      model.bias -= config.learning_rate * g.grad_bias;
    }
    if (select) {
      const double acc = accuracy(model, validation->x, validation->y);
      if (acc > best_acc) {
        best_acc = acc;
        best = model;
      }
    }
  }
  return select ? best : model;
}

Matrix predict_proba(const LinearModel& model, const Matrix& features) {
  check_model(model, features);
  Matrix out(features.rows(), static_cast<Eigen::Index>(model.num_classes()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out.row(i) = softmax(model.weights * features.row(i).transpose() + model.bias).transpose();
  }
  return out;
}

std::vector<std::size_t> predict(const LinearModel& model, const Matrix& features) {
  check_model(model, features);
  std::vector<std::size_t> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Vector logits = model.weights * features.row(i).transpose() + model.bias;
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

double accuracy(const LinearModel& model, const Matrix& features, std::span<const std::size_t> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = predict(model, features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double nll_bits(const LinearModel& model, const Matrix& features, std::span<const std::size_t> labels) {
  check_model(model, features);
  check_inputs(features, labels, model.num_classes());
  double bits = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Vector p = softmax(model.weights * features.row(i).transpose() + model.bias);
    const double py = std::max(p(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])), kProbClamp);
    bits -= std::log2(py);
  }
  return bits;
}

}  // namespace bias_audit::probe
