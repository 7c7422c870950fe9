#include "bias_audit/error.hpp"
#include "bias_audit/probe.hpp"
#include "bias_audit/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace bias_audit;
using namespace bias_audit::probe;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = standard_normal(rng);
  return m;
}

}  // namespace

TEST_CASE("defaults") {
  const ProbeConfig c;
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.batch_size == 16);
  CHECK(c.l2 == 0.0);
  ProbeConfig bad;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(bad.validate(), AuditError);
  bad = {};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), AuditError);
}

TEST_CASE("zero epochs leaves the zero model") {
  Rng rng(1);
  const Matrix x = random_matrix(rng, 10, 3);
  const std::vector<std::size_t> y = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  ProbeConfig c;
  c.max_epochs = 0;
  CHECK(train(x, y, 3, c) == zero_model(3, 3));
}

TEST_CASE("single example is learned") {
  Matrix x(1, 1);
  x(0, 0) = 1.0;
  const std::vector<std::size_t> y = {1};
  ProbeConfig c;
  c.learning_rate = 0.1;
  c.max_epochs = 500;
  const auto m = train(x, y, 2, c);
  CHECK(predict_proba(m, x)(0, 1) > 0.9);
}

TEST_CASE("opposite labels on identical points cancel") {
  Matrix x(2, 2);
  x << 0.3, -1.2, 0.3, -1.2;
  const std::vector<std::size_t> y = {0, 1};
  ProbeConfig c;
  c.learning_rate = 0.1;
  c.batch_size = 2;
  c.max_epochs = 100;
  const auto p = predict_proba(train(x, y, 2, c), x);
  CHECK(std::fabs(p(0, 0) - 0.5) <= 1e-6);
  CHECK(std::fabs(p(0, 1) - 0.5) <= 1e-6);
}

TEST_CASE("softmax closed forms") {
  Rng rng(2);
  const Matrix x = random_matrix(rng, 4, 5);
  const auto p = predict_proba(zero_model(3, 5), x);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(p(i, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto m = zero_model(2, 5);
  m.bias << std::log(3.0), 0.0;
  const auto q = predict_proba(m, x);
  CHECK(q(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(q(0, 1) == doctest::Approx(0.25).epsilon(1e-14));

  Vector logits(3), shifted(3);
  logits << 1.0, -2.0, 0.5;
  shifted = logits.array() + 1000.0;
  CHECK((softmax(logits) - softmax(shifted)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("probability rows sum to one") {
  Rng rng(3);
  LinearModel m{random_matrix(rng, 4, 6) * 5.0, random_matrix(rng, 4, 1).col(0)};
  const auto p = predict_proba(m, random_matrix(rng, 50, 6));
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::fabs(p.row(i).sum() - 1.0) <= 1e-9);
}

TEST_CASE("nll bits closed forms") {
  Rng rng(4);
  const Matrix x = random_matrix(rng, 100, 3);
  std::vector<std::size_t> y(100);
  for (auto& v : y) v = uniform_index(rng, 2);
  CHECK(nll_bits(zero_model(2, 3), x, y) == doctest::Approx(100.0).epsilon(1e-12));

  // Zero weights with bias ln 4 gives the first class p = 0.8.
  auto m = zero_model(2, 3);
  m.bias << std::log(4.0), 0.0;
  const std::vector<std::size_t> zeros(5, 0);
  CHECK(nll_bits(m, x.topRows(5), zeros) == doctest::Approx(5 * -std::log2(0.8)).epsilon(1e-12));
  CHECK(nll_bits(m, x.topRows(5), zeros) == doctest::Approx(1.609640).epsilon(1e-6));

  auto sure = zero_model(2, 3);
  sure.bias << 100.0, 0.0;
  CHECK(nll_bits(sure, x.topRows(5), zeros) < 1e-9);
  sure.bias << 0.0, 100.0;
  const std::vector<std::size_t> one = {0};
  CHECK(nll_bits(sure, x.topRows(1), one) == doctest::Approx(-std::log2(kProbClamp)));
}

TEST_CASE("input errors") {
  Rng rng(5);
  const Matrix x = random_matrix(rng, 3, 2);
  const std::vector<std::size_t> short_y = {0, 1};
  const std::vector<std::size_t> bad_y = {0, 1, 5};
  try {
    train(x, short_y, 2, ProbeConfig{});
    FAIL("expected error");
  } catch (const AuditError& e) {
    CHECK(e.code() == ErrorCode::DimMismatch);
  }
  try {
    train(x, bad_y, 2, ProbeConfig{});
    FAIL("expected error");
  } catch (const AuditError& e) {
    CHECK(e.code() == ErrorCode::LabelOutOfRange);
  }
  try {
    predict_proba(zero_model(2, 3), x);
    FAIL("expected error");
  } catch (const AuditError& e) {
    CHECK(e.code() == ErrorCode::DimMismatch);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(uniform_index(rng, 8));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(uniform_index(rng, 4));
    const std::size_t k = 2 + uniform_index(rng, 3);
    const Matrix x = random_matrix(rng, n, d);
    std::vector<std::size_t> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = uniform_index(rng, k);
    LinearModel m{random_matrix(rng, static_cast<Eigen::Index>(k), d), random_matrix(rng, static_cast<Eigen::Index>(k), 1).col(0)};
    const double l2 = trial % 2 ? 0.3 : 0.0;
    const auto g = loss_and_gradient(m, x, y, l2);

    std::vector<double> theta;
    for (Eigen::Index i = 0; i < m.weights.size(); ++i) theta.push_back(m.weights.data()[i]);
    for (Eigen::Index i = 0; i < m.bias.size(); ++i) theta.push_back(m.bias[i]);
    const auto loss = [&](const std::vector<double>& t) {
      LinearModel mm = m;
      for (Eigen::Index i = 0; i < mm.weights.size(); ++i) mm.weights.data()[i] = t[static_cast<std::size_t>(i)];
      for (Eigen::Index i = 0; i < mm.bias.size(); ++i)
        mm.bias[i] = t[static_cast<std::size_t>(mm.weights.size() + i)];
      return loss_and_gradient(mm, x, y, l2).loss;
    };
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double fd = oracle::central_difference(loss, theta, i, 1e-4);
      const double an = i < static_cast<std::size_t>(m.weights.size())
                            ? g.grad_weights.data()[i]
                            : g.grad_bias[static_cast<Eigen::Index>(i - m.weights.size())];
      CHECK(oracle::rel_err(an, fd) <= 1e-4);
    }
  }
}

TEST_CASE("full-batch loss is non-increasing with a small learning rate") {
  Rng rng(7);
  const Matrix x = random_matrix(rng, 40, 3);
  std::vector<std::size_t> y(40);
  for (Eigen::Index i = 0; i < 40; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) + 0.5 * x(i, 1) > 0 ? 1 : 0;
  double prev = INFINITY;
  for (std::size_t epochs = 0; epochs <= 30; ++epochs) {
    ProbeConfig c;
    c.learning_rate = 1e-2;
    c.batch_size = 40;
    c.max_epochs = epochs;
    const double loss = loss_and_gradient(train(x, y, 2, c), x, y).loss;
    CHECK(loss <= prev + 1e-15);
    prev = loss;
  }
}

TEST_CASE("training is bitwise reproducible and seed-sensitive") {
  Rng rng(8);
  const Matrix x = random_matrix(rng, 64, 4);
  std::vector<std::size_t> y(64);
  for (auto& v : y) v = uniform_index(rng, 3);
  ProbeConfig c;
  c.learning_rate = 0.05;
  c.max_epochs = 5;
  c.seed = 42;
  CHECK(train(x, y, 3, c) == train(x, y, 3, c));
  ProbeConfig c2 = c;
  c2.seed = 43;
  CHECK_FALSE(train(x, y, 3, c) == train(x, y, 3, c2));
}

TEST_CASE("validation snapshot is never worse than the final epoch") {
  Rng rng(9);
  const Matrix x = random_matrix(rng, 80, 5);
  std::vector<std::size_t> y(80);
  for (auto& v : y) v = uniform_index(rng, 2);
  const Matrix vx = random_matrix(rng, 20, 5);
  std::vector<std::size_t> vy(20);
  for (auto& v : vy) v = uniform_index(rng, 2);
  ProbeConfig c;
  c.learning_rate = 0.5;
  c.max_epochs = 20;
  const LabeledView val{vx, vy};
  const auto best = train(x, y, 2, c, &val);
  CHECK(accuracy(best, vx, vy) >= accuracy(train(x, y, 2, c), vx, vy));
}
