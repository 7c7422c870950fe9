#include "bias_audit/analysis.hpp"
#include "bias_audit/error.hpp"
#include "bias_audit/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace bias_audit;
using namespace bias_audit::analysis;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const AuditError& e) {
    return e.code();
  }
  FAIL("expected AuditError");
  return ErrorCode::InvalidArgument;
}

SeedSeries series(const std::string& name, std::vector<std::pair<std::uint64_t, double>> v) { return {name, v}; }

}  // namespace

TEST_CASE("pearson closed forms") {
  const std::vector<double> xs = {0, 1, 2}, ys = {0, 0, 3};
  CHECK(pearson(xs, ys) == doctest::Approx(0.8660254037844386).epsilon(1e-12));
  CHECK(r_squared(xs, ys) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(pearson(xs, xs) == doctest::Approx(1.0));
  std::vector<double> anti;
  for (double x : xs) anti.push_back(-2 * x + 7);
  CHECK(pearson(xs, anti) == doctest::Approx(-1.0));
  const std::vector<double> flat = {4, 4, 4};
  CHECK(code_of([&] { pearson(xs, flat); }) == ErrorCode::ZeroVariance);
  const std::vector<double> two = {1, 2};
  CHECK(code_of([&] { pearson(xs, two); }) == ErrorCode::LengthMismatch);
  const std::vector<double> one = {1};
  CHECK(code_of([&] { pearson(one, one); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("pearson agrees with a long-double oracle and affine invariance holds") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 30);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = standard_normal(rng);
      y[i] = 0.3 * x[i] + standard_normal(rng);
    }
    const double r = pearson(x, y);
    CHECK(std::fabs(r - oracle::pearson(x, y)) <= 1e-12);
    CHECK(std::fabs(r_squared(x, y) - r * r) <= 1e-12);
    CHECK(r_squared(x, y) <= 1.0);
    std::vector<double> xa(n), yn(n);
    for (std::size_t i = 0; i < n; ++i) {
      xa[i] = 3.5 * x[i] - 2.0;
      yn[i] = -0.25 * y[i] + 1.0;
    }
    CHECK(pearson(xa, y) == doctest::Approx(r).epsilon(1e-9));
    CHECK(pearson(x, yn) == doctest::Approx(-r).epsilon(1e-9));
  }
}

TEST_CASE("pitman closed forms") {
  const std::vector<double> a = {0, 0}, b = {1, 1};
  const auto res = pitman_test(a, b, 100000, 1);
  CHECK(res.exact);
  CHECK(res.permutations == 6);
  CHECK(res.p_value == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const std::vector<double> c = {1, 2, 3};
  CHECK(pitman_test(c, c, 100000, 1).p_value == 1.0);
  const std::vector<double> empty;
  CHECK(code_of([&] { pitman_test(empty, c, 10, 1); }) == ErrorCode::EmptyGroup);
}

TEST_CASE("pitman exact mode matches bitmask enumeration and is symmetric") {
  Rng rng(31);
  for (std::size_t total = 2; total <= 10; ++total)
    for (std::size_t na = 1; na < total; ++na) {
      std::vector<double> a(na), b(total - na);
      for (auto& v : a) v = std::round(standard_normal(rng) * 4) / 4;
      for (auto& v : b) v = std::round(standard_normal(rng) * 4 + 0.5) / 4;
      const auto ab = pitman_test(a, b, 1000000, 5);
      REQUIRE(ab.exact);
      CHECK(ab.permutations == choose(total, na));
      CHECK(std::fabs(ab.p_value - oracle::pitman_enumerate(a, b)) <= 1e-12);
      CHECK(ab.p_value == pitman_test(b, a, 1000000, 5).p_value);
    }
}

TEST_CASE("pitman branch contract and Monte-Carlo behaviour") {
  const std::vector<double> a = {0.1, 0.4, 0.35, 0.8, 0.2, 0.55}, b = {0.9, 1.1, 0.7, 1.3, 0.95, 1.2};
  const std::size_t c = choose(12, 6);
  CHECK(pitman_test(a, b, c, 1).exact);
  const auto mc = pitman_test(a, b, c - 1, 1);
  CHECK_FALSE(mc.exact);
  CHECK(mc.permutations == c - 1);
  CHECK(mc.p_value > 0.0);
  CHECK(mc.p_value == pitman_test(a, b, c - 1, 1).p_value);
  const auto exact = pitman_test(a, b, c, 1);
  CHECK(std::fabs(mc.p_value - exact.p_value) < 0.01);
}

TEST_CASE("choose saturates") {
  CHECK(choose(5, 2) == 10);
  CHECK(choose(10, 0) == 1);
  CHECK(choose(3, 4) == 0);
  CHECK(choose(200, 100) == SIZE_MAX);
}

TEST_CASE("aggregate") {
  const std::vector<double> three = {3, 3, 3}, pair = {1, 3}, single = {5};
  auto a = aggregate(three);
  CHECK(a.mean == 3);
  CHECK(a.std == 0);
  CHECK(a.n == 3);
  a = aggregate(pair);
  CHECK(a.mean == 2);
  CHECK(a.std == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  a = aggregate(single);
  CHECK(a.std == 0);
  CHECK(a.n == 1);
  CHECK(aggregate(series("m", {{0, 1}, {1, 3}})).mean == 2);
  CHECK(code_of([] { aggregate(series("m", {})); }) == ErrorCode::EmptySeries);
}

TEST_CASE("correlation table") {
  std::map<std::string, SeedSeries> intr, extr;
  intr["compression"] = series("compression", {{0, 1.0}, {1, 2.0}, {2, 2.5}, {3, 4.0}});
  extr["independence"] = series("independence", {{3, 4.0}, {2, 2.5}, {1, 2.0}, {0, 1.0}});
  extr["flat"] = series("flat", {{0, 1.0}, {1, 1.0}, {2, 1.0}});
  const auto cells = correlation_table(intr, extr, Phase::After);
  REQUIRE(cells.size() == 2);
  for (const auto& c : cells) {
    CHECK(c.phase == Phase::After);
    if (c.extrinsic == "independence") {
      CHECK(*c.r2 == doctest::Approx(1.0));
      CHECK(c.n_points == 4);
    } else {
      CHECK_FALSE(c.r2.has_value());
      CHECK(c.n_points == 3);
    }
  }
  extr["sparse"] = series("sparse", {{3, 1.0}, {9, 2.0}});
  CHECK(code_of([&] { correlation_table(intr, extr, Phase::Before); }) == ErrorCode::NoCommonSeeds);
}

TEST_CASE("independent random series rarely correlate") {
  Rng rng(2024);
  int below = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::map<std::string, SeedSeries> intr, extr;
    SeedSeries x{"x", {}}, y{"y", {}};
    for (std::uint64_t s = 0; s < 100; ++s) {
      x.values.emplace_back(s, standard_normal(rng));
      y.values.emplace_back(s, standard_normal(rng));
    }
    intr["x"] = x;
    extr["y"] = y;
    below += *correlation_table(intr, extr, Phase::Before)[0].r2 < 0.1;
  }
  CHECK(below >= 198);
}
