#include "bias_audit/analysis.hpp"

#include "bias_audit/error.hpp"
#include "bias_audit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace bias_audit::analysis {

std::string_view to_string(Phase p) noexcept { return p == Phase::Before ? "before" : "after"; }

namespace {

struct Moments {
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
};

bool negligible_spread(std::span<const double> v, double ss) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  const double floor = 1e-12 * scale;
  return ss <= static_cast<double>(v.size()) * floor * floor;
}

Moments centered_moments(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  Moments m;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

}  // namespace

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw AuditError(ErrorCode::LengthMismatch,
                     std::to_string(xs.size()) + " vs " + std::to_string(ys.size()) + " values");
  if (xs.size() < 2) throw AuditError(ErrorCode::LengthMismatch, "pearson needs at least 2 points");
  const auto m = centered_moments(xs, ys);
  if (negligible_spread(xs, m.sxx) || negligible_spread(ys, m.syy))
    throw AuditError(ErrorCode::ZeroVariance, "constant series");
  const double r = m.sxy / std::sqrt(m.sxx * m.syy);
  return std::clamp(r, -1.0, 1.0);
}

double r_squared(std::span<const double> xs, std::span<const double> ys) {
  const double r = pearson(xs, ys);
  return r * r;
}

std::size_t choose(std::size_t n, std::size_t k) noexcept {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::size_t num = n - k + i;
    // result * num / i is always integral; guard the multiply.
    if (result > SIZE_MAX / num) return SIZE_MAX;
    result = result * num / i;
  }
  return result;
}

PermutationResult pitman_test(std::span<const double> a, std::span<const double> b, std::size_t max_permutations,
                              std::uint64_t seed) {
  if (a.empty() || b.empty()) throw AuditError(ErrorCode::EmptyGroup, "both groups need at least one value");
  if (max_permutations == 0) throw AuditError(ErrorCode::InvalidArgument, "max_permutations must be positive");

  const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
  const double observed = std::abs(mean_a - mean_b);

  // The relabeling set depends only on the pooled multiset and the group
  // sizes, so a sorted pool and the smaller group size make p(a,b) == p(b,a).
  std::vector<double> pool(a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  std::sort(pool.begin(), pool.end());
  const std::size_t n = pool.size();
  const std::size_t m = std::min(a.size(), b.size());
  const double total = std::accumulate(pool.begin(), pool.end(), 0.0);
  double scale = 1.0;
  for (double v : pool) scale = std::max(scale, std::abs(v));
  const double tol = 1e-11 * scale;

  const auto statistic = [&](double subset_sum) {
    const double mean_s = subset_sum / static_cast<double>(m);
    const double mean_rest = (total - subset_sum) / static_cast<double>(n - m);
    return std::abs(mean_s - mean_rest);
  };

  PermutationResult result;
  const std::size_t n_relabel = choose(n, m);
  if (n_relabel <= max_permutations) {
    result.exact = true;
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t hits = 0;
    std::size_t count = 0;
    while (true) {
      double s = 0.0;
      for (auto i : idx) s += pool[i];
      if (statistic(s) >= observed - tol) ++hits;
      ++count;
      // Next combination in lexicographic order.
      std::size_t pos = m;
      while (pos > 0 && idx[pos - 1] == n - m + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < m; ++j) idx[j] = idx[j - 1] + 1;
    }
    result.permutations = count;
    result.p_value = static_cast<double>(hits) / static_cast<double>(count);
    return result;
  }

  const std::size_t draws = max_permutations - 1;
  std::size_t hits = 1;  // observed labeling
  std::vector<double> work(pool.size());
  for (std::size_t i = 0; i < draws; ++i) {
    Rng rng(derive_seed(seed, {i}));
    work = pool;
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t pick = j + uniform_index(rng, n - j);
      std::swap(work[j], work[pick]);
      s += work[j];
    }
    if (statistic(s) >= observed - tol) ++hits;
  }
  result.permutations = draws + 1;
  result.p_value = static_cast<double>(hits) / static_cast<double>(draws + 1);
  return result;
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw AuditError(ErrorCode::EmptySeries, "no values to aggregate");
  Aggregate agg;
  agg.n = values.size();
  agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(agg.n);
  if (agg.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.std = std::sqrt(ss / static_cast<double>(agg.n - 1));
  }
  return agg;
}

Aggregate aggregate(const SeedSeries& series) {
  if (series.values.empty()) throw AuditError(ErrorCode::EmptySeries, series.metric);
  std::vector<double> v;
  v.reserve(series.values.size());
  for (const auto& [s, x] : series.values) v.push_back(x);
  return aggregate(v);
}

namespace {

std::map<std::uint64_t, double> index_series(const SeedSeries& s) {
  std::map<std::uint64_t, double> out;
  for (const auto& [seed, v] : s.values) {
    if (!std::isfinite(v)) throw AuditError(ErrorCode::NonFiniteValue, s.metric + " seed " + std::to_string(seed));
    if (!out.emplace(seed, v).second)
      throw AuditError(ErrorCode::InvalidArgument, s.metric + ": duplicate seed " + std::to_string(seed));
  }
  return out;
}

}  // namespace

std::vector<CorrelationCell> correlation_table(const std::map<std::string, SeedSeries>& intrinsic,
                                               const std::map<std::string, SeedSeries>& extrinsic, Phase phase) {
  std::vector<CorrelationCell> cells;
  for (const auto& [iname, iseries] : intrinsic) {
    const auto imap = index_series(iseries);
    for (const auto& [ename, eseries] : extrinsic) {
      const auto emap = index_series(eseries);
      std::vector<double> xs, ys;
      for (const auto& [seed, x] : imap) {
        auto it = emap.find(seed);
        if (it == emap.end()) continue;
        xs.push_back(x);
        ys.push_back(it->second);
      }
      if (xs.size() < 2)
        throw AuditError(ErrorCode::NoCommonSeeds, iname + " x " + ename + ": " + std::to_string(xs.size()) +
                                                       " common seeds");
      CorrelationCell cell{iname, ename, phase, std::nullopt, xs.size()};
      try {
        cell.r2 = r_squared(xs, ys);
      } catch (const AuditError& e) {
        if (e.code() != ErrorCode::ZeroVariance) throw;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace bias_audit::analysis
