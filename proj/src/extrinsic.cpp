#include "bias_audit/extrinsic.hpp"

#include "bias_audit/analysis.hpp"
#include "bias_audit/error.hpp"

#include <cmath>
#include <numbers>

namespace bias_audit::extrinsic {

std::string_view to_string(RateMetric m) noexcept {
  switch (m) {
    case RateMetric::Tpr: return "tpr";
    case RateMetric::Fpr: return "fpr";
    case RateMetric::Precision: return "precision";
  }
  return "?";
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void require_both_genders(const PredictionTable& table) {
  if (table.empty()) throw AuditError(ErrorCode::EmptyTable, "prediction table has no rows");
  std::array<std::size_t, kNumGenders> n{};
  for (const auto& row : table.rows()) ++n[index_of(row.gender)];
  if (n[0] == 0 || n[1] == 0) throw AuditError(ErrorCode::MissingGender, "both genders must be present");
}

double log_scale(LogBase base) { return base == LogBase::Nats ? 1.0 : 1.0 / std::numbers::ln2; }

// KL(P_sub || P_all) from counts, with P_sub = sub/n_sub and P_all = all/n_all.
// The log argument is formed from integer products so that equal distributions
// give exactly zero.
double kl_from_counts(std::span<const std::size_t> sub, std::size_t n_sub, std::span<const std::size_t> all,
                      std::size_t n_all) {
  double kl = 0.0;
  for (std::size_t k = 0; k < sub.size(); ++k) {
    if (sub[k] == 0) continue;
    const double p = static_cast<double>(sub[k]) / static_cast<double>(n_sub);
    const double num = static_cast<double>(sub[k]) * static_cast<double>(n_all);
    const double den = static_cast<double>(n_sub) * static_cast<double>(all[k]);
    kl += p * std::log(num / den);
  }
  return kl;
}

// W1 between sub/n_sub and all/n_all on unit-spaced indices, from counts.
double w1_from_counts(std::span<const std::size_t> sub, std::size_t n_sub, std::span<const std::size_t> all,
                      std::size_t n_all) {
  double cum_sub = 0.0;
  double cum_all = 0.0;
  double total = 0.0;
  const double scale = static_cast<double>(n_sub) * static_cast<double>(n_all);
  for (std::size_t k = 0; k + 1 < sub.size(); ++k) {
    cum_sub += static_cast<double>(sub[k]);
    cum_all += static_cast<double>(all[k]);
    total += std::abs(cum_sub * static_cast<double>(n_all) - cum_all * static_cast<double>(n_sub)) / scale;
  }
  return total;
}

}  // namespace

PerClassRates per_class_rates(const PredictionTable& table) {
  if (table.empty()) throw AuditError(ErrorCode::EmptyTable, "prediction table has no rows");
  const std::size_t k = table.num_classes();
  PerClassRates rates;
  rates.classes = table.classes();
  rates.cells.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (const auto& row : table.rows()) {
      auto& cnt = rates.cells[c][index_of(row.gender)].counts;
      const bool is_gold = row.gold == c;
      const bool is_pred = row.pred == c;
      if (is_gold && is_pred) ++cnt.tp;
      else if (is_gold) ++cnt.fn;
      else if (is_pred) ++cnt.fp;
      else ++cnt.tn;
    }
    for (auto& cell : rates.cells[c]) {
      const auto& cnt = cell.counts;
      cell.tpr = ratio(cnt.tp, cnt.tp + cnt.fn);
      cell.fpr = ratio(cnt.fp, cnt.fp + cnt.tn);
      cell.precision = ratio(cnt.tp, cnt.tp + cnt.fp);
    }
  }
  return rates;
}

GapReport gap_report(const PerClassRates& rates, RateMetric metric, const ClassStats* stats) {
  GapReport report;
  report.metric = metric;
  report.classes = rates.classes;
  const auto pick = [metric](const RateCell& cell) {
    switch (metric) {
      case RateMetric::Tpr: return cell.tpr;
      case RateMetric::Fpr: return cell.fpr;
      case RateMetric::Precision: return cell.precision;
    }
    return std::optional<double>{};
  };

  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t c = 0; c < rates.classes.size(); ++c) {
    const auto f = pick(rates.cells[c][index_of(Gender::F)]);
    const auto m = pick(rates.cells[c][index_of(Gender::M)]);
    if (!f || !m) {
      report.gaps.push_back(std::nullopt);
      report.skipped_classes.push_back(rates.classes[c]);
      continue;
    }
    const double gap = *f - *m;
    report.gaps.push_back(gap);
    report.sum_abs += std::abs(gap);
    if (stats) {
      auto it = stats->female_share.find(rates.classes[c]);
      if (it == stats->female_share.end()) {
        report.unmapped_classes.push_back(rates.classes[c]);
        continue;
      }
      xs.push_back(gap);
      ys.push_back(it->second);
    }
  }

  if (stats) {
    report.stats_source = stats->source;
    if (xs.size() < 2)
      throw AuditError(ErrorCode::TooFewClassesForPearson,
                       std::string(to_string(metric)) + ": " + std::to_string(xs.size()) + " defined class pairs");
    try {
      report.pearson = analysis::pearson(xs, ys);
    } catch (const AuditError& e) {
      if (e.code() != ErrorCode::ZeroVariance) throw;
    }
  }
  return report;
}

DivergenceResult independence(const PredictionTable& table, LogBase base) {
  require_both_genders(table);
  const std::size_t k = table.num_classes();
  std::vector<std::size_t> all(k, 0);
  std::array<std::vector<std::size_t>, kNumGenders> by_gender{std::vector<std::size_t>(k, 0),
                                                              std::vector<std::size_t>(k, 0)};
  std::array<std::size_t, kNumGenders> n_gender{};
  for (const auto& row : table.rows()) {
    ++all[row.pred];
    ++by_gender[index_of(row.gender)][row.pred];
    ++n_gender[index_of(row.gender)];
  }
  DivergenceResult result;
  for (Gender g : kGenders) {
    result.value += kl_from_counts(by_gender[index_of(g)], n_gender[index_of(g)], all, table.size());
  }
  result.value *= log_scale(base);
  return result;
}

DivergenceResult separation(const PredictionTable& table, LogBase base) {
  require_both_genders(table);
  const std::size_t k = table.num_classes();
  // counts[y][z][r], totals[y][r]
  std::vector<std::array<std::vector<std::size_t>, kNumGenders>> counts(k);
  std::vector<std::vector<std::size_t>> totals(k, std::vector<std::size_t>(k, 0));
  std::vector<std::array<std::size_t, kNumGenders>> n_cell(k);
  std::vector<std::size_t> n_gold(k, 0);
  for (auto& c : counts) c = {std::vector<std::size_t>(k, 0), std::vector<std::size_t>(k, 0)};
  for (const auto& row : table.rows()) {
    ++counts[row.gold][index_of(row.gender)][row.pred];
    ++totals[row.gold][row.pred];
    ++n_cell[row.gold][index_of(row.gender)];
    ++n_gold[row.gold];
  }
  DivergenceResult result;
  for (std::size_t y = 0; y < k; ++y) {
    if (n_gold[y] == 0) continue;
    for (Gender g : kGenders) {
      const auto z = index_of(g);
      if (n_cell[y][z] == 0) {
        ++result.skipped_cells;
        continue;
      }
      result.value += kl_from_counts(counts[y][z], n_cell[y][z], totals[y], n_gold[y]);
    }
  }
  result.value *= log_scale(base);
  return result;
}

DivergenceResult sufficiency(const PredictionTable& table) {
  require_both_genders(table);
  const std::size_t k = table.num_classes();
  // counts[r][z][y], totals[r][y]
  std::vector<std::array<std::vector<std::size_t>, kNumGenders>> counts(k);
  std::vector<std::vector<std::size_t>> totals(k, std::vector<std::size_t>(k, 0));
  std::vector<std::array<std::size_t, kNumGenders>> n_cell(k);
  std::vector<std::size_t> n_pred(k, 0);
  for (auto& c : counts) c = {std::vector<std::size_t>(k, 0), std::vector<std::size_t>(k, 0)};
  for (const auto& row : table.rows()) {
    ++counts[row.pred][index_of(row.gender)][row.gold];
    ++totals[row.pred][row.gold];
    ++n_cell[row.pred][index_of(row.gender)];
    ++n_pred[row.pred];
  }
  DivergenceResult result;
  for (std::size_t r = 0; r < k; ++r) {
    if (n_pred[r] == 0) continue;
    for (Gender g : kGenders) {
      const auto z = index_of(g);
      if (n_cell[r][z] == 0) {
        ++result.skipped_cells;
        continue;
      }
      result.value += w1_from_counts(counts[r][z], n_cell[r][z], totals[r], n_pred[r]);
    }
  }
  return result;
}

double wasserstein1(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw AuditError(ErrorCode::DimMismatch, "distributions differ in length");
  double cp = 0.0;
  double cq = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    cp += p[k];
    cq += q[k];
    total += std::abs(cp - cq);
  }
  return total;
}

double micro_f1(const PredictionTable& table) {
  if (table.empty()) throw AuditError(ErrorCode::EmptyTable, "prediction table has no rows");
  // Summed one-vs-rest counts over classes.
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < table.num_classes(); ++c) {
    for (const auto& row : table.rows()) {
      const bool is_gold = row.gold == c;
      const bool is_pred = row.pred == c;
      if (is_gold && is_pred) ++tp;
      else if (is_gold) ++fn;
      else if (is_pred) ++fp;
    }
  }
  const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) + static_cast<double>(fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

double pro_anti_f1_diff(const PredictionTable& pro, const PredictionTable& anti) {
  if (pro.empty() || anti.empty()) throw AuditError(ErrorCode::EmptyTable, "pro and anti tables must be non-empty");
  if (pro.classes() != anti.classes()) throw AuditError(ErrorCode::ClassSetMismatch, "pro/anti class lists differ");
  return micro_f1(pro) - micro_f1(anti);
}

}  // namespace bias_audit::extrinsic
