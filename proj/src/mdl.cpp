#include "bias_audit/mdl.hpp"

#include "bias_audit/error.hpp"
#include "bias_audit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace bias_audit::mdl {

TimestampSchedule TimestampSchedule::standard() {
  return TimestampSchedule({0.02, 0.03, 0.044, 0.065, 0.095, 0.14, 0.21, 0.31, 0.457, 0.676, 1.0});
}

TimestampSchedule::TimestampSchedule(std::vector<double> fractions) : fractions_(std::move(fractions)) {
  if (fractions_.empty()) throw AuditError(ErrorCode::InvalidSchedule, "empty schedule");
  for (std::size_t i = 0; i < fractions_.size(); ++i) {
    const double f = fractions_[i];
    if (!(f > 0.0 && f <= 1.0)) throw AuditError(ErrorCode::InvalidSchedule, "fraction outside (0,1]");
    if (i > 0 && !(f > fractions_[i - 1])) throw AuditError(ErrorCode::InvalidSchedule, "not strictly increasing");
  }
  if (fractions_.back() != 1.0) throw AuditError(ErrorCode::InvalidSchedule, "last fraction must be 1.0");
}

std::vector<std::size_t> TimestampSchedule::block_ends(std::size_t n) const {
  std::vector<std::size_t> ends;
  ends.reserve(fractions_.size());
  for (double f : fractions_) {
    // The epsilon keeps products like 0.02 * 2000 from rounding up past 40.
    const double raw = f * static_cast<double>(n);
    ends.push_back(std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9))));
  }
  ends.back() = n;
  return ends;
}

double LinearProbeCoder::code_bits(const BlockTask& task) const {
  probe::ProbeConfig cfg = config_;
  cfg.seed = task.seed;
  const probe::LabeledView val{task.val_x, task.val_y};
  const auto model = probe::train(task.train_x, task.train_y, task.num_classes, cfg,
                                  task.val_y.empty() ? nullptr : &val);
  return probe::nll_bits(model, task.eval_x, task.eval_y);
}

namespace {

std::vector<std::size_t> example_order(std::size_t n, std::uint64_t seed, const std::vector<std::string>* group_keys) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (!group_keys) {
    Rng rng(derive_seed(seed, {0}));
    shuffle_range(order.begin(), order.end(), rng);
    return order;
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[(*group_keys)[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> group_list;
  for (auto& [key, members] : groups) group_list.push_back(&members);
  Rng rng(derive_seed(seed, {1}));
  shuffle_range(group_list.begin(), group_list.end(), rng);
  order.clear();
  for (const auto* members : group_list) {
    std::vector<std::size_t> m = *members;
    shuffle_range(m.begin(), m.end(), rng);
    order.insert(order.end(), m.begin(), m.end());
  }
  return order;
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> order, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), x.cols());
  for (std::size_t i = begin; i < end; ++i)
    out.row(static_cast<Eigen::Index>(i - begin)) = x.row(static_cast<Eigen::Index>(order[i]));
  return out;
}

std::vector<std::size_t> gather_labels(std::span<const std::size_t> y, std::span<const std::size_t> order,
                                       std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(y[order[i]]);
  return out;
}

}  // namespace

MdlReport online_codelength_labels(const Matrix& features, std::span<const std::size_t> labels,
                                   std::size_t num_classes, const TimestampSchedule& schedule,
                                   const BlockCoder& coder, std::uint64_t seed,
                                   const std::vector<std::string>* group_keys) {
  probe::check_inputs(features, labels, num_classes);
  const std::size_t n = labels.size();
  if (num_classes < 2) throw AuditError(ErrorCode::InvalidArgument, "need at least 2 label classes");
  if (n < 10) throw AuditError(ErrorCode::InvalidArgument, "online code needs n >= 10, got " + std::to_string(n));
  if (group_keys && group_keys->size() != n)
    throw AuditError(ErrorCode::DimMismatch, "group keys not aligned with examples");

  MdlReport report;
  report.n = n;
  report.k = num_classes;
  report.schedule = schedule.fractions();
  report.block_ends = schedule.block_ends(n);
  report.seed = seed;
  report.grouped = group_keys != nullptr;
  for (std::size_t i = 0; i < report.block_ends.size(); ++i) {
    const std::size_t begin = i == 0 ? 0 : report.block_ends[i - 1];
    if (report.block_ends[i] <= begin)
      throw AuditError(ErrorCode::ScheduleTooFine, "block " + std::to_string(i) + " is empty for n=" +
                                                        std::to_string(n));
  }

  const auto order = example_order(n, seed, group_keys);
  const double bits_per_label = std::log2(static_cast<double>(num_classes));
  report.block_bits.push_back(static_cast<double>(report.block_ends[0]) * bits_per_label);

  for (std::size_t b = 1; b < report.block_ends.size(); ++b) {
    const std::size_t seen = report.block_ends[b - 1];
    const std::size_t n_val = static_cast<std::size_t>(std::floor(kValidationFraction * static_cast<double>(seen)));
    const std::size_t n_train = seen - n_val;
    const Matrix train_x = gather_rows(features, order, 0, n_train);
    const auto train_y = gather_labels(labels, order, 0, n_train);
    const Matrix val_x = gather_rows(features, order, n_train, seen);
    const auto val_y = gather_labels(labels, order, n_train, seen);
    const Matrix eval_x = gather_rows(features, order, seen, report.block_ends[b]);
    const auto eval_y = gather_labels(labels, order, seen, report.block_ends[b]);
    const BlockTask task{train_x, train_y, val_x, val_y, eval_x, eval_y, num_classes, derive_seed(seed, {100 + b})};
    report.block_bits.push_back(coder.code_bits(task));
  }

  report.online_bits = std::accumulate(report.block_bits.begin(), report.block_bits.end(), 0.0);
  report.uniform_bits = static_cast<double>(n) * bits_per_label;
  report.compression = compression(report);
  return report;
}

MdlReport online_codelength(const Matrix& features, std::span<const Gender> genders,
                            const TimestampSchedule& schedule, const probe::ProbeConfig& config, std::uint64_t seed,
                            const std::vector<std::string>* group_keys) {
  if (static_cast<std::size_t>(features.rows()) != genders.size())
    throw AuditError(ErrorCode::DimMismatch, std::to_string(features.rows()) + " rows vs " +
                                                 std::to_string(genders.size()) + " genders");
  std::vector<std::size_t> labels;
  labels.reserve(genders.size());
  std::array<std::size_t, kNumGenders> counts{};
  for (Gender g : genders) {
    labels.push_back(index_of(g));
    ++counts[index_of(g)];
  }
  if (counts[0] == 0 || counts[1] == 0) throw AuditError(ErrorCode::SingleGender, "probe labels need both genders");
  const LinearProbeCoder coder(config);
  auto report = online_codelength_labels(features, labels, kNumGenders, schedule, coder, seed, group_keys);
  report.probe_config = config;
  return report;
}

MdlReport online_codelength(const EmbeddingMatrix& embeddings, std::span<const Gender> genders,
                            const TimestampSchedule& schedule, const probe::ProbeConfig& config, std::uint64_t seed,
                            const std::vector<std::string>* group_keys) {
  return online_codelength(embeddings.as_double(), genders, schedule, config, seed, group_keys);
}

double compression(const MdlReport& report) {
  if (!(report.online_bits > 0.0)) return std::numeric_limits<double>::infinity();
  return report.uniform_bits / report.online_bits;
}

}  // namespace bias_audit::mdl
