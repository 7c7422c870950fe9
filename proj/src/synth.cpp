#include "bias_audit/synth.hpp"

#include "bias_audit/debias.hpp"
#include "bias_audit/error.hpp"
#include "bias_audit/extrinsic.hpp"
#include "bias_audit/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <thread>

namespace bias_audit::synth {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw AuditError(ErrorCode::InvalidConfig, what);
}

Vector random_unit(Rng& rng, std::size_t d) {
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = standard_normal(rng);
  return v / v.norm();
}

std::string class_name(std::size_t c) { return "c" + std::to_string(c); }

std::string row_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%08zu", i);
  return buf;
}

probe::ProbeConfig head_config(const TrainConfig& t, std::uint64_t seed) {
  probe::ProbeConfig c;
  c.learning_rate = t.learning_rate;
  c.batch_size = t.batch_size;
  c.max_epochs = t.epochs;
  c.seed = seed;
  return c;
}

}  // namespace

void SynthConfig::validate() const {
  require(k >= 2, "k must be >= 2");
  require(n >= 10 * k, "n must be >= 10*k");
  require(n_test >= 10 * k, "n_test must be >= 10*k");
  require(d_obs >= 2 && d_rep >= 2, "dims must be >= 2");
  require(gender_label_corr >= 0.0 && gender_label_corr <= 1.0, "gender_label_corr must be in [0,1]");
  require(gender_signal >= 0.0 && std::isfinite(gender_signal), "gender_signal must be >= 0");
  require(implicit_signal >= 0.0 && std::isfinite(implicit_signal), "implicit_signal must be >= 0");
  require(class_separation >= 0.0 && std::isfinite(class_separation), "class_separation must be >= 0");
  require(noise_sigma > 0.0 && std::isfinite(noise_sigma), "noise_sigma must be > 0");
  require(train.learning_rate > 0.0 && std::isfinite(train.learning_rate), "train.learning_rate must be > 0");
  require(train.batch_size >= 1, "train.batch_size must be >= 1");
  mdl_probe.validate();
}

Geometry make_geometry(const SynthConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, {0}));
  const auto d = static_cast<Eigen::Index>(config.d_obs);
  Geometry g;
  g.prototypes = Matrix(static_cast<Eigen::Index>(config.k), d);
  for (Eigen::Index c = 0; c < g.prototypes.rows(); ++c)
    for (Eigen::Index j = 0; j < d; ++j) g.prototypes(c, j) = config.class_separation * standard_normal(rng);
  g.gender_direction = random_unit(rng, config.d_obs);
  // Orthogonal to the explicit direction so that scrubbing leaves it intact.
  Vector imp = random_unit(rng, config.d_obs);
  imp -= imp.dot(g.gender_direction) * g.gender_direction;
  g.implicit_direction = imp / imp.norm();
  for (std::size_t c = 0; c < config.k; ++c) {
    const double pos = 2.0 * static_cast<double>(c) / static_cast<double>(config.k - 1) - 1.0;
    g.female_share.push_back(0.5 + 0.45 * config.gender_label_corr * pos);
  }
  return g;
}

SynthDataset sample(const SynthConfig& config, const Geometry& geometry, std::size_t n, std::uint64_t stream_seed) {
  Rng rng(stream_seed);
  SynthDataset out;
  const auto d = static_cast<Eigen::Index>(config.d_obs);
  out.x = Matrix(static_cast<Eigen::Index>(n), d);
  out.labels.resize(n);
  out.genders.resize(n);
  for (std::size_t c = 0; c < config.k; ++c) out.classes.push_back(class_name(c));
  out.gender_direction = geometry.gender_direction;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = uniform_index(rng, config.k);
    const Gender g = uniform_real(rng) < geometry.female_share[y] ? Gender::F : Gender::M;
    const double s = g == Gender::F ? 1.0 : -1.0;
    out.labels[i] = y;
    out.genders[i] = g;
    const auto r = static_cast<Eigen::Index>(i);
    out.x.row(r) = geometry.prototypes.row(static_cast<Eigen::Index>(y)) +
                   (s * config.gender_signal) * geometry.gender_direction.transpose() +
                   (s * config.implicit_signal) * geometry.implicit_direction.transpose();
    for (Eigen::Index j = 0; j < d; ++j) out.x(r, j) += config.noise_sigma * standard_normal(rng);
  }
  return out;
}

Generated generate(const SynthConfig& config) {
  const Geometry g = make_geometry(config);
  Generated out;
  out.train = sample(config, g, config.n, derive_seed(config.seed, {1}));
  out.stats = training_class_stats(to_records(out.train));
  return out;
}

std::vector<LabeledRecord> to_records(const SynthDataset& data) {
  std::vector<LabeledRecord> out;
  out.reserve(data.labels.size());
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    LabeledRecord r;
    r.id = row_id(i);
    r.label = data.classes.at(data.labels[i]);
    r.gender = data.genders[i];
    out.push_back(std::move(r));
  }
  return out;
}

SynthDataset select_records(const SynthDataset& data, const std::vector<LabeledRecord>& records) {
  SynthDataset out;
  out.classes = data.classes;
  out.gender_direction = data.gender_direction;
  out.x = Matrix(static_cast<Eigen::Index>(records.size()), data.x.cols());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string& id = records[i].id;
    const std::size_t row = std::stoull(id.substr(0, id.find('#')));
    if (row >= data.labels.size()) throw AuditError(ErrorCode::InvalidArgument, "record id out of range: " + id);
    out.x.row(static_cast<Eigen::Index>(i)) = data.x.row(static_cast<Eigen::Index>(row));
    out.labels.push_back(data.labels[row]);
    out.genders.push_back(data.genders[row]);
  }
  return out;
}

SynthDataset scrub_analog(const SynthDataset& data) {
  SynthDataset out = data;
  const Vector& u = data.gender_direction;
  out.x -= (data.x * u) * u.transpose();
  return out;
}

Matrix TwoStageModel::represent(const Matrix& x) const {
  if (x.cols() != extractor_weights.cols())
    throw AuditError(ErrorCode::DimMismatch, "input dim " + std::to_string(x.cols()) + " vs extractor " +
                                                 std::to_string(extractor_weights.cols()));
  Matrix pre = x * extractor_weights.transpose();
  pre.rowwise() += extractor_bias.transpose();
  return pre.array().tanh().matrix();
}

std::vector<std::size_t> TwoStageModel::predict(const Matrix& x) const { return probe::predict(head, represent(x)); }

Matrix TwoStageModel::predict_proba(const Matrix& x) const { return probe::predict_proba(head, represent(x)); }

TwoStageModel init_two_stage(std::size_t d_obs, std::size_t d_rep, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  TwoStageModel m;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_obs));
  m.extractor_weights = Matrix(static_cast<Eigen::Index>(d_rep), static_cast<Eigen::Index>(d_obs));
  for (Eigen::Index i = 0; i < m.extractor_weights.rows(); ++i)
    for (Eigen::Index j = 0; j < m.extractor_weights.cols(); ++j) m.extractor_weights(i, j) = scale * standard_normal(rng);
  m.extractor_bias = Vector::Zero(static_cast<Eigen::Index>(d_rep));
  m.head = probe::zero_model(k, d_rep);
  return m;
}

TwoStageGradient two_stage_loss_and_gradient(const TwoStageModel& model, const Matrix& x,
                                             std::span<const std::size_t> labels, std::span<const std::size_t> rows) {
  probe::check_inputs(x, labels, model.head.num_classes());
  const Matrix& we = model.extractor_weights;
  const Matrix& wh = model.head.weights;
  TwoStageGradient g;
  g.extractor_weights = Matrix::Zero(we.rows(), we.cols());
  g.extractor_bias = Vector::Zero(we.rows());
  g.head_weights = Matrix::Zero(wh.rows(), wh.cols());
  g.head_bias = Vector::Zero(wh.rows());
  const std::size_t count = rows.empty() ? labels.size() : rows.size();
  if (count == 0) return g;
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t i = rows.empty() ? t : rows[t];
    const Vector xi = x.row(static_cast<Eigen::Index>(i)).transpose();
    const Vector h = (we * xi + model.extractor_bias).array().tanh().matrix();
    const Vector p = probe::softmax(wh * h + model.head.bias);
    const auto y = static_cast<Eigen::Index>(labels[i]);
    g.loss -= std::log(std::max(p(y), probe::kProbClamp));
    Vector dlogit = p;
    dlogit(y) -= 1.0;
    g.head_weights.noalias() += dlogit * h.transpose();
    g.head_bias += dlogit;
    const Vector dpre = ((wh.transpose() * dlogit).array() * (1.0 - h.array().square())).matrix();
    g.extractor_weights.noalias() += dpre * xi.transpose();
    g.extractor_bias += dpre;
  }
  const double inv = 1.0 / static_cast<double>(count);
  g.loss *= inv;
  g.extractor_weights *= inv;
  g.extractor_bias *= inv;
  g.head_weights *= inv;
  g.head_bias *= inv;
  return g;
}

TwoStageModel train_two_stage(const Matrix& x, std::span<const std::size_t> labels, std::size_t k, std::size_t d_rep,
                              const TrainConfig& config, std::uint64_t seed) {
  if (labels.empty()) throw AuditError(ErrorCode::EmptyTable, "no training examples");
  probe::check_inputs(x, labels, k);
  TwoStageModel m = init_two_stage(static_cast<std::size_t>(x.cols()), d_rep, k, derive_seed(seed, {0}));
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(seed, {1, epoch}));
    shuffle_range(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const auto g = two_stage_loss_and_gradient(m, x, labels, std::span(order).subspan(start, stop - start));
      m.extractor_weights -= config.learning_rate * g.extractor_weights;
      m.extractor_bias -= config.learning_rate * g.extractor_bias;
      m.head.weights -= config.learning_rate * g.head_weights;
      m.head.bias -= config.learning_rate * g.head_bias;
    }
  }
  return m;
}

TwoStageModel freeze_and_retrain(const TwoStageModel& model, const Matrix& x, std::span<const std::size_t> labels,
                                 const TrainConfig& config, std::uint64_t seed) {
  TwoStageModel out;
  out.extractor_weights = model.extractor_weights;
  out.extractor_bias = model.extractor_bias;
  out.head = probe::train(model.represent(x), labels, model.head.num_classes(), head_config(config, seed));
  return out;
}

std::vector<std::pair<std::string, double>> named_values(const ExtrinsicMetrics& m) {
  std::vector<std::pair<std::string, double>> out;
  const auto opt = [&](const char* name, const std::optional<double>& v) {
    if (v) out.emplace_back(name, *v);
  };
  out.emplace_back("accuracy", m.accuracy);
  out.emplace_back("tpr_gap_sum", m.tpr_gap_sum);
  opt("tpr_gap_pearson", m.tpr_gap_pearson);
  out.emplace_back("fpr_gap_sum", m.fpr_gap_sum);
  opt("fpr_gap_pearson", m.fpr_gap_pearson);
  out.emplace_back("precision_gap_sum", m.precision_gap_sum);
  opt("precision_gap_pearson", m.precision_gap_pearson);
  out.emplace_back("independence", m.independence);
  out.emplace_back("separation", m.separation);
  out.emplace_back("sufficiency", m.sufficiency);
  return out;
}

ExtrinsicMetrics evaluate_extrinsic(const PredictionTable& table, const ClassStats& stats) {
  ExtrinsicMetrics m;
  std::size_t correct = 0;
  for (const auto& r : table.rows()) correct += r.gold == r.pred ? 1 : 0;
  m.accuracy = table.rows().empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(table.rows().size());
  const auto rates = extrinsic::per_class_rates(table);
  const auto gaps = [&](extrinsic::RateMetric metric, double& sum, std::optional<double>& r) {
    try {
      const auto rep = extrinsic::gap_report(rates, metric, &stats);
      sum = rep.sum_abs;
      r = rep.pearson;
    } catch (const AuditError& e) {
      if (e.code() != ErrorCode::TooFewClassesForPearson) throw;
      // Too few classes with both genders predicted: keep the sum, no correlation.
      sum = extrinsic::gap_report(rates, metric, nullptr).sum_abs;
      r.reset();
    }
  };
  gaps(extrinsic::RateMetric::Tpr, m.tpr_gap_sum, m.tpr_gap_pearson);
  gaps(extrinsic::RateMetric::Fpr, m.fpr_gap_sum, m.fpr_gap_pearson);
  gaps(extrinsic::RateMetric::Precision, m.precision_gap_sum, m.precision_gap_pearson);
  m.independence = extrinsic::independence(table).value;
  m.separation = extrinsic::separation(table).value;
  m.sufficiency = extrinsic::sufficiency(table).value;
  return m;
}

namespace {

PredictionTable table_for(const SynthDataset& data, const std::vector<std::size_t>& pred) {
  std::vector<PredictionRow> rows;
  rows.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) rows.push_back({data.labels[i], pred[i], data.genders[i], std::nullopt});
  return PredictionTable(data.classes, std::move(rows));
}

}  // namespace

void ExperimentConfig::validate() const {
  synth.validate();
  require(!strategies.empty(), "strategies must not be empty");
  require(std::find(strategies.begin(), strategies.end(), "none") != strategies.end(),
          "strategies must include \"none\"");
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    require(std::find(kStrategies.begin(), kStrategies.end(), strategies[i]) != kStrategies.end(),
            "unknown strategy: " + strategies[i]);
    for (std::size_t j = 0; j < i; ++j) require(strategies[i] != strategies[j], "duplicate strategy: " + strategies[i]);
  }
  require(seeds.size() >= 3, "at least 3 seeds required");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) require(seeds[i] != seeds[j], "duplicate seed");
  require(pitman_permutations >= 1, "pitman_permutations must be >= 1");
  require(jobs >= 1, "jobs must be >= 1");
}

CellResult run_cell(const ExperimentConfig& config, const std::string& strategy, std::uint64_t seed,
                    std::uint64_t run_id) {
  SynthConfig sc = config.synth;
  // Data depends on the seed only, so strategies are compared on paired datasets.
  sc.seed = derive_seed(config.experiment_seed, {seed});
  const std::uint64_t cell_seed = derive_seed(config.experiment_seed, {hash_string(strategy), seed});

  const Geometry geometry = make_geometry(sc);
  const SynthDataset train = sample(sc, geometry, sc.n, derive_seed(sc.seed, {1}));
  const ClassStats stats = training_class_stats(to_records(train));
  const SynthDataset test_raw = sample(sc, geometry, sc.n_test, derive_seed(sc.seed, {2}));
  SynthDataset test = select_records(test_raw, debias::subsample(to_records(test_raw), derive_seed(sc.seed, {3})).records);

  SynthDataset fit;
  if (strategy == "none") {
    fit = train;
  } else if (strategy == "subsample") {
    fit = select_records(train, debias::subsample(to_records(train), derive_seed(cell_seed, {1})).records);
  } else if (strategy == "oversample") {
    fit = select_records(train, debias::oversample(to_records(train), derive_seed(cell_seed, {1})).records);
  } else if (strategy == "scrub-analog") {
    fit = scrub_analog(train);
    test = scrub_analog(test);
  } else {
    throw AuditError(ErrorCode::InvalidConfig, "unknown strategy: " + strategy);
  }

  CellResult cell;
  cell.strategy = strategy;
  cell.seed = seed;
  cell.run_id = run_id;
  cell.train_size = fit.labels.size();
  cell.test_size = test.labels.size();

  const TwoStageModel model = train_two_stage(fit.x, fit.labels, sc.k, sc.d_rep, sc.train, derive_seed(cell_seed, {2}));
  cell.before = evaluate_extrinsic(table_for(test, model.predict(test.x)), stats);

  probe::ProbeConfig pc = sc.mdl_probe;
  pc.seed = derive_seed(cell_seed, {3});
  cell.mdl = mdl::online_codelength(model.represent(test.x), test.genders, mdl::TimestampSchedule::standard(), pc,
                                    derive_seed(cell_seed, {4}));
  cell.compression = cell.mdl.compression;

  const TwoStageModel retrained = freeze_and_retrain(model, train.x, train.labels, sc.train, derive_seed(cell_seed, {5}));
  cell.extractor_frozen =
      retrained.extractor_weights == model.extractor_weights && retrained.extractor_bias == model.extractor_bias;
  cell.after = evaluate_extrinsic(table_for(test, retrained.predict(test.x)), stats);
  return cell;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  report.config = config;

  struct Job {
    std::string strategy;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& s : config.strategies)
    for (auto seed : config.seeds) jobs.push_back({s, seed});
  report.cells.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        report.cells[i] = run_cell(config, jobs[i].strategy, jobs[i].seed, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(config.jobs, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Per-strategy value lists in seed order.
  std::map<std::string, std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>> values;
  std::vector<std::string> metric_order = {"compression"};
  for (const auto& [name, v] : named_values(ExtrinsicMetrics{.tpr_gap_pearson = 0.0,
                                                              .fpr_gap_pearson = 0.0,
                                                              .precision_gap_pearson = 0.0}))
    metric_order.push_back(name);
  for (const auto& cell : report.cells) {
    auto& per = values[cell.strategy];
    per["compression"].first.push_back(cell.compression);
    per["compression"].second.push_back(cell.compression);
    for (const auto& [name, v] : named_values(cell.before)) per[name].first.push_back(v);
    for (const auto& [name, v] : named_values(cell.after)) per[name].second.push_back(v);
  }
  const auto test_vs_none = [&](const std::vector<double>& a, const std::vector<double>& b, const std::string& strategy,
                                const std::string& metric, std::uint64_t phase) -> std::optional<double> {
    if (a.empty() || b.empty()) return std::nullopt;
    const auto seed = derive_seed(config.experiment_seed, {hash_string(strategy), hash_string(metric), phase});
    return analysis::pitman_test(a, b, config.pitman_permutations, seed).p_value;
  };
  for (const auto& strategy : config.strategies) {
    for (const auto& metric : metric_order) {
      const auto& [before, after] = values[strategy][metric];
      if (before.empty() && after.empty()) continue;
      MetricSummary s;
      s.strategy = strategy;
      s.metric = metric;
      if (!before.empty()) s.before = analysis::aggregate(before);
      if (!after.empty()) s.after = analysis::aggregate(after);
      if (strategy != "none") {
        const auto& base = values["none"][metric];
        s.p_before = test_vs_none(before, base.first, strategy, metric, 0);
        s.p_after = test_vs_none(after, base.second, strategy, metric, 1);
      }
      report.summary.push_back(std::move(s));
    }
  }

  report.correlations_defined = config.strategies.size() >= 2;
  if (report.correlations_defined) {
    std::map<std::string, analysis::SeedSeries> intrinsic;
    std::map<std::string, analysis::SeedSeries> before;
    std::map<std::string, analysis::SeedSeries> after;
    intrinsic["compression"].metric = "compression";
    for (const auto& cell : report.cells) {
      intrinsic["compression"].values.emplace_back(cell.run_id, cell.compression);
      for (const auto& [name, v] : named_values(cell.before)) {
        if (name == "accuracy") continue;
        before[name].metric = name;
        before[name].values.emplace_back(cell.run_id, v);
      }
      for (const auto& [name, v] : named_values(cell.after)) {
        if (name == "accuracy") continue;
        after[name].metric = name;
        after[name].values.emplace_back(cell.run_id, v);
      }
    }
    const auto drop_sparse = [](std::map<std::string, analysis::SeedSeries>& m) {
      std::erase_if(m, [](const auto& kv) { return kv.second.values.size() < 2; });
    };
    drop_sparse(before);
    drop_sparse(after);
    report.correlations_before = analysis::correlation_table(intrinsic, before, analysis::Phase::Before);
    report.correlations_after = analysis::correlation_table(intrinsic, after, analysis::Phase::After);
  }
  return report;
}

}  // namespace bias_audit::synth
