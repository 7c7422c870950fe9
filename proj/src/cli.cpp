#include "bias_audit/cli.hpp"

#include "bias_audit/analysis.hpp"
#include "bias_audit/ceat.hpp"
#include "bias_audit/core_model.hpp"
#include "bias_audit/debias.hpp"
#include "bias_audit/error.hpp"
#include "bias_audit/extrinsic.hpp"
#include "bias_audit/json_out.hpp"
#include "bias_audit/mdl.hpp"
#include "bias_audit/rng.hpp"
#include "bias_audit/synth.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace bias_audit::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

constexpr double kCeatAlpha = 0.05;

struct Globals {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out;
  bool quiet = false;
};

/// What a subcommand did, for the manifest.
struct RunRecord {
  Json config = Json::object();
  Json seeds = Json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  fs::path manifest_path;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, io::canonical_dump(j)); }

Json read_json(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  try {
    return Json::parse(f);
  } catch (const Json::exception& e) {
    throw AuditError(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

fs::path require_out(const Globals& g, const std::string& subcommand) {
  if (g.out.empty()) throw AuditError(ErrorCode::InvalidArgument, subcommand + " requires --out");
  return g.out;
}

fs::path manifest_beside(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t\r\n");
    const auto e = cur.find_last_not_of(" \t\r\n");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw AuditError(ErrorCode::InvalidArgument, "not a finite number: " + s);
  return v;
}

/// Inline comma list, or a file of comma/newline separated numbers.
std::vector<double> parse_values(const std::string& arg, RunRecord& run) {
  std::string text = arg;
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) {
    std::ifstream f(arg, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + arg);
    std::stringstream ss;
    ss << f.rdbuf();
    text = ss.str();
    std::replace(text.begin(), text.end(), '\n', ',');
    run.inputs.emplace_back(arg);
  }
  std::vector<double> out;
  for (const auto& tok : split_csv(text)) out.push_back(parse_number(tok));
  return out;
}

// ---------------------------------------------------------------- audit

struct AuditOpts {
  std::string records;
  std::string stats;
  std::string stats_source = "external";
  std::string metrics = "tpr,fpr,precision,independence,separation,sufficiency";
  std::string log_base = "e";
  std::string anti_records;
  std::string phase = "before";
  std::optional<std::uint64_t> run_id;
};

const std::set<std::string> kAuditMetrics = {"tpr", "fpr", "precision", "independence", "separation", "sufficiency"};

void run_audit(const Globals& g, const AuditOpts& o, RunRecord& run) {
  const fs::path out = require_out(g, "audit");
  if (o.stats_source != "training" && o.stats_source != "external")
    throw AuditError(ErrorCode::InvalidArgument, "--stats-source must be training or external");
  if (o.log_base != "e" && o.log_base != "2") throw AuditError(ErrorCode::InvalidArgument, "--log-base must be e or 2");
  if (o.phase != "before" && o.phase != "after")
    throw AuditError(ErrorCode::InvalidArgument, "--phase must be before or after");
  const auto metrics = split_csv(o.metrics);
  for (const auto& m : metrics)
    if (!kAuditMetrics.contains(m)) throw AuditError(ErrorCode::InvalidArgument, "unknown metric: " + m);
  const auto want = [&](const char* m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };

  const auto records = read_records(o.records);
  run.inputs.emplace_back(o.records);
  std::optional<ClassStats> stats;
  if (!o.stats.empty()) {
    stats = read_class_stats(o.stats, o.stats_source == "training" ? StatsSource::TrainingSet : StatsSource::External);
    run.inputs.emplace_back(o.stats);
  }
  const PredictionTable table = to_prediction_table(records);
  const auto base = o.log_base == "2" ? extrinsic::LogBase::Bits : extrinsic::LogBase::Nats;
  const std::uint64_t run_id = o.run_id.value_or(g.seed);

  Json report = Json::object();
  Json scalars = Json::object();
  report["run_id"] = run_id;
  report["phase"] = o.phase;
  report["n_records"] = table.rows().size();
  report["classes"] = table.classes();
  report["log_base"] = o.log_base;
  const auto rates = extrinsic::per_class_rates(table);
  Json gaps = Json::object();
  const std::pair<const char*, extrinsic::RateMetric> rate_metrics[] = {{"tpr", extrinsic::RateMetric::Tpr},
                                                                        {"fpr", extrinsic::RateMetric::Fpr},
                                                                        {"precision", extrinsic::RateMetric::Precision}};
  for (const auto& [name, metric] : rate_metrics) {
    if (!want(name)) continue;
    const auto rep = extrinsic::gap_report(rates, metric, stats ? &*stats : nullptr);
    gaps[name] = io::to_json(rep);
    scalars[std::string(name) + "_gap_sum"] = rep.sum_abs;
    if (rep.pearson) scalars[std::string(name) + "_gap_pearson"] = *rep.pearson;
  }
  report["gaps"] = gaps;
  if (want("independence")) {
    const auto r = extrinsic::independence(table, base);
    report["independence"] = io::to_json(r);
    scalars["independence"] = r.value;
  }
  if (want("separation")) {
    const auto r = extrinsic::separation(table, base);
    report["separation"] = io::to_json(r);
    scalars["separation"] = r.value;
  }
  if (want("sufficiency")) {
    const auto r = extrinsic::sufficiency(table);
    report["sufficiency"] = io::to_json(r);
    scalars["sufficiency"] = r.value;
  }
  report["micro_f1"] = extrinsic::micro_f1(table);
  if (!o.anti_records.empty()) {
    const auto anti = read_records(o.anti_records);
    run.inputs.emplace_back(o.anti_records);
    const double diff = extrinsic::pro_anti_f1_diff(table, to_prediction_table(anti));
    report["pro_anti_f1_diff"] = diff;
    scalars["pro_anti_f1_diff"] = diff;
  }
  report["extrinsic"] = {{o.phase, scalars}};
  write_json(out, report);
  run.outputs.push_back(out);
  run.manifest_path = manifest_beside(out);
  run.config = {{"records", o.records},   {"stats", o.stats},       {"stats_source", o.stats_source},
                {"metrics", metrics},     {"log_base", o.log_base}, {"anti_records", o.anti_records},
                {"phase", o.phase},       {"run_id", run_id}};
}

// ------------------------------------------------------------ probe-mdl

struct MdlOpts {
  std::string embeddings;
  std::string ids;
  std::string records;
  std::string schedule = "default";
  std::string group_by;
  double lr = 1e-3;
  std::size_t batch = 16;
  std::size_t epochs = 50;
  std::optional<std::uint64_t> run_id;
};

void run_probe_mdl(const Globals& g, const MdlOpts& o, RunRecord& run) {
  const fs::path out = require_out(g, "probe-mdl");
  if (!o.group_by.empty() && o.group_by != "label")
    throw AuditError(ErrorCode::InvalidArgument, "--group-by supports only: label");
  const auto schedule = o.schedule == "default" ? mdl::TimestampSchedule::standard() : [&] {
    std::vector<double> f;
    for (const auto& t : split_csv(o.schedule)) f.push_back(parse_number(t));
    return mdl::TimestampSchedule(std::move(f));
  }();
  const EmbeddingMatrix emb = read_embeddings(o.embeddings, o.ids);
  run.inputs.emplace_back(o.embeddings);
  run.inputs.emplace_back(o.ids);
  const auto records = read_records(o.records);
  run.inputs.emplace_back(o.records);
  std::map<std::string, const LabeledRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<Gender> genders;
  std::vector<std::string> groups;
  for (const auto& id : emb.ids()) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw AuditError(ErrorCode::InvalidArgument, "no record for embedding id: " + id);
    genders.push_back(it->second->gender);
    groups.push_back(it->second->label);
  }
  probe::ProbeConfig pc;
  pc.learning_rate = o.lr;
  pc.batch_size = o.batch;
  pc.max_epochs = o.epochs;
  pc.seed = derive_seed(g.seed, {1});
  const auto report = mdl::online_codelength(emb, genders, schedule, pc, derive_seed(g.seed, {0}),
                                             o.group_by.empty() ? nullptr : &groups);
  const std::uint64_t run_id = o.run_id.value_or(g.seed);
  Json j = io::to_json(report);
  j["run_id"] = run_id;
  j["intrinsic"] = {{"compression", report.compression}};
  write_json(out, j);
  run.outputs.push_back(out);
  run.manifest_path = manifest_beside(out);
  run.config = {{"embeddings", o.embeddings}, {"ids", o.ids}, {"records", o.records},
                {"schedule", schedule.fractions()}, {"group_by", o.group_by}, {"probe", io::to_json(pc)},
                {"run_id", run_id}};
  run.seeds = {{"seed", g.seed}, {"order_seed", report.seed}, {"probe_seed", pc.seed}};
}

// ----------------------------------------------------------------- ceat

struct CeatOpts {
  std::string embeddings;
  std::string ids;
  std::string spec;
  std::size_t samples = 1000;
  std::size_t pool_size = 100;
  bool weat = false;
  std::size_t max_permutations = 100000;
  std::optional<std::uint64_t> run_id;
};

void run_ceat(const Globals& g, const CeatOpts& o, RunRecord& run) {
  const fs::path out = require_out(g, "ceat");
  const ceat::WeatSpec spec = ceat::read_weat_spec(o.spec);
  run.inputs.emplace_back(o.spec);
  const EmbeddingMatrix emb = read_embeddings(o.embeddings, o.ids);
  run.inputs.emplace_back(o.embeddings);
  run.inputs.emplace_back(o.ids);
  const auto occurrences = ceat::occurrences_from_embeddings(emb);
  std::vector<std::string> words;
  for (const auto* set : {&spec.targets_x, &spec.targets_y, &spec.attributes_a, &spec.attributes_b})
    words.insert(words.end(), set->begin(), set->end());
  const std::uint64_t pool_seed = derive_seed(g.seed, {0});
  const std::uint64_t sample_seed = derive_seed(g.seed, {1});
  const auto pools = ceat::build_context_pools(occurrences, words, o.pool_size, pool_seed);
  const auto result = ceat::ceat_combine(pools, spec, o.samples, sample_seed);
  const std::uint64_t run_id = o.run_id.value_or(g.seed);
  Json j = io::to_json(result);
  j["run_id"] = run_id;
  // Only significant combined effects feed cross-run aggregation.
  if (result.p_value < kCeatAlpha) j["intrinsic"] = {{"ces", result.ces}};
  j["significant"] = result.p_value < kCeatAlpha;
  run.seeds = {{"seed", g.seed}, {"pool_seed", pool_seed}, {"sample_seed", sample_seed}};
  if (o.weat) {
    // Static test on the first pooled vector of each word.
    const auto first = [&](const std::vector<std::string>& ws) {
      ceat::VectorSet v;
      for (const auto& w : ws) v.push_back(pools.at(w).front());
      return v;
    };
    const ceat::ResolvedWeat rw{first(spec.targets_x), first(spec.targets_y), first(spec.attributes_a),
                                first(spec.attributes_b)};
    const std::uint64_t weat_seed = derive_seed(g.seed, {2});
    j["weat"] = io::to_json(ceat::weat_p_value(rw, o.max_permutations, weat_seed));
    run.seeds["weat_seed"] = weat_seed;
  }
  write_json(out, j);
  run.outputs.push_back(out);
  run.manifest_path = manifest_beside(out);
  run.config = {{"embeddings", o.embeddings}, {"ids", o.ids},         {"spec", o.spec},
                {"samples", o.samples},       {"pool_size", o.pool_size}, {"weat", o.weat},
                {"max_permutations", o.max_permutations}, {"run_id", run_id}};
}

// --------------------------------------------------------------- debias

struct DebiasOpts {
  std::string records;
  std::string strategy;
  std::string lexicon;
  std::string report;
  std::size_t n_words = 10;
  std::size_t iterations = 3;
};

void run_debias(const Globals& g, const DebiasOpts& o, RunRecord& run) {
  const fs::path out = require_out(g, "debias");
  static const std::set<std::string> strategies = {"scrub", "anon", "ca", "subsample", "oversample", "iter-scrub"};
  if (!strategies.contains(o.strategy)) throw AuditError(ErrorCode::InvalidArgument, "unknown strategy: " + o.strategy);
  const auto records = read_records(o.records);
  run.inputs.emplace_back(o.records);
  std::string lexicon_path = o.lexicon;
  const auto lexicon = [&] {
    if (lexicon_path.empty()) {
      if (const char* env = std::getenv("BIAS_AUDIT_LEXICON")) lexicon_path = env;
    }
    if (lexicon_path.empty())
      throw AuditError(ErrorCode::InvalidArgument, "--lexicon (or BIAS_AUDIT_LEXICON) required for " + o.strategy);
    run.inputs.emplace_back(lexicon_path);
    return read_lexicon(lexicon_path);
  };
  const std::uint64_t seed = derive_seed(g.seed, {hash_string(o.strategy)});
  debias::TransformResult result;
  Json extra = Json::object();
  const probe::ProbeConfig pc{.seed = derive_seed(seed, {1})};
  if (o.strategy == "scrub") {
    result = debias::scrub(records, lexicon());
  } else if (o.strategy == "anon") {
    result = debias::anonymize(records);
  } else if (o.strategy == "ca") {
    result = debias::counterfactual_augment(records, lexicon());
  } else if (o.strategy == "subsample") {
    result = debias::subsample(records, seed);
  } else if (o.strategy == "oversample") {
    result = debias::oversample(records, seed);
  } else {
    result = debias::iterative_scrub(records, o.n_words, o.iterations, pc, seed);
    extra["probe_accuracy_before"] = debias::bow_probe_accuracy(records, pc, derive_seed(seed, {2}));
    extra["probe_accuracy_after"] = debias::bow_probe_accuracy(result.records, pc, derive_seed(seed, {2}));
  }
  write_records(out, result.records);
  const fs::path report_path = o.report.empty() ? fs::path(out.string() + ".report.json") : fs::path(o.report);
  Json report = io::to_json(result.report);
  for (auto it = extra.begin(); it != extra.end(); ++it) report[it.key()] = it.value();
  write_json(report_path, report);
  run.outputs = {out, report_path};
  run.manifest_path = manifest_beside(out);
  run.config = {{"records", o.records},       {"strategy", o.strategy},     {"lexicon", lexicon_path},
                {"report", report_path.string()}, {"n_words", o.n_words}, {"iterations", o.iterations}};
  run.seeds = {{"seed", g.seed}, {"strategy_seed", seed}};
}

// --------------------------------------------------------------- pitman

struct PitmanOpts {
  std::string group_a;
  std::string group_b;
  std::size_t max_permutations = 100000;
};

void run_pitman(const Globals& g, const PitmanOpts& o, RunRecord& run, std::ostream& out) {
  const auto a = parse_values(o.group_a, run);
  const auto b = parse_values(o.group_b, run);
  if (a.empty() || b.empty()) throw AuditError(ErrorCode::EmptyGroup, "both groups need at least one value");
  const auto r = analysis::pitman_test(a, b, o.max_permutations, g.seed);
  Json j = io::to_json(r);
  j["n_a"] = a.size();
  j["n_b"] = b.size();
  j["mean_a"] = analysis::aggregate(a).mean;
  j["mean_b"] = analysis::aggregate(b).mean;
  if (g.out.empty()) {
    out << io::canonical_dump(j);
  } else {
    write_json(g.out, j);
    run.outputs.emplace_back(g.out);
    run.manifest_path = manifest_beside(g.out);
  }
  run.config = {{"group_a", o.group_a}, {"group_b", o.group_b}, {"max_permutations", o.max_permutations}};
  run.seeds = {{"seed", g.seed}};
}

// ------------------------------------------------------------ correlate

struct CorrelateOpts {
  std::string runs;
  std::string phase = "before";
};

void run_correlate(const Globals& g, const CorrelateOpts& o, RunRecord& run) {
  const fs::path out = require_out(g, "correlate");
  if (o.phase != "before" && o.phase != "after")
    throw AuditError(ErrorCode::InvalidArgument, "--phase must be before or after");
  std::error_code ec;
  if (!fs::is_directory(o.runs, ec)) throw IoError("not a directory: " + o.runs);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.runs)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".json" && !name.ends_with(".manifest.json") &&
        name != "manifest.json")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, analysis::SeedSeries> intrinsic;
  std::map<std::string, analysis::SeedSeries> extrinsic;
  const auto add = [](std::map<std::string, analysis::SeedSeries>& m, const std::string& name, std::uint64_t id,
                      const Json& v, const fs::path& file) {
    if (!v.is_number()) return;
    auto& s = m[name];
    s.metric = name;
    for (const auto& [seen, x] : s.values)
      if (seen == id)
        throw AuditError(ErrorCode::InvalidArgument,
                         "run_id " + std::to_string(id) + " reports " + name + " twice (" + file.string() + ")");
    s.values.emplace_back(id, v.get<double>());
  };
  for (const auto& f : files) {
    const Json j = read_json(f);
    run.inputs.push_back(f);
    if (!j.is_object() || !j.contains("run_id")) continue;
    if (!j.at("run_id").is_number_unsigned())
      throw AuditError(ErrorCode::InvalidArgument, "run_id must be a non-negative integer in " + f.string());
    const auto id = j.at("run_id").get<std::uint64_t>();
    if (j.contains("intrinsic") && j.at("intrinsic").is_object())
      for (auto it = j.at("intrinsic").begin(); it != j.at("intrinsic").end(); ++it)
        add(intrinsic, it.key(), id, it.value(), f);
    if (j.contains("extrinsic") && j.at("extrinsic").contains(o.phase))
      for (auto it = j.at("extrinsic").at(o.phase).begin(); it != j.at("extrinsic").at(o.phase).end(); ++it)
        add(extrinsic, it.key(), id, it.value(), f);
  }
  if (intrinsic.empty()) throw AuditError(ErrorCode::EmptySeries, "no intrinsic metrics under " + o.runs);
  if (extrinsic.empty()) throw AuditError(ErrorCode::EmptySeries, "no " + o.phase + " extrinsic metrics under " + o.runs);
  const auto cells = analysis::correlation_table(
      intrinsic, extrinsic, o.phase == "before" ? analysis::Phase::Before : analysis::Phase::After);
  std::ostringstream csv;
  csv << "intrinsic,extrinsic,phase,r2,n_points\n";
  for (const auto& c : cells)
    csv << c.intrinsic << ',' << c.extrinsic << ',' << analysis::to_string(c.phase) << ',' << io::format6(c.r2) << ','
        << c.n_points << '\n';
  write_text(out, csv.str());
  run.outputs.push_back(out);
  run.manifest_path = manifest_beside(out);
  run.config = {{"runs", o.runs}, {"phase", o.phase}};
}

// ------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string config;
};

std::string cell_file_name(const synth::CellResult& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03llu", static_cast<unsigned long long>(c.run_id));
  return std::string("cell_") + buf + "_" + c.strategy + "_seed" + std::to_string(c.seed) + ".json";
}

void run_simulate(const Globals& g, const SimulateOpts& o, RunRecord& run, std::ostream& err) {
  const fs::path dir = require_out(g, "simulate");
  synth::ExperimentConfig config =
      o.config.empty() ? synth::ExperimentConfig{} : io::experiment_config_from_json(read_json(o.config));
  if (!o.config.empty()) run.inputs.emplace_back(o.config);
  config.experiment_seed = g.seed;
  config.jobs = g.jobs;
  config.validate();
  if (!g.quiet)
    err << "simulate: " << config.strategies.size() << " strategies x " << config.seeds.size() << " seeds, "
        << config.jobs << " job(s)\n";
  const auto report = synth::run_experiment(config);

  std::error_code ec;
  fs::create_directories(dir / "cells", ec);
  if (ec) throw IoError("cannot create directory: " + (dir / "cells").string());
  for (const auto& c : report.cells) {
    Json j = io::to_json(c);
    j["intrinsic"] = {{"compression", c.compression}};
    Json before = Json::object();
    Json after = Json::object();
    for (const auto& [k, v] : synth::named_values(c.before)) before[k] = v;
    for (const auto& [k, v] : synth::named_values(c.after)) after[k] = v;
    j["extrinsic"] = {{"before", before}, {"after", after}};
    const fs::path p = dir / "cells" / cell_file_name(c);
    write_json(p, j);
    run.outputs.push_back(p);
  }
  write_json(dir / "report.json", io::to_json(report));
  std::ostringstream t1, t3;
  io::write_table1_csv(t1, report);
  io::write_table3_csv(t3, report);
  write_text(dir / "table1_before_after.csv", t1.str());
  write_text(dir / "table3_r2.csv", t3.str());
  run.outputs.push_back(dir / "report.json");
  run.outputs.push_back(dir / "table1_before_after.csv");
  run.outputs.push_back(dir / "table3_r2.csv");
  run.manifest_path = dir / "manifest.json";
  run.config = io::to_json(config);
  run.config["config_path"] = o.config;
  Json cell_seeds = Json::array();
  for (const auto& s : config.strategies)
    for (auto seed : config.seeds)
      cell_seeds.push_back({{"strategy", s},
                            {"seed", seed},
                            {"data_seed", derive_seed(config.experiment_seed, {seed})},
                            {"cell_seed", derive_seed(config.experiment_seed, {hash_string(s), seed})}});
  run.seeds = {{"seed", g.seed}, {"cells", cell_seeds}};
}

void write_manifest(const std::string& subcommand, const Globals& g, RunRecord& run, const std::string& started) {
  if (run.manifest_path.empty()) return;
  Json inputs = Json::array();
  for (const auto& p : run.inputs) inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  Json outputs = Json::array();
  for (const auto& p : run.outputs) outputs.push_back(p.string());
  if (!run.seeds.contains("seed")) run.seeds["seed"] = g.seed;
  Json m = {{"subcommand", subcommand},
            {"config", run.config},
            {"seeds", run.seeds},
            {"inputs", inputs},
            {"outputs", outputs},
            {"jobs", g.jobs},
            {"version", kVersion},
            {"started_at", started},
            {"finished_at", utc_now()}};
  write_json(run.manifest_path, m);
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    if (f.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(f.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gender bias audit toolkit: extrinsic metrics, MDL probing, CEAT, debiasing, analysis.", "bias-audit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for all randomness");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output path (directory for simulate)");
  app.add_flag("--quiet", g.quiet, "Suppress progress messages");

  AuditOpts ao;
  auto* audit = app.add_subcommand("audit", "Extrinsic bias metrics of a prediction file");
  audit->add_option("--records", ao.records, "records.jsonl with pred")->required();
  audit->add_option("--stats", ao.stats, "class,female_share CSV");
  audit->add_option("--stats-source", ao.stats_source, "training|external");
  audit->add_option("--metrics", ao.metrics, "Comma list of metrics");
  audit->add_option("--log-base", ao.log_base, "e|2");
  audit->add_option("--anti-records", ao.anti_records, "Anti-stereotypical split for the F1 difference");
  audit->add_option("--phase", ao.phase, "before|after");
  audit->add_option("--run-id", ao.run_id, "Run id for correlate (default: --seed)");

  MdlOpts mo;
  auto* pmdl = app.add_subcommand("probe-mdl", "Online codelength and compression of gender in embeddings");
  pmdl->add_option("--embeddings", mo.embeddings, "EMB1 matrix")->required();
  pmdl->add_option("--ids", mo.ids, "Row ids")->required();
  pmdl->add_option("--records", mo.records, "records.jsonl giving the gender of each id")->required();
  pmdl->add_option("--schedule", mo.schedule, "default or comma list of fractions");
  pmdl->add_option("--group-by", mo.group_by, "label: keep each label's examples contiguous");
  pmdl->add_option("--lr", mo.lr, "Probe learning rate");
  pmdl->add_option("--batch", mo.batch, "Probe batch size");
  pmdl->add_option("--epochs", mo.epochs, "Probe epochs per block");
  pmdl->add_option("--run-id", mo.run_id, "Run id for correlate (default: --seed)");

  CeatOpts co;
  auto* ceat_cmd = app.add_subcommand("ceat", "Contextualized embedding association test");
  ceat_cmd->add_option("--embeddings", co.embeddings, "EMB1 matrix")->required();
  ceat_cmd->add_option("--ids", co.ids, "word@occurrence ids")->required();
  ceat_cmd->add_option("--spec", co.spec, "JSON with targets_x, targets_y, attributes_a, attributes_b")->required();
  ceat_cmd->add_option("--samples", co.samples, "Number of effect-size samples");
  ceat_cmd->add_option("--pool-size", co.pool_size, "Context vectors kept per word");
  ceat_cmd->add_flag("--weat", co.weat, "Also run the static test with a permutation p-value");
  ceat_cmd->add_option("--max-permutations", co.max_permutations, "Permutation budget for --weat");
  ceat_cmd->add_option("--run-id", co.run_id, "Run id for correlate (default: --seed)");

  DebiasOpts dop;
  auto* debias_cmd = app.add_subcommand("debias", "Dataset-level debiasing transforms");
  debias_cmd->add_option("--records", dop.records, "records.jsonl")->required();
  debias_cmd->add_option("--strategy", dop.strategy, "scrub|anon|ca|subsample|oversample|iter-scrub")->required();
  debias_cmd->add_option("--lexicon", dop.lexicon, "Lexicon TSV (default: $BIAS_AUDIT_LEXICON)");
  debias_cmd->add_option("--report", dop.report, "Transform report path (default: <out>.report.json)");
  debias_cmd->add_option("--n-words", dop.n_words, "iter-scrub: words removed per gender per iteration");
  debias_cmd->add_option("--iterations", dop.iterations, "iter-scrub: iterations");

  PitmanOpts po;
  auto* pitman = app.add_subcommand("pitman", "Two-sided permutation test on group means");
  pitman->add_option("--group-a", po.group_a, "Comma list or file")->required();
  pitman->add_option("--group-b", po.group_b, "Comma list or file")->required();
  pitman->add_option("--max-permutations", po.max_permutations, "Enumeration / sampling budget");

  CorrelateOpts cro;
  auto* correlate = app.add_subcommand("correlate", "R^2 between intrinsic and extrinsic metrics across runs");
  correlate->add_option("--runs", cro.runs, "Directory of per-run metric JSON")->required();
  correlate->add_option("--phase", cro.phase, "before|after");

  SimulateOpts so;
  auto* simulate = app.add_subcommand("simulate", "Synthetic debias / retrain experiment");
  simulate->add_option("--config", so.config, "experiment.json (defaults when omitted)");

  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }

  const std::string started = utc_now();
  RunRecord run;
  std::string name;
  try {
    if (*audit) {
      name = "audit";
      run_audit(g, ao, run);
    } else if (*pmdl) {
      name = "probe-mdl";
      run_probe_mdl(g, mo, run);
    } else if (*ceat_cmd) {
      name = "ceat";
      run_ceat(g, co, run);
    } else if (*debias_cmd) {
      name = "debias";
      run_debias(g, dop, run);
    } else if (*pitman) {
      name = "pitman";
      run_pitman(g, po, run, out);
    } else if (*correlate) {
      name = "correlate";
      run_correlate(g, cro, run);
    } else if (*simulate) {
      name = "simulate";
      run_simulate(g, so, run, err);
    }
    write_manifest(name, g, run, started);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const AuditError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  if (!g.quiet) {
    if (name == "simulate")
      err << "wrote " << run.outputs.size() << " files under " << g.out << "\n";
    else
      for (const auto& p : run.outputs) err << "wrote " << p.string() << "\n";
  }
  return kExitOk;
}

}  // namespace bias_audit::cli
