#include "bias_audit/json_out.hpp"

#include "bias_audit/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

namespace bias_audit::io {

double round6(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;
}

namespace {

Json rounded(const Json& j) {
  switch (j.type()) {
    case Json::value_t::object: {
      Json out = Json::object();
      for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = rounded(it.value());
      return out;
    }
    case Json::value_t::array: {
      Json out = Json::array();
      for (const auto& v : j) out.push_back(rounded(v));
      return out;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) return nullptr;
      return round6(v);
    }
    default:
      return j;
  }
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json aggregate_json(const analysis::Aggregate& a) { return {{"mean", a.mean}, {"std", a.std}, {"n", a.n}}; }

[[noreturn]] void bad_config(const std::string& what) { throw AuditError(ErrorCode::InvalidConfig, what); }

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.contains(it.key())) bad_config("unknown key in " + where + ": " + it.key());
}

template <typename T>
void read_into(const Json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) bad_config(std::string(key) + " must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad_config(std::string(key) + " must be a number");
    }
    field = v.get<T>();
  } catch (const Json::exception& e) {
    bad_config(std::string(key) + ": " + e.what());
  }
}

}  // namespace

std::string canonical_dump(const Json& j) { return rounded(j).dump(2) + "\n"; }

std::string format6(std::optional<double> v) {
  if (!v) return "UNDEFINED";
  if (!std::isfinite(*v)) return "UNDEFINED";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, round6(*v));
  return std::string(buf, res.ptr);
}

Json to_json(const probe::ProbeConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"l2", c.l2}};
}

Json to_json(const extrinsic::GapReport& r) {
  Json gaps = Json::object();
  for (std::size_t i = 0; i < r.classes.size(); ++i) gaps[r.classes[i]] = optional_number(r.gaps[i]);
  Json out = {{"metric", std::string(extrinsic::to_string(r.metric))},
              {"gaps", gaps},
              {"sum_abs", r.sum_abs},
              {"pearson", r.pearson ? Json(*r.pearson) : Json("UNDEFINED")},
              {"skipped_classes", r.skipped_classes},
              {"unmapped_classes", r.unmapped_classes}};
  out["stats_source"] = r.stats_source ? Json(std::string(to_string(*r.stats_source))) : Json(nullptr);
  return out;
}

Json to_json(const extrinsic::DivergenceResult& r) {
  return {{"value", r.value}, {"skipped_cells", r.skipped_cells}};
}

Json to_json(const mdl::MdlReport& r) {
  Json out = {{"n", r.n},
              {"k", r.k},
              {"schedule", r.schedule},
              {"block_ends", r.block_ends},
              {"block_bits", r.block_bits},
              {"online_bits", r.online_bits},
              {"uniform_bits", r.uniform_bits},
              {"compression", r.compression},
              {"seed", r.seed},
              {"validation_fraction", r.validation_fraction},
              {"prob_clamp", r.prob_clamp},
              {"grouped", r.grouped}};
  out["probe_config"] = r.probe_config ? to_json(*r.probe_config) : Json(nullptr);
  return out;
}

Json to_json(const ceat::WeatResult& r) {
  return {{"effect_size", r.effect_size},
          {"effect_label", std::string(ceat::to_string(ceat::effect_label(r.effect_size)))},
          {"p_value", r.p_value},
          {"n_permutations_used", r.n_permutations_used},
          {"exact", r.exact}};
}

Json to_json(const ceat::CeatResult& r) {
  return {{"per_sample_es", r.per_sample_es},
          {"per_sample_var", r.per_sample_var},
          {"tau2", r.tau2},
          {"ces", r.ces},
          {"effect_label", std::string(ceat::to_string(ceat::effect_label(r.ces)))},
          {"p_value", r.p_value}};
}

Json to_json(const debias::TransformReport& r) {
  Json iterations = Json::array();
  for (const auto& it : r.iterations) {
    const auto words = [](const std::vector<debias::ScoredWord>& ws) {
      Json a = Json::array();
      for (const auto& w : ws) a.push_back({{"word", w.word}, {"weight", w.weight}});
      return a;
    };
    iterations.push_back({{"iteration", it.iteration},
                          {"probe_accuracy", it.probe_accuracy},
                          {"removed_female", words(it.removed_female)},
                          {"removed_male", words(it.removed_male)}});
  }
  return {{"strategy", r.strategy},
          {"records_in", r.records_in},
          {"records_out", r.records_out},
          {"tokens_removed", r.tokens_removed},
          {"tokens_swapped", r.tokens_swapped},
          {"entities_masked", r.entities_masked},
          {"unbalanced_labels", r.unbalanced_labels},
          {"iterations", iterations},
          {"seed", r.seed}};
}

Json to_json(const analysis::PermutationResult& r) {
  return {{"p_value", r.p_value}, {"permutations", r.permutations}, {"exact", r.exact}, {"alternative", "two-sided"}};
}

Json to_json(const analysis::CorrelationCell& c) {
  return {{"intrinsic", c.intrinsic},
          {"extrinsic", c.extrinsic},
          {"phase", std::string(analysis::to_string(c.phase))},
          {"r2", c.r2 ? Json(*c.r2) : Json("UNDEFINED")},
          {"n_points", c.n_points}};
}

Json to_json(const synth::SynthConfig& c) {
  return {{"n", c.n},
          {"n_test", c.n_test},
          {"d_obs", c.d_obs},
          {"d_rep", c.d_rep},
          {"k", c.k},
          {"gender_label_corr", c.gender_label_corr},
          {"gender_signal", c.gender_signal},
          {"implicit_signal", c.implicit_signal},
          {"class_separation", c.class_separation},
          {"noise_sigma", c.noise_sigma},
          {"train",
           {{"learning_rate", c.train.learning_rate},
            {"batch_size", c.train.batch_size},
            {"epochs", c.train.epochs}}},
          {"mdl_probe",
           {{"learning_rate", c.mdl_probe.learning_rate},
            {"batch_size", c.mdl_probe.batch_size},
            {"max_epochs", c.mdl_probe.max_epochs}}}};
}

Json to_json(const synth::ExperimentConfig& c) {
  return {{"synth", to_json(c.synth)},
          {"strategies", c.strategies},
          {"seeds", c.seeds},
          {"experiment_seed", c.experiment_seed},
          {"pitman_permutations", c.pitman_permutations}};
}

Json to_json(const synth::ExtrinsicMetrics& m) {
  Json out = Json::object();
  out["accuracy"] = m.accuracy;
  out["tpr_gap_sum"] = m.tpr_gap_sum;
  out["fpr_gap_sum"] = m.fpr_gap_sum;
  out["precision_gap_sum"] = m.precision_gap_sum;
  out["tpr_gap_pearson"] = m.tpr_gap_pearson ? Json(*m.tpr_gap_pearson) : Json("UNDEFINED");
  out["fpr_gap_pearson"] = m.fpr_gap_pearson ? Json(*m.fpr_gap_pearson) : Json("UNDEFINED");
  out["precision_gap_pearson"] = m.precision_gap_pearson ? Json(*m.precision_gap_pearson) : Json("UNDEFINED");
  out["independence"] = m.independence;
  out["separation"] = m.separation;
  out["sufficiency"] = m.sufficiency;
  return out;
}

Json to_json(const synth::CellResult& c) {
  return {{"strategy", c.strategy},
          {"seed", c.seed},
          {"run_id", c.run_id},
          {"train_size", c.train_size},
          {"test_size", c.test_size},
          {"compression", c.compression},
          {"mdl", to_json(c.mdl)},
          {"before", to_json(c.before)},
          {"after", to_json(c.after)},
          {"extractor_frozen", c.extractor_frozen}};
}

Json to_json(const synth::ExperimentReport& r) {
  Json cells = Json::array();
  for (const auto& c : r.cells) cells.push_back(to_json(c));
  Json summary = Json::array();
  for (const auto& s : r.summary)
    summary.push_back({{"strategy", s.strategy},
                       {"metric", s.metric},
                       {"before", aggregate_json(s.before)},
                       {"after", aggregate_json(s.after)},
                       {"p_before", optional_number(s.p_before)},
                       {"p_after", optional_number(s.p_after)}});
  Json out = {{"config", to_json(r.config)}, {"cells", cells}, {"summary", summary}};
  if (r.correlations_defined) {
    Json before = Json::array();
    Json after = Json::array();
    for (const auto& c : r.correlations_before) before.push_back(to_json(c));
    for (const auto& c : r.correlations_after) after.push_back(to_json(c));
    out["correlations"] = {{"before", before}, {"after", after}};
  } else {
    out["correlations"] = "UNDEFINED";
  }
  return out;
}

synth::ExperimentConfig experiment_config_from_json(const Json& j) {
  synth::ExperimentConfig c;
  check_keys(j, {"synth", "strategies", "seeds", "pitman_permutations"}, "experiment config");
  if (j.contains("synth")) {
    const Json& s = j.at("synth");
    check_keys(s,
               {"n", "n_test", "d_obs", "d_rep", "k", "gender_label_corr", "gender_signal", "implicit_signal",
                "class_separation", "noise_sigma", "train", "mdl_probe"},
               "synth");
    auto& sc = c.synth;
    read_into(s, "n", sc.n);
    read_into(s, "n_test", sc.n_test);
    read_into(s, "d_obs", sc.d_obs);
    read_into(s, "d_rep", sc.d_rep);
    read_into(s, "k", sc.k);
    read_into(s, "gender_label_corr", sc.gender_label_corr);
    read_into(s, "gender_signal", sc.gender_signal);
    read_into(s, "implicit_signal", sc.implicit_signal);
    read_into(s, "class_separation", sc.class_separation);
    read_into(s, "noise_sigma", sc.noise_sigma);
    if (s.contains("train")) {
      const Json& t = s.at("train");
      check_keys(t, {"learning_rate", "batch_size", "epochs"}, "synth.train");
      read_into(t, "learning_rate", sc.train.learning_rate);
      read_into(t, "batch_size", sc.train.batch_size);
      read_into(t, "epochs", sc.train.epochs);
    }
    if (s.contains("mdl_probe")) {
      const Json& t = s.at("mdl_probe");
      check_keys(t, {"learning_rate", "batch_size", "max_epochs"}, "synth.mdl_probe");
      read_into(t, "learning_rate", sc.mdl_probe.learning_rate);
      read_into(t, "batch_size", sc.mdl_probe.batch_size);
      read_into(t, "max_epochs", sc.mdl_probe.max_epochs);
    }
  }
  if (j.contains("strategies")) {
    if (!j.at("strategies").is_array()) bad_config("strategies must be an array");
    c.strategies.clear();
    for (const auto& v : j.at("strategies")) {
      if (!v.is_string()) bad_config("strategies must be strings");
      c.strategies.push_back(v.get<std::string>());
    }
  }
  if (j.contains("seeds")) {
    if (!j.at("seeds").is_array()) bad_config("seeds must be an array");
    c.seeds.clear();
    for (const auto& v : j.at("seeds")) {
      if (!v.is_number_unsigned()) bad_config("seeds must be non-negative integers");
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  read_into(j, "pitman_permutations", c.pitman_permutations);
  c.validate();
  return c;
}

void write_table1_csv(std::ostream& out, const synth::ExperimentReport& r) {
  out << "strategy,metric,before_mean,before_std,after_mean,after_std,n,p_before,p_after\n";
  for (const auto& s : r.summary) {
    out << s.strategy << ',' << s.metric << ',' << format6(s.before.mean) << ',' << format6(s.before.std) << ','
        << format6(s.after.mean) << ',' << format6(s.after.std) << ',' << s.before.n << ','
        << format6(s.p_before) << ',' << format6(s.p_after) << '\n';
  }
}

void write_table3_csv(std::ostream& out, const synth::ExperimentReport& r) {
  out << "intrinsic,extrinsic,before_r2,after_r2,n_points\n";
  if (!r.correlations_defined) {
    out << "compression,UNDEFINED,UNDEFINED,UNDEFINED,0\n";
    return;
  }
  for (const auto& b : r.correlations_before) {
    std::optional<double> after;
    bool found = false;
    for (const auto& a : r.correlations_after) {
      if (a.intrinsic == b.intrinsic && a.extrinsic == b.extrinsic) {
        after = a.r2;
        found = true;
      }
    }
    out << b.intrinsic << ',' << b.extrinsic << ',' << format6(b.r2) << ',' << (found ? format6(after) : "UNDEFINED")
        << ',' << b.n_points << '\n';
  }
}

}  // namespace bias_audit::io
