#pragma once

// Small input files for exercising every subcommand end to end.

#include "bias_audit/cli.hpp"
#include "bias_audit/core_model.hpp"
#include "bias_audit/rng.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

namespace fs = std::filesystem;
using namespace bias_audit;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

inline Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "bias-audit");
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

inline fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bias_audit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

inline void spit(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

struct Inputs {
  fs::path records;       // labelled predictions
  fs::path anti_records;  // second split for the F1 difference
  fs::path stats;
  fs::path emb, ids, emb_records;  // gender probing
  fs::path ctx_emb, ctx_ids, spec;  // CEAT
  fs::path texts;                   // debiasing
  fs::path lexicon;
  fs::path group_a, group_b;
  fs::path experiment;
};

/// Writes a deterministic set of inputs under `dir`.
inline Inputs write_inputs(const fs::path& dir) {
  Inputs in;
  Rng rng(20240601);
  const std::vector<std::string> labels = {"doctor", "nurse", "pilot", "teacher"};
  const double share[] = {0.3, 0.9, 0.1, 0.7};

  const auto prediction_records = [&](double flip) {
    std::vector<LabeledRecord> recs;
    for (int i = 0; i < 240; ++i) {
      LabeledRecord r;
      r.id = "p" + std::to_string(i);
      const std::size_t y = uniform_index(rng, labels.size());
      r.label = labels[y];
      r.gender = uniform_real(rng) < share[y] ? Gender::F : Gender::M;
      const bool wrong = uniform_real(rng) < (r.gender == Gender::F ? flip : flip / 2);
      r.pred = wrong ? labels[(y + 1) % labels.size()] : labels[y];
      recs.push_back(r);
    }
    return recs;
  };
  in.records = dir / "records.jsonl";
  write_records(in.records, prediction_records(0.2));
  in.anti_records = dir / "anti.jsonl";
  write_records(in.anti_records, prediction_records(0.5));

  in.stats = dir / "stats.csv";
  spit(in.stats, "class,female_share\ndoctor,0.3\nnurse,0.9\npilot,0.1\nteacher,0.7\n");

  {
    const std::size_t n = 200, d = 6;
    FloatMatrix m(n, d);
    std::vector<std::string> ids;
    std::vector<LabeledRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
      LabeledRecord r;
      r.id = "e" + std::to_string(i);
      r.label = labels[i % labels.size()];
      r.gender = i % 2 ? Gender::M : Gender::F;
      for (std::size_t j = 0; j < d; ++j) m(i, j) = static_cast<float>(standard_normal(rng));
      m(i, 0) += r.gender == Gender::F ? 1.5f : -1.5f;
      ids.push_back(r.id);
      recs.push_back(r);
    }
    in.emb = dir / "emb.bin";
    in.ids = dir / "emb.ids";
    write_embeddings(EmbeddingMatrix(ids, m), in.emb, in.ids);
    in.emb_records = dir / "emb_records.jsonl";
    write_records(in.emb_records, recs);
  }

  {
    const std::vector<std::string> words = {"career", "salary", "home", "family", "john", "paul", "amy", "joan"};
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    for (std::size_t w = 0; w < words.size(); ++w)
      for (int occ = 0; occ < 5; ++occ) {
        ids.push_back(words[w] + "@" + std::to_string(occ));
        std::vector<float> v(5);
        for (auto& x : v) x = static_cast<float>(standard_normal(rng));
        v[0] += (w < 2 || (w >= 4 && w < 6)) ? 2.0f : -2.0f;
        rows.push_back(v);
      }
    FloatMatrix m(static_cast<Eigen::Index>(rows.size()), 5);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < 5; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    in.ctx_emb = dir / "ctx.bin";
    in.ctx_ids = dir / "ctx.ids";
    write_embeddings(EmbeddingMatrix(ids, m), in.ctx_emb, in.ctx_ids);
    in.spec = dir / "spec.json";
    spit(in.spec,
         R"({"targets_x": ["career", "salary"], "targets_y": ["home", "family"],)"
         R"( "attributes_a": ["john", "paul"], "attributes_b": ["amy", "joan"]})");
  }

  {
    const std::vector<std::string> fem = {"She said her wife is a doctor.", "Mary and her sister work as nurses.",
                                          "Mrs. Lee thanked her mother.", "The woman said she would fly."};
    const std::vector<std::string> masc = {"He said his husband is a doctor.", "John and his brother work as nurses.",
                                           "Mr. Lee thanked his father.", "The man said he would fly."};
    std::vector<LabeledRecord> recs;
    for (int i = 0; i < 40; ++i) {
      LabeledRecord r;
      r.id = "t" + std::to_string(100 + i);
      const bool f = i % 3 != 0;
      r.gender = f ? Gender::F : Gender::M;
      r.text = (f ? fem : masc)[static_cast<std::size_t>(i) % 4];
      r.label = labels[static_cast<std::size_t>(i) % 4];
      if (r.text->rfind("Mary", 0) == 0) r.entities = std::vector<EntitySpan>{{0, 4}};
      else if (r.text->rfind("John", 0) == 0) r.entities = std::vector<EntitySpan>{{0, 4}};
      else r.entities = std::vector<EntitySpan>{};
      recs.push_back(r);
    }
    in.texts = dir / "texts.jsonl";
    write_records(in.texts, recs);
  }
  in.lexicon = fs::path(BIAS_AUDIT_SOURCE_DIR) / "data" / "default_lexicon.tsv";

  in.group_a = dir / "a.txt";
  in.group_b = dir / "b.txt";
  spit(in.group_a, "0.1\n0.4\n0.35\n0.8\n0.2\n0.55\n0.3\n");
  spit(in.group_b, "0.9\n1.1\n0.7\n1.3\n0.95\n1.2\n0.6\n");

  in.experiment = dir / "experiment.json";
  spit(in.experiment, R"({"synth": {"n": 300, "n_test": 300, "d_obs": 6, "d_rep": 4, "k": 3,)"
                      R"( "train": {"epochs": 3}, "mdl_probe": {"max_epochs": 5}},)"
                      R"( "strategies": ["none", "subsample", "oversample", "scrub-analog"],)"
                      R"( "seeds": [0, 1, 2], "pitman_permutations": 500})");
  return in;
}

/// One command line per subcommand writing under `out`; the last element
/// names the primary output file or directory.
struct Invocation {
  std::string name;
  std::vector<std::string> args;
  fs::path output;
};

inline std::vector<Invocation> invocations(const Inputs& in, const fs::path& out, const std::string& jobs) {
  const auto s = [](const fs::path& p) { return p.string(); };
  std::vector<Invocation> v;
  v.push_back({"audit",
               {"audit", "--records", s(in.records), "--stats", s(in.stats), "--anti-records", s(in.anti_records),
                "--seed", "3", "--jobs", jobs, "--quiet", "--out", s(out / "audit.json")},
               out / "audit.json"});
  v.push_back({"probe-mdl",
               {"probe-mdl", "--embeddings", s(in.emb), "--ids", s(in.ids), "--records", s(in.emb_records), "--seed",
                "3", "--jobs", jobs, "--quiet", "--out", s(out / "mdl.json")},
               out / "mdl.json"});
  v.push_back({"ceat",
               {"ceat", "--embeddings", s(in.ctx_emb), "--ids", s(in.ctx_ids), "--spec", s(in.spec), "--samples", "50",
                "--pool-size", "4", "--weat", "--seed", "3", "--jobs", jobs, "--quiet", "--out", s(out / "ceat.json")},
               out / "ceat.json"});
  for (const char* strategy : {"scrub", "anon", "ca", "subsample", "oversample", "iter-scrub"})
    v.push_back({std::string("debias ") + strategy,
                 {"debias", "--records", s(in.texts), "--strategy", strategy, "--lexicon", s(in.lexicon),
                  "--n-words", "2", "--iterations", "2", "--seed", "3", "--jobs", jobs, "--quiet", "--out",
                  s(out / (std::string("debias_") + strategy + ".jsonl"))},
                 out / (std::string("debias_") + strategy + ".jsonl")});
  v.push_back({"pitman",
               {"pitman", "--group-a", s(in.group_a), "--group-b", s(in.group_b), "--max-permutations", "1000",
                "--seed", "3", "--jobs", jobs, "--quiet", "--out", s(out / "pitman.json")},
               out / "pitman.json"});
  v.push_back({"simulate",
               {"simulate", "--config", s(in.experiment), "--seed", "3", "--jobs", jobs, "--quiet", "--out",
                s(out / "sim")},
               out / "sim"});
  v.push_back({"correlate",
               {"correlate", "--runs", s(out / "sim" / "cells"), "--phase", "after", "--seed", "3", "--jobs", jobs,
                "--quiet", "--out", s(out / "r2.csv")},
               out / "r2.csv"});
  return v;
}

/// Every file under `root` except run manifests (which carry timestamps),
/// keyed by relative path.
inline std::map<std::string, std::string> output_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name == "manifest.json" || name.ends_with(".manifest.json")) continue;
    files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

}  // namespace fixtures
