#include "bias_audit/cli.hpp"
#include "bias_audit/error.hpp"
#include "bias_audit/json_out.hpp"
#include "cli_fixtures.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace fixtures;
using bias_audit::io::Json;

TEST_CASE("sha256 of a known input") {
  const auto dir = fresh_dir("cli_sha");
  spit(dir / "abc", "abc");
  CHECK(cli::sha256_file(dir / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK_THROWS_AS(cli::sha256_file(dir / "missing"), IoError);
}

TEST_CASE("version and help") {
  auto r = run({"--version"});
  CHECK(r.code == 0);
  CHECK(r.out == std::string(cli::kVersion) + "\n");
  r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("simulate") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with usage text") {
  auto r = run({"audit", "--out", "x.json"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--records") != std::string::npos);
  r = run({});
  CHECK(r.code == 1);
  r = run({"frobnicate"});
  CHECK(r.code == 1);
  r = run({"pitman", "--group-a", "1,2", "--group-b", "3", "--jobs", "0"});
  CHECK(r.code == 1);
}

TEST_CASE("missing input exits 2") {
  const auto dir = fresh_dir("cli_io");
  const auto r = run({"audit", "--records", (dir / "absent.jsonl").string(), "--out", (dir / "o.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error:", 0) == 0);
  CHECK_FALSE(fs::exists(dir / "o.json.manifest.json"));
}

TEST_CASE("validation failures exit 1 with a single diagnostic line") {
  const auto dir = fresh_dir("cli_validation");
  spit(dir / "bad.jsonl", "{\"id\":\"a\",\"label\":\"x\",\"gender\":\"F\"}\nnot json\n");
  const auto r = run({"audit", "--records", (dir / "bad.jsonl").string(), "--out", (dir / "o.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("MALFORMED_LINE") != std::string::npos);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("audit writes a report and a manifest with input digests") {
  const auto dir = fresh_dir("cli_audit");
  const auto in = write_inputs(dir);
  const auto out = dir / "audit.json";
  const auto r = run({"audit", "--records", in.records.string(), "--stats", in.stats.string(), "--log-base", "2",
                      "--out", out.string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("wrote") != std::string::npos);
  const Json j = Json::parse(slurp(out));
  CHECK(j.at("log_base") == "2");
  CHECK(j.at("extrinsic").at("before").contains("independence"));
  CHECK(j.at("extrinsic").at("before").contains("tpr_gap_pearson"));
  CHECK(j.at("gaps").at("tpr").at("stats_source") == "external");

  const Json m = Json::parse(slurp(dir / "audit.json.manifest.json"));
  CHECK(m.at("subcommand") == "audit");
  CHECK(m.at("version") == cli::kVersion);
  REQUIRE(m.at("inputs").size() == 2);
  for (const auto& input : m.at("inputs"))
    CHECK(input.at("sha256") == cli::sha256_file(input.at("path").get<std::string>()));
  CHECK(m.contains("started_at"));
  CHECK(m.contains("finished_at"));
}

TEST_CASE("audit without predictions is a validation error") {
  const auto dir = fresh_dir("cli_nopred");
  spit(dir / "r.jsonl", "{\"id\":\"a\",\"label\":\"x\",\"gender\":\"F\"}\n");
  const auto r = run({"audit", "--records", (dir / "r.jsonl").string(), "--out", (dir / "o.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("MISSING_PRED") != std::string::npos);
}

TEST_CASE("pitman prints to stdout without --out") {
  const auto r = run({"pitman", "--group-a", "0,0", "--group-b", "1,1"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j.at("p_value").get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(j.at("exact") == true);
}

TEST_CASE("debias reads the lexicon from the environment") {
  const auto dir = fresh_dir("cli_env");
  const auto in = write_inputs(dir);
  ::setenv("BIAS_AUDIT_LEXICON", in.lexicon.c_str(), 1);
  const auto r = run({"debias", "--records", in.texts.string(), "--strategy", "scrub", "--quiet", "--out",
                      (dir / "s.jsonl").string()});
  ::unsetenv("BIAS_AUDIT_LEXICON");
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  const auto recs = read_records(dir / "s.jsonl");
  for (const auto& rec : recs) {
    CHECK(rec.text->find("She ") == std::string::npos);
    CHECK(rec.text->find(" his ") == std::string::npos);
  }
  const Json report = Json::parse(slurp(dir / "s.jsonl.report.json"));
  CHECK(report.at("tokens_removed").get<int>() > 0);
  const auto no_lex = run({"debias", "--records", in.texts.string(), "--strategy", "scrub", "--out",
                           (dir / "t.jsonl").string()});
  CHECK(no_lex.code == 1);
}

TEST_CASE("every subcommand succeeds and writes its manifest") {
  const auto dir = fresh_dir("cli_all");
  const auto in = write_inputs(dir);
  for (const auto& inv : invocations(in, dir / "out", "1")) {
    CAPTURE(inv.name);
    const auto r = run(inv.args);
    CHECK_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(inv.output));
    const fs::path manifest =
        inv.name == "simulate" ? inv.output / "manifest.json" : fs::path(inv.output.string() + ".manifest.json");
    CHECK(fs::exists(manifest));
  }
  const Json sim = Json::parse(slurp(dir / "out" / "sim" / "report.json"));
  CHECK(sim.at("cells").size() == 12);
  const std::string t1 = slurp(dir / "out" / "sim" / "table1_before_after.csv");
  CHECK(t1.rfind("strategy,metric,before_mean", 0) == 0);
  const std::string r2 = slurp(dir / "out" / "r2.csv");
  CHECK(r2.rfind("intrinsic,extrinsic,phase,r2,n_points\n", 0) == 0);
  CHECK(r2.find("compression,independence,after,") != std::string::npos);
  const Json ceat = Json::parse(slurp(dir / "out" / "ceat.json"));
  CHECK(ceat.at("significant") == (ceat.at("p_value").get<double>() < 0.05));
  CHECK(ceat.contains("intrinsic") == ceat.at("significant").get<bool>());
  const Json iter = Json::parse(slurp(dir / "out" / "debias_iter-scrub.jsonl.report.json"));
  CHECK(iter.contains("probe_accuracy_before"));
  CHECK(iter.at("iterations").size() == 2);
}

TEST_CASE("outputs are byte-identical across runs and job counts") {
  const auto dir = fresh_dir("cli_repro");
  const auto in = write_inputs(dir);
  for (const auto& [tag, jobs] : {std::pair{"a", "1"}, std::pair{"b", "1"}, std::pair{"c", "3"}})
    for (const auto& inv : invocations(in, dir / tag, jobs)) REQUIRE(run(inv.args).code == 0);
  const auto a = output_bytes(dir / "a"), b = output_bytes(dir / "b"), c = output_bytes(dir / "c");
  CHECK(a.size() > 10);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("correlate rejects a directory without metric files") {
  const auto dir = fresh_dir("cli_corr");
  const auto r = run({"correlate", "--runs", dir.string(), "--out", (dir / "x.csv").string()});
  CHECK(r.code == 1);
  const auto missing = run({"correlate", "--runs", (dir / "nope").string(), "--out", (dir / "x.csv").string()});
  CHECK(missing.code == 2);
}
