#include "bias_audit/core_model.hpp"
#include "bias_audit/error.hpp"
#include "bias_audit/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bias_audit;
namespace fs = std::filesystem;

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

std::vector<LabeledRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_records(in);
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bias_audit_core_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

std::string emb_header(std::uint32_t n, std::uint32_t d) {
  std::string s = "EMB1";
  for (std::uint32_t v : {n, d})
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  return s;
}

std::string floats_le(const std::vector<float>& v) {
  std::string s;
  for (float f : v) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  return s;
}

}  // namespace

TEST_CASE("minimal record parses with no optional fields") {
  const auto recs = parse(R"({"id":"a","label":"nurse","gender":"F"})" "\n");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].id == "a");
  CHECK(recs[0].label == "nurse");
  CHECK(recs[0].gender == Gender::F);
  CHECK_FALSE(recs[0].text.has_value());
  CHECK_FALSE(recs[0].pred.has_value());
  CHECK_FALSE(recs[0].probs.has_value());
}

TEST_CASE("record parsing errors are typed") {
  CHECK(code_of([] { parse("{\"id\":\"a\",\"label\":\"x\",\"gender\":\"F\"}\n{\"id\":\"a\",\"label\":\"y\",\"gender\":\"M\"}\n"); }) ==
        ErrorCode::DuplicateId);
  CHECK(code_of([] {
          parse(R"({"id":"a","label":"nurse","gender":"F","probs":{"nurse":0.6,"doctor":0.5}})" "\n");
        }) == ErrorCode::InvalidProbs);
  CHECK(code_of([] { parse("{\"id\":\"a\",\"label\":\"x\"\n"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] { parse(R"({"id":"a","label":"x","gender":"X"})" "\n"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] { parse(R"({"label":"x","gender":"F"})" "\n"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] {
          parse(R"({"id":"a","text":"abc","label":"x","gender":"F","entities":[[1,9]]})" "\n");
        }) == ErrorCode::SpanOutOfBounds);
  CHECK(code_of([] {
          parse(R"({"id":"a","text":"abcdef","label":"x","gender":"F","entities":[[0,3],[2,4]]})" "\n");
        }) == ErrorCode::InvalidSpans);
}

TEST_CASE("malformed line error names the line number") {
  try {
    parse(R"({"id":"a","label":"x","gender":"F"})" "\n\nnot json\n");
    FAIL("expected error");
  } catch (const AuditError& e) {
    CHECK(e.code() == ErrorCode::MalformedLine);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("probability sums within 1e-6 are accepted") {
  const auto recs = parse(R"({"id":"a","label":"x","gender":"M","pred":"x","probs":{"x":0.7000005,"y":0.3}})" "\n");
  CHECK(recs[0].probs->at("x") == doctest::Approx(0.7000005));
}

TEST_CASE("records round-trip through write and parse") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabeledRecord> recs;
    const std::size_t n = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < n; ++i) {
      LabeledRecord r;
      r.id = "r" + std::to_string(trial) + "_" + std::to_string(i) + (i % 2 ? "\"q\"" : "\xc3\xa9");
      r.label = uniform_index(rng, 2) ? "doctor" : "nurse";
      r.gender = uniform_index(rng, 2) ? Gender::M : Gender::F;
      if (uniform_index(rng, 2)) {
        r.text = "Mary said \"hi\"\n\tto \xe2\x82\xac Bob";
        if (uniform_index(rng, 2)) r.entities = std::vector<EntitySpan>{{0, 4}, {23, 26}};
      }
      if (uniform_index(rng, 2)) r.pred = "nurse";
      if (uniform_index(rng, 2)) {
        const double p = uniform_real(rng);
        r.probs = std::map<std::string, double>{{"doctor", p}, {"nurse", 1.0 - p}};
      }
      recs.push_back(r);
    }
    std::ostringstream out;
    write_records(out, recs);
    CHECK(parse(out.str()) == recs);
  }
}

TEST_CASE("prediction table class ordering") {
  std::vector<LabeledRecord> recs(2);
  recs[0] = {"1", std::nullopt, "b", Gender::F, "a", std::nullopt, std::nullopt};
  recs[1] = {"2", std::nullopt, "a", Gender::M, "b", std::nullopt, std::nullopt};
  CHECK(to_prediction_table(recs).classes() == std::vector<std::string>{"a", "b"});
  const auto t = to_prediction_table(recs, std::vector<std::string>{"b", "a"});
  CHECK(t.classes() == std::vector<std::string>{"b", "a"});
  CHECK(t.rows()[0].gold == 0);
  CHECK(t.rows()[0].pred == 1);
  CHECK(to_prediction_table(recs).rows()[0].gold == 1);

  auto missing = recs;
  missing[1].pred.reset();
  CHECK(code_of([&] { to_prediction_table(missing); }) == ErrorCode::MissingPred);
  CHECK(code_of([&] { to_prediction_table(recs, std::vector<std::string>{"a", "c"}); }) == ErrorCode::UnknownClass);
}

TEST_CASE("prediction table probabilities follow class order") {
  std::vector<LabeledRecord> recs(1);
  recs[0] = {"1", std::nullopt, "b", Gender::F, "a", std::map<std::string, double>{{"a", 0.25}, {"b", 0.75}},
             std::nullopt};
  const auto t = to_prediction_table(recs, std::vector<std::string>{"b", "a"});
  REQUIRE(t.rows()[0].probs.has_value());
  CHECK((*t.rows()[0].probs)[0] == 0.75);
  CHECK((*t.rows()[0].probs)[1] == 0.25);
}

TEST_CASE("prediction table invariants") {
  CHECK(code_of([] { PredictionTable({"a"}, {}); }) == ErrorCode::UnknownClass);
  CHECK(code_of([] { PredictionTable({"a", "a"}, {}); }) == ErrorCode::UnknownClass);
  CHECK(code_of([] { PredictionTable({"a", "b"}, {{0, 2, Gender::F, std::nullopt}}); }) == ErrorCode::UnknownClass);
  CHECK(code_of([] { PredictionTable({"a", "b"}, {{0, 1, Gender::F, std::vector<double>{0.5, 0.6}}}); }) ==
        ErrorCode::InvalidProbs);
}

TEST_CASE("embedding file layout and errors") {
  const auto dir = temp_dir("emb");
  write_bytes(dir / "ok.emb", emb_header(2, 3) + floats_le({1, 2, 3, 4, 5, 6}));
  write_bytes(dir / "two.ids", "x\ny\n");
  const auto m = read_embeddings(dir / "ok.emb", dir / "two.ids");
  CHECK(m.rows() == 2);
  CHECK(m.dim() == 3);
  CHECK(m.data()(1, 2) == 6.0f);
  CHECK(m.ids() == std::vector<std::string>{"x", "y"});

  write_bytes(dir / "one.ids", "x\n");
  CHECK(code_of([&] { read_embeddings(dir / "ok.emb", dir / "one.ids"); }) == ErrorCode::DimMismatch);
  write_bytes(dir / "magic.emb", "EMB2" + emb_header(2, 3).substr(4) + floats_le({1, 2, 3, 4, 5, 6}));
  CHECK(code_of([&] { read_embeddings(dir / "magic.emb", dir / "two.ids"); }) == ErrorCode::BadMagic);
  write_bytes(dir / "short.emb", emb_header(2, 3) + floats_le({1, 2, 3, 4, 5}));
  CHECK(code_of([&] { read_embeddings(dir / "short.emb", dir / "two.ids"); }) == ErrorCode::TruncatedPayload);
  write_bytes(dir / "nan.emb", emb_header(2, 3) + floats_le({1, 2, 3, 4, 5, NAN}));
  CHECK(code_of([&] { read_embeddings(dir / "nan.emb", dir / "two.ids"); }) == ErrorCode::NonFiniteValue);
  CHECK_THROWS_AS(read_embeddings(dir / "absent.emb", dir / "two.ids"), IoError);
}

TEST_CASE("embedding write then read is bitwise identical") {
  const auto dir = temp_dir("emb_rt");
  Rng rng(11);
  FloatMatrix data(5, 7);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 7; ++j) data(i, j) = static_cast<float>(standard_normal(rng) * 1e3);
  std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  write_embeddings(EmbeddingMatrix(ids, data), dir / "m.emb", dir / "m.ids");
  const auto back = read_embeddings(dir / "m.emb", dir / "m.ids");
  CHECK(back.ids() == ids);
  CHECK(std::memcmp(back.data().data(), data.data(), sizeof(float) * 35) == 0);
  write_embeddings(back, dir / "n.emb", dir / "n.ids");
  std::ifstream a(dir / "m.emb", std::ios::binary), b(dir / "n.emb", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  CHECK(sa.size() == 12 + 35 * 4);
}

TEST_CASE("lexicon parsing, normalization and swap map") {
  std::istringstream in(
      "# comment\n"
      "pair\tShe\the\n"
      "pair\ther\thim\n"
      "pair\ther\this\n"
      "gendered_f\tMrs\n"
      "female_name\tMary\n"
      "male_name\tjohn\n");
  const auto lex = parse_lexicon(in);
  CHECK(lex.female_names().contains("mary"));
  CHECK(lex.gendered_terms().at("she") == Gender::F);
  CHECK(lex.gendered_terms().at("he") == Gender::M);
  CHECK(lex.gendered_terms().at("mrs") == Gender::F);
  CHECK(lex.swap_map().at("her") == "him");
  CHECK(lex.swap_map().at("his") == "her");
  CHECK(lex.swap_map().at("him") == "her");
  CHECK(lex.is_scrubbable("john"));
  CHECK_FALSE(lex.is_scrubbable("doctor"));

  std::ostringstream out;
  write_lexicon(out, lex);
  std::istringstream again(out.str());
  CHECK(parse_lexicon(again) == lex);
}

TEST_CASE("lexicon conflicts are rejected") {
  std::istringstream both("gendered_f\tx\ngendered_m\tx\n");
  CHECK(code_of([&] { parse_lexicon(both); }) == ErrorCode::InvalidLexicon);
  std::istringstream name_term("female_name\tsam\nmale_name\tsam\n");
  CHECK(code_of([&] { parse_lexicon(name_term); }) == ErrorCode::InvalidLexicon);
  std::istringstream bad_cat("noun\tx\n");
  CHECK(code_of([&] { parse_lexicon(bad_cat); }) == ErrorCode::InvalidLexicon);
}

TEST_CASE("shipped default lexicon loads and covers the listed examples") {
  const auto lex = read_lexicon(fs::path(BIAS_AUDIT_SOURCE_DIR) / "data" / "default_lexicon.tsv");
  for (const char* w : {"he", "she", "husband", "wife", "mr", "mrs"}) CHECK(lex.is_scrubbable(w));
}

TEST_CASE("class stats csv") {
  std::istringstream in("class,female_share\nnurse,0.9\nnurse aide,0.25\n");
  const auto s = parse_class_stats(in, StatsSource::External);
  CHECK(s.female_share.at("nurse") == 0.9);
  CHECK(s.source == StatsSource::External);
  std::istringstream bad("class,female_share\nnurse,1.5\n");
  CHECK(code_of([&] { parse_class_stats(bad, StatsSource::External); }) == ErrorCode::InvalidStats);
  std::istringstream dup("class,female_share\nx,0.1\nx,0.2\n");
  CHECK(code_of([&] { parse_class_stats(dup, StatsSource::External); }) == ErrorCode::InvalidStats);

  const auto dir = temp_dir("stats");
  ClassStats st{{{"doctor", 0.3}, {"nurse", 0.1 + 0.2}}, StatsSource::TrainingSet};
  write_class_stats(dir / "s.csv", st);
  CHECK(read_class_stats(dir / "s.csv", StatsSource::TrainingSet) == st);
}

TEST_CASE("training class stats") {
  std::vector<LabeledRecord> recs = {{"1", {}, "a", Gender::F, {}, {}, {}},
                                     {"2", {}, "a", Gender::M, {}, {}, {}},
                                     {"3", {}, "a", Gender::F, {}, {}, {}},
                                     {"4", {}, "b", Gender::M, {}, {}, {}}};
  const auto s = training_class_stats(recs);
  CHECK(s.female_share.at("a") == doctest::Approx(2.0 / 3.0));
  CHECK(s.female_share.at("b") == 0.0);
  CHECK(s.source == StatsSource::TrainingSet);
}
