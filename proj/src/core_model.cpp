#include "bias_audit/core_model.hpp"

#include "bias_audit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace bias_audit {

using nlohmann::json;

std::string_view to_string(Gender g) noexcept { return g == Gender::F ? "F" : "M"; }

std::optional<Gender> parse_gender(std::string_view s) noexcept {
  if (s == "F") return Gender::F;
  if (s == "M") return Gender::M;
  return std::nullopt;
}

std::string_view to_string(StatsSource s) noexcept {
  return s == StatsSource::TrainingSet ? "training" : "external";
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::string shortest_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

LabeledRecord record_from_json(const json& j, std::size_t line_no) {
  const auto malformed = [&](const std::string& why) {
    return AuditError(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + why);
  };
  if (!j.is_object()) throw malformed("not a JSON object");

  LabeledRecord r;
  const auto req_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw malformed(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
  };
  r.id = req_string("id");
  r.label = req_string("label");
  const auto gender = parse_gender(req_string("gender"));
  if (!gender) throw malformed("gender must be \"F\" or \"M\"");
  r.gender = *gender;

  if (auto it = j.find("text"); it != j.end()) {
    if (!it->is_string()) throw malformed("text must be a string");
    r.text = it->get<std::string>();
  }
  if (auto it = j.find("pred"); it != j.end()) {
    if (!it->is_string()) throw malformed("pred must be a string");
    r.pred = it->get<std::string>();
  }
  if (auto it = j.find("probs"); it != j.end()) {
    if (!it->is_object()) throw malformed("probs must be an object");
    std::map<std::string, double> probs;
    for (const auto& [k, v] : it->items()) {
      if (!v.is_number()) throw malformed("probs values must be numbers");
      probs[k] = v.get<double>();
    }
    r.probs = std::move(probs);
  }
  if (auto it = j.find("entities"); it != j.end()) {
    if (!it->is_array()) throw malformed("entities must be an array");
    std::vector<EntitySpan> spans;
    for (const auto& e : *it) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
        throw malformed("entities must be [start,end] integer pairs");
      const auto s = e[0].get<std::int64_t>();
      const auto t = e[1].get<std::int64_t>();
      if (s < 0 || t < 0) throw malformed("entity offsets must be non-negative");
      spans.push_back({static_cast<std::size_t>(s), static_cast<std::size_t>(t)});
    }
    r.entities = std::move(spans);
  }
  return r;
}

json record_to_json(const LabeledRecord& r) {
  json j = json::object();
  j["id"] = r.id;
  j["label"] = r.label;
  j["gender"] = std::string(to_string(r.gender));
  if (r.text) j["text"] = *r.text;
  if (r.pred) j["pred"] = *r.pred;
  if (r.probs) {
    json p = json::object();
    for (const auto& [k, v] : *r.probs) p[k] = v;
    j["probs"] = std::move(p);
  }
  if (r.entities) {
    json e = json::array();
    for (const auto& s : *r.entities) e.push_back(json::array({s.start, s.end}));
    j["entities"] = std::move(e);
  }
  return j;
}

}  // namespace

void validate_record(const LabeledRecord& r) {
  if (r.probs) {
    double sum = 0.0;
    for (const auto& [k, v] : *r.probs) {
      if (!std::isfinite(v) || v < 0.0) throw AuditError(ErrorCode::InvalidProbs, r.id);
      sum += v;
    }
    if (std::abs(sum - 1.0) > kProbSumTolerance) throw AuditError(ErrorCode::InvalidProbs, r.id);
  }
  if (r.entities) {
    if (!r.entities->empty() && !r.text) throw AuditError(ErrorCode::InvalidSpans, r.id + ": spans without text");
    std::vector<EntitySpan> sorted = *r.entities;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i].start >= sorted[i].end) throw AuditError(ErrorCode::InvalidSpans, r.id + ": empty or inverted span");
      if (sorted[i].end > r.text->size()) throw AuditError(ErrorCode::SpanOutOfBounds, r.id);
      if (i > 0 && sorted[i].start < sorted[i - 1].end)
        throw AuditError(ErrorCode::InvalidSpans, r.id + ": overlapping spans");
    }
  }
}

std::vector<LabeledRecord> parse_records(std::istream& in) {
  std::vector<LabeledRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw AuditError(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": invalid JSON");
    }
    LabeledRecord r = record_from_json(j, line_no);
    validate_record(r);
    if (!seen.insert(r.id).second) throw AuditError(ErrorCode::DuplicateId, r.id);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabeledRecord> read_records(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_records(in);
}

void write_records(std::ostream& out, const std::vector<LabeledRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_records(const std::filesystem::path& path, const std::vector<LabeledRecord>& records) {
  auto out = open_output(path);
  write_records(out, records);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// PredictionTable

PredictionTable::PredictionTable(std::vector<std::string> classes, std::vector<PredictionRow> rows)
    : classes_(std::move(classes)), rows_(std::move(rows)) {
  if (classes_.size() < 2) throw AuditError(ErrorCode::UnknownClass, "class list needs at least 2 entries");
  std::set<std::string> uniq(classes_.begin(), classes_.end());
  if (uniq.size() != classes_.size()) throw AuditError(ErrorCode::UnknownClass, "duplicate class names");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& row = rows_[i];
    if (row.gold >= classes_.size() || row.pred >= classes_.size())
      throw AuditError(ErrorCode::UnknownClass, "row " + std::to_string(i) + " class index out of range");
    if (row.probs) {
      if (row.probs->size() != classes_.size())
        throw AuditError(ErrorCode::InvalidProbs, "row " + std::to_string(i) + " probability length");
      double sum = 0.0;
      for (double p : *row.probs) {
        if (!std::isfinite(p) || p < 0.0) throw AuditError(ErrorCode::InvalidProbs, "row " + std::to_string(i));
        sum += p;
      }
      if (std::abs(sum - 1.0) > kProbSumTolerance)
        throw AuditError(ErrorCode::InvalidProbs, "row " + std::to_string(i));
    }
  }
}

PredictionTable to_prediction_table(const std::vector<LabeledRecord>& records,
                                    const std::optional<std::vector<std::string>>& class_order) {
  for (const auto& r : records) {
    if (!r.pred) throw AuditError(ErrorCode::MissingPred, r.id);
  }
  std::vector<std::string> classes;
  if (class_order) {
    classes = *class_order;
  } else {
    std::set<std::string> all;
    for (const auto& r : records) {
      all.insert(r.label);
      all.insert(*r.pred);
    }
    classes.assign(all.begin(), all.end());
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index.emplace(classes[i], i);
  const auto lookup = [&](const std::string& label) {
    auto it = index.find(label);
    if (it == index.end()) throw AuditError(ErrorCode::UnknownClass, label);
    return it->second;
  };

  std::vector<PredictionRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    PredictionRow row{lookup(r.label), lookup(*r.pred), r.gender, std::nullopt};
    if (r.probs) {
      std::vector<double> p(classes.size(), 0.0);
      for (const auto& [k, v] : *r.probs) p[lookup(k)] = v;
      row.probs = std::move(p);
    }
    rows.push_back(std::move(row));
  }
  return PredictionTable(std::move(classes), std::move(rows));
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, FloatMatrix data)
    : ids_(std::move(ids)), data_(std::move(data)) {
  if (ids_.size() != static_cast<std::size_t>(data_.rows()))
    throw AuditError(ErrorCode::DimMismatch, std::to_string(ids_.size()) + " ids for " +
                                                 std::to_string(data_.rows()) + " rows");
  if (data_.cols() < 1) throw AuditError(ErrorCode::DimMismatch, "embedding dimension must be >= 1");
  if (!data_.allFinite()) throw AuditError(ErrorCode::NonFiniteValue, "embedding matrix has non-finite values");
}

namespace {

constexpr std::array<char, 4> kEmbMagic = {'E', 'M', 'B', '1'};

std::uint32_t load_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32_le(std::uint32_t v, unsigned char* p) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

}  // namespace

EmbeddingMatrix read_embeddings(const std::filesystem::path& data_path, const std::filesystem::path& ids_path) {
  auto in = open_input(data_path, std::ios::in | std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbMagic.data(), 4) != 0)
    throw AuditError(ErrorCode::BadMagic, data_path.string());
  if (bytes.size() < 12) throw AuditError(ErrorCode::TruncatedPayload, "header shorter than 12 bytes");
  const std::uint32_t n = load_u32_le(bytes.data() + 4);
  const std::uint32_t d = load_u32_le(bytes.data() + 8);
  const std::uint64_t expected = 12 + 4ULL * n * d;
  if (bytes.size() < expected)
    throw AuditError(ErrorCode::TruncatedPayload,
                     "expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  if (bytes.size() > expected) throw AuditError(ErrorCode::DimMismatch, "trailing bytes after payload");

  FloatMatrix data(n, d);
  const unsigned char* p = bytes.data() + 12;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, p += 4) {
      data(i, j) = std::bit_cast<float>(load_u32_le(p));
    }
  }

  auto ids_in = open_input(ids_path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(ids_in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ids.push_back(line);
  }
  if (ids.size() != n)
    throw AuditError(ErrorCode::DimMismatch,
                     "header n=" + std::to_string(n) + " but " + std::to_string(ids.size()) + " ids");
  return EmbeddingMatrix(std::move(ids), std::move(data));
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& data_path,
                      const std::filesystem::path& ids_path) {
  const auto n = static_cast<std::uint32_t>(m.rows());
  const auto d = static_cast<std::uint32_t>(m.dim());
  std::vector<unsigned char> bytes(12 + 4ULL * n * d);
  std::memcpy(bytes.data(), kEmbMagic.data(), 4);
  store_u32_le(n, bytes.data() + 4);
  store_u32_le(d, bytes.data() + 8);
  unsigned char* p = bytes.data() + 12;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, p += 4) store_u32_le(std::bit_cast<std::uint32_t>(m.data()(i, j)), p);
  }
  {
    auto out = open_output(data_path, std::ios::out | std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + data_path.string());
  }
  auto ids_out = open_output(ids_path);
  for (const auto& id : m.ids()) ids_out << id << '\n';
  if (!ids_out) throw IoError("write failed: " + ids_path.string());
}

// ---------------------------------------------------------------------------
// Lexicon

GenderLexicon::GenderLexicon(std::set<std::string> female_names, std::set<std::string> male_names,
                             std::map<std::string, Gender> gendered_terms, std::vector<SwapPair> swap_pairs) {
  const auto bad = [](const std::string& why) { return AuditError(ErrorCode::InvalidLexicon, why); };
  for (const auto& w : female_names) female_names_.insert(to_lower(w));
  for (const auto& w : male_names) {
    auto lw = to_lower(w);
    if (female_names_.count(lw)) throw bad("'" + lw + "' is both a female and a male name");
    male_names_.insert(std::move(lw));
  }
  const auto add_term = [&](const std::string& w, Gender g) {
    auto lw = to_lower(w);
    if (female_names_.count(lw) || male_names_.count(lw)) throw bad("'" + lw + "' is both a name and a gendered term");
    auto [it, inserted] = gendered_terms_.emplace(lw, g);
    if (!inserted && it->second != g) throw bad("'" + lw + "' is marked both female and male");
  };
  for (const auto& [w, g] : gendered_terms) add_term(w, g);

  std::set<SwapPair> seen;
  for (const auto& [f, m] : swap_pairs) {
    SwapPair p{to_lower(f), to_lower(m)};
    if (p.first == p.second) throw bad("swap pair maps '" + p.first + "' to itself");
    if (!seen.insert(p).second) throw bad("duplicate swap pair " + p.first + "/" + p.second);
    add_term(p.first, Gender::F);
    add_term(p.second, Gender::M);
    swap_map_.emplace(p.first, p.second);
    swap_map_.emplace(p.second, p.first);
    swap_pairs_.push_back(std::move(p));
  }
}

bool GenderLexicon::is_scrubbable(const std::string& word) const {
  return female_names_.count(word) || male_names_.count(word) || gendered_terms_.count(word);
}

GenderLexicon parse_lexicon(std::istream& in) {
  std::set<std::string> fnames, mnames;
  std::map<std::string, Gender> terms;
  std::vector<GenderLexicon::SwapPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    const auto bad = [&](const std::string& why) {
      return AuditError(ErrorCode::InvalidLexicon, "line " + std::to_string(line_no) + ": " + why);
    };
    if (cols.size() < 2 || cols[1].empty()) throw bad("expected category<TAB>word");
    const std::string& cat = cols[0];
    if (cat == "pair") {
      if (cols.size() != 3 || cols[2].empty()) throw bad("pair lines need two words");
      pairs.emplace_back(cols[1], cols[2]);
      continue;
    }
    if (cols.size() != 2) throw bad("only pair lines carry a counterpart");
    if (cat == "female_name") {
      fnames.insert(cols[1]);
    } else if (cat == "male_name") {
      mnames.insert(cols[1]);
    } else if (cat == "gendered_f" || cat == "gendered_m") {
      const Gender g = cat == "gendered_f" ? Gender::F : Gender::M;
      auto [it, inserted] = terms.emplace(to_lower(cols[1]), g);
      if (!inserted && it->second != g) throw bad("'" + cols[1] + "' is marked both female and male");
    } else {
      throw bad("unknown category '" + cat + "'");
    }
  }
  return GenderLexicon(std::move(fnames), std::move(mnames), std::move(terms), std::move(pairs));
}

GenderLexicon read_lexicon(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_lexicon(in);
}

void write_lexicon(std::ostream& out, const GenderLexicon& lexicon) {
  for (const auto& w : lexicon.female_names()) out << "female_name\t" << w << '\n';
  for (const auto& w : lexicon.male_names()) out << "male_name\t" << w << '\n';
  std::set<std::string> paired;
  for (const auto& [f, m] : lexicon.swap_pairs()) {
    paired.insert(f);
    paired.insert(m);
  }
  for (const auto& [w, g] : lexicon.gendered_terms()) {
    if (paired.count(w)) continue;
    out << (g == Gender::F ? "gendered_f\t" : "gendered_m\t") << w << '\n';
  }
  for (const auto& [f, m] : lexicon.swap_pairs()) out << "pair\t" << f << '\t' << m << '\n';
}

void write_lexicon(const std::filesystem::path& path, const GenderLexicon& lexicon) {
  auto out = open_output(path);
  write_lexicon(out, lexicon);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Class statistics

ClassStats parse_class_stats(std::istream& in, StatsSource source) {
  ClassStats stats;
  stats.source = source;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto bad = [&](const std::string& why) {
      return AuditError(ErrorCode::InvalidStats, "line " + std::to_string(line_no) + ": " + why);
    };
    if (!header_seen) {
      if (line != "class,female_share") throw bad("expected header 'class,female_share'");
      header_seen = true;
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) throw bad("expected class,female_share");
    const std::string cls = line.substr(0, comma);
    const std::string num = line.substr(comma + 1);
    double share = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), share);
    if (ec != std::errc() || ptr != num.data() + num.size()) throw bad("share is not a number");
    if (!(share >= 0.0 && share <= 1.0)) throw bad("share outside [0,1]");
    if (!stats.female_share.emplace(cls, share).second) throw bad("duplicate class '" + cls + "'");
  }
  if (!header_seen) throw AuditError(ErrorCode::InvalidStats, "empty stats file");
  return stats;
}

ClassStats read_class_stats(const std::filesystem::path& path, StatsSource source) {
  auto in = open_input(path);
  return parse_class_stats(in, source);
}

void write_class_stats(const std::filesystem::path& path, const ClassStats& stats) {
  auto out = open_output(path);
  out << "class,female_share\n";
  for (const auto& [cls, share] : stats.female_share) out << cls << ',' << shortest_double(share) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

ClassStats training_class_stats(const std::vector<LabeledRecord>& records) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // (female, total)
  for (const auto& r : records) {
    auto& c = counts[r.label];
    c.first += r.gender == Gender::F ? 1 : 0;
    c.second += 1;
  }
  ClassStats stats;
  stats.source = StatsSource::TrainingSet;
  for (const auto& [cls, c] : counts)
    stats.female_share[cls] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return stats;
}

}  // namespace bias_audit
