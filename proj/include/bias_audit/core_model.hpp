#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bias_audit {

/// Protected attribute. F and M are the only values.
enum class Gender : std::uint8_t { F = 0, M = 1 };

inline constexpr std::size_t kNumGenders = 2;
inline constexpr Gender kGenders[] = {Gender::F, Gender::M};

inline std::size_t index_of(Gender g) noexcept { return static_cast<std::size_t>(g); }
inline Gender flip(Gender g) noexcept { return g == Gender::F ? Gender::M : Gender::F; }
std::string_view to_string(Gender g) noexcept;
std::optional<Gender> parse_gender(std::string_view s) noexcept;

/// Tolerance on probability vectors summing to one.
inline constexpr double kProbSumTolerance = 1e-6;

/// Dense double matrix, one example per row.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Half-open byte range [start, end) into a record's UTF-8 text.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const EntitySpan&) const = default;
};

struct LabeledRecord {
  std::string id;
  std::optional<std::string> text;
  std::string label;
  Gender gender = Gender::F;
  std::optional<std::string> pred;
  std::optional<std::map<std::string, double>> probs;
  std::optional<std::vector<EntitySpan>> entities;

  bool operator==(const LabeledRecord&) const = default;
};

/// Checks the per-record invariants (probability sum, span layout).
/// Throws AuditError(InvalidProbs / SpanOutOfBounds / InvalidSpans).
void validate_record(const LabeledRecord& record);

std::vector<LabeledRecord> read_records(const std::filesystem::path& path);
std::vector<LabeledRecord> parse_records(std::istream& in);
void write_records(const std::filesystem::path& path, const std::vector<LabeledRecord>& records);
void write_records(std::ostream& out, const std::vector<LabeledRecord>& records);

struct PredictionRow {
  std::size_t gold = 0;
  std::size_t pred = 0;
  Gender gender = Gender::F;
  std::optional<std::vector<double>> probs;
};

/// Validated (Y, R, Z) substrate of every extrinsic metric.
class PredictionTable {
 public:
  PredictionTable(std::vector<std::string> classes, std::vector<PredictionRow> rows);

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  const std::vector<PredictionRow>& rows() const noexcept { return rows_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

 private:
  std::vector<std::string> classes_;
  std::vector<PredictionRow> rows_;
};

/// Class order is `class_order` when given, otherwise the sorted union of
/// gold and predicted labels.
PredictionTable to_prediction_table(const std::vector<LabeledRecord>& records,
                                    const std::optional<std::vector<std::string>>& class_order = std::nullopt);

/// n x d representation matrix with row-aligned ids.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(std::vector<std::string> ids, FloatMatrix data);

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const FloatMatrix& data() const noexcept { return data_; }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  Matrix as_double() const { return data_.cast<double>(); }

 private:
  std::vector<std::string> ids_;
  FloatMatrix data_;
};

EmbeddingMatrix read_embeddings(const std::filesystem::path& data_path, const std::filesystem::path& ids_path);
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& data_path,
                      const std::filesystem::path& ids_path);

/// Categorized gender word lists. All words are stored lowercase. Words that
/// appear in a swap pair are also gendered terms (first word F, second M).
class GenderLexicon {
 public:
  using SwapPair = std::pair<std::string, std::string>;  // (female-marked, male-marked)

  GenderLexicon() = default;
  GenderLexicon(std::set<std::string> female_names, std::set<std::string> male_names,
                std::map<std::string, Gender> gendered_terms, std::vector<SwapPair> swap_pairs);

  const std::set<std::string>& female_names() const noexcept { return female_names_; }
  const std::set<std::string>& male_names() const noexcept { return male_names_; }
  const std::map<std::string, Gender>& gendered_terms() const noexcept { return gendered_terms_; }
  const std::vector<SwapPair>& swap_pairs() const noexcept { return swap_pairs_; }

  /// Name or gendered term; `word` must already be lowercase.
  bool is_scrubbable(const std::string& word) const;

  /// Bidirectional swap lookup. When a word occurs in several pairs, the first
  /// pair in file order wins ("her" -> "him" before "her" -> "his").
  const std::map<std::string, std::string>& swap_map() const noexcept { return swap_map_; }

  bool operator==(const GenderLexicon& o) const {
    return female_names_ == o.female_names_ && male_names_ == o.male_names_ &&
           gendered_terms_ == o.gendered_terms_ && swap_pairs_ == o.swap_pairs_;
  }

 private:
  std::set<std::string> female_names_;
  std::set<std::string> male_names_;
  std::map<std::string, Gender> gendered_terms_;
  std::vector<SwapPair> swap_pairs_;
  std::map<std::string, std::string> swap_map_;
};

GenderLexicon read_lexicon(const std::filesystem::path& path);
GenderLexicon parse_lexicon(std::istream& in);
void write_lexicon(const std::filesystem::path& path, const GenderLexicon& lexicon);
void write_lexicon(std::ostream& out, const GenderLexicon& lexicon);

enum class StatsSource { TrainingSet, External };
std::string_view to_string(StatsSource s) noexcept;

/// Per-class female share, from the training set (before balancing) or from
/// external statistics such as labour data.
struct ClassStats {
  std::map<std::string, double> female_share;
  StatsSource source = StatsSource::TrainingSet;

  bool operator==(const ClassStats&) const = default;
};

ClassStats read_class_stats(const std::filesystem::path& path, StatsSource source);
ClassStats parse_class_stats(std::istream& in, StatsSource source);
void write_class_stats(const std::filesystem::path& path, const ClassStats& stats);

/// Female share per gold label of `records`.
ClassStats training_class_stats(const std::vector<LabeledRecord>& records);

/// ASCII lowercase; non-ASCII bytes pass through.
std::string to_lower(std::string_view s);

}  // namespace bias_audit
