#pragma once

#include "bias_audit/core_model.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bias_audit::text {

/// A whitespace-delimited token. The core is the token with leading and
/// trailing ASCII punctuation stripped; it may be empty.
struct Token {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t core_begin = 0;
  std::size_t core_end = 0;

  std::string_view core(std::string_view text) const { return text.substr(core_begin, core_end - core_begin); }
};

/// Splits on Unicode whitespace (ASCII whitespace, NBSP, U+2000..U+200A,
/// U+2028/9, U+202F, U+205F, U+3000, U+1680, U+0085).
std::vector<Token> tokenize(std::string_view text);

/// Lowercased cores of all tokens, skipping empty cores.
std::vector<std::string> words(std::string_view text);

/// Builds an edited copy of a source text while tracking where source bytes
/// end up, so entity spans can follow the edit.
class Rewriter {
 public:
  explicit Rewriter(std::string_view source) : source_(source) {}

  /// Copies source[begin, end).
  void keep(std::size_t begin, std::size_t end);
  /// Emits `replacement` in place of source[begin, end).
  void replace(std::size_t begin, std::size_t end, std::string_view replacement);
  /// Emits text with no source counterpart.
  void insert(std::string_view s);

  const std::string& result() const noexcept { return out_; }

  /// Image of a source span; nullopt when nothing of it survives.
  std::optional<EntitySpan> map(EntitySpan span) const;

 private:
  struct Piece {
    std::size_t src_begin, src_end, out_begin, out_end;
    bool copied;
  };
  std::string_view source_;
  std::string out_;
  std::vector<Piece> pieces_;
};

/// Maps all spans through the rewriter, dropping spans that vanished.
std::optional<std::vector<EntitySpan>> remap_spans(const std::optional<std::vector<EntitySpan>>& spans,
                                                   const Rewriter& rewriter);

/// Copies the casing pattern of `model` (all caps / capitalized / lower) onto `word`.
std::string match_case(std::string_view model, std::string_view word);

}  // namespace bias_audit::text
