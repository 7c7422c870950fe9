#include "bias_audit/text.hpp"

#include <algorithm>

namespace bias_audit::text {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) || (c >= 0x7b && c <= 0x7e);
}

// Byte length of the whitespace character starting at text[i], or 0.
std::size_t whitespace_len(std::string_view t, std::size_t i) {
  const auto c = static_cast<unsigned char>(t[i]);
  if (c == ' ' || (c >= 0x09 && c <= 0x0d)) return 1;
  const auto at = [&](std::size_t k) { return i + k < t.size() ? static_cast<unsigned char>(t[i + k]) : 0; };
  if (c == 0xc2 && (at(1) == 0x85 || at(1) == 0xa0)) return 2;
  if (c == 0xe1 && at(1) == 0x9a && at(2) == 0x80) return 3;  // U+1680
  if (c == 0xe2 && at(1) == 0x80) {
    const auto b = at(2);
    if ((b >= 0x80 && b <= 0x8a) || b == 0xa8 || b == 0xa9 || b == 0xaf) return 3;
  }
  if (c == 0xe2 && at(1) == 0x81 && at(2) == 0x9f) return 3;  // U+205F
  if (c == 0xe3 && at(1) == 0x80 && at(2) == 0x80) return 3;  // U+3000
  return 0;
}

}  // namespace

std::vector<Token> tokenize(std::string_view t) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < t.size()) {
    if (auto w = whitespace_len(t, i); w > 0) {
      i += w;
      continue;
    }
    Token tok;
    tok.begin = i;
    while (i < t.size() && whitespace_len(t, i) == 0) ++i;
    tok.end = i;
    tok.core_begin = tok.begin;
    tok.core_end = tok.end;
    while (tok.core_begin < tok.core_end && is_ascii_punct(static_cast<unsigned char>(t[tok.core_begin])))
      ++tok.core_begin;
    while (tok.core_end > tok.core_begin && is_ascii_punct(static_cast<unsigned char>(t[tok.core_end - 1])))
      --tok.core_end;
    tokens.push_back(tok);
  }
  return tokens;
}

std::vector<std::string> words(std::string_view t) {
  std::vector<std::string> out;
  for (const auto& tok : tokenize(t)) {
    if (tok.core_end > tok.core_begin) out.push_back(to_lower(tok.core(t)));
  }
  return out;
}

void Rewriter::keep(std::size_t begin, std::size_t end) {
  if (end <= begin) return;
  const std::size_t ob = out_.size();
  out_.append(source_.substr(begin, end - begin));
  pieces_.push_back({begin, end, ob, out_.size(), true});
}

void Rewriter::replace(std::size_t begin, std::size_t end, std::string_view replacement) {
  const std::size_t ob = out_.size();
  out_.append(replacement);
  pieces_.push_back({begin, end, ob, out_.size(), false});
}

void Rewriter::insert(std::string_view s) { out_.append(s); }

std::optional<EntitySpan> Rewriter::map(EntitySpan span) const {
  std::optional<std::size_t> start;
  std::optional<std::size_t> stop;
  for (const auto& p : pieces_) {
    if (p.src_end <= span.start || p.src_begin >= span.end) continue;
    if (p.out_end == p.out_begin) continue;
    std::size_t s, e;
    if (p.copied) {
      s = p.out_begin + (std::max(span.start, p.src_begin) - p.src_begin);
      e = p.out_begin + (std::min(span.end, p.src_end) - p.src_begin);
    } else {
      s = p.out_begin;
      e = p.out_end;
    }
    if (!start || s < *start) start = s;
    if (!stop || e > *stop) stop = e;
  }
  if (!start || !stop || *start >= *stop) return std::nullopt;
  return EntitySpan{*start, *stop};
}

std::optional<std::vector<EntitySpan>> remap_spans(const std::optional<std::vector<EntitySpan>>& spans,
                                                   const Rewriter& rewriter) {
  if (!spans) return std::nullopt;
  std::vector<EntitySpan> out;
  for (const auto& s : *spans) {
    if (auto m = rewriter.map(s)) out.push_back(*m);
  }
  return out;
}

std::string match_case(std::string_view model, std::string_view word) {
  std::string out = to_lower(word);
  const auto is_upper = [](char c) { return c >= 'A' && c <= 'Z'; };
  const auto is_lower = [](char c) { return c >= 'a' && c <= 'z'; };
  const bool any_lower = std::any_of(model.begin(), model.end(), is_lower);
  const std::size_t uppers = static_cast<std::size_t>(std::count_if(model.begin(), model.end(), is_upper));
  if (uppers > 1 && !any_lower) {
    for (char& c : out)
      if (is_lower(c)) c = static_cast<char>(c - 'a' + 'A');
  } else if (!model.empty() && is_upper(model[0]) && !out.empty() && is_lower(out[0])) {
    out[0] = static_cast<char>(out[0] - 'a' + 'A');
  }
  return out;
}

}  // namespace bias_audit::text
