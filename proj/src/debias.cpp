#include "bias_audit/debias.hpp"

#include "bias_audit/error.hpp"
#include "bias_audit/rng.hpp"
#include "bias_audit/text.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>

namespace bias_audit::debias {

namespace {

const std::string& require_text(const LabeledRecord& r) {
  if (!r.text) throw AuditError(ErrorCode::MissingText, r.id);
  return *r.text;
}

// Drops tokens whose lowercased core satisfies `remove`, keeping attached
// punctuation. Returns the number of tokens removed; the record is untouched
// when nothing matches.
std::size_t remove_tokens(LabeledRecord& r, const std::function<bool(const std::string&)>& remove) {
  const std::string& src = require_text(r);
  const auto tokens = text::tokenize(src);
  std::vector<bool> hit(tokens.size(), false);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.core_end > t.core_begin && remove(to_lower(t.core(src)))) {
      hit[i] = true;
      ++hits;
    }
  }
  if (hits == 0) return 0;

  text::Rewriter rw(src);
  bool first = true;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const bool has_punct = t.core_begin > t.begin || t.end > t.core_end;
    if (hit[i] && !has_punct) continue;
    if (!first) rw.insert(" ");
    first = false;
    if (hit[i]) {
      rw.keep(t.begin, t.core_begin);
      rw.keep(t.core_end, t.end);
    } else {
      rw.keep(t.begin, t.end);
    }
  }
  r.entities = text::remap_spans(r.entities, rw);
  r.text = rw.result();
  return hits;
}

std::string unique_id(const std::string& base, const std::string& suffix, std::set<std::string>& taken) {
  std::string id = base + suffix;
  for (std::size_t k = 2; taken.count(id); ++k) id = base + suffix + std::to_string(k);
  taken.insert(id);
  return id;
}

struct LabelGroups {
  // label -> gender -> record indices sorted by id
  std::map<std::string, std::array<std::vector<std::size_t>, kNumGenders>> groups;
};

LabelGroups group_by_label(const std::vector<LabeledRecord>& records) {
  LabelGroups g;
  for (std::size_t i = 0; i < records.size(); ++i) g.groups[records[i].label][index_of(records[i].gender)].push_back(i);
  for (auto& [label, by_gender] : g.groups) {
    for (auto& idx : by_gender)
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
  }
  return g;
}

struct BowData {
  std::vector<std::string> vocab;
  Matrix features;
  std::vector<std::size_t> labels;
};

BowData bag_of_words(const std::vector<const LabeledRecord*>& records, const std::vector<std::string>* vocab_in) {
  BowData d;
  std::vector<std::vector<std::string>> toks;
  toks.reserve(records.size());
  for (const auto* r : records) toks.push_back(text::words(require_text(*r)));
  if (vocab_in) {
    d.vocab = *vocab_in;
  } else {
    std::set<std::string> v;
    for (const auto& ws : toks) v.insert(ws.begin(), ws.end());
    d.vocab.assign(v.begin(), v.end());
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < d.vocab.size(); ++j) index.emplace(d.vocab[j], j);
  d.features = Matrix::Zero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(d.vocab.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& w : toks[i]) {
      if (auto it = index.find(w); it != index.end())
        d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(it->second)) += 1.0;
    }
    d.labels.push_back(index_of(records[i]->gender));
  }
  return d;
}

}  // namespace

TransformResult scrub(const std::vector<LabeledRecord>& records, const GenderLexicon& lexicon) {
  TransformResult out;
  out.report.strategy = "scrub";
  out.report.records_in = records.size();
  out.records = records;
  for (auto& r : out.records) {
    out.report.tokens_removed += remove_tokens(r, [&](const std::string& w) { return lexicon.is_scrubbable(w); });
  }
  out.report.records_out = out.records.size();
  return out;
}

TransformResult anonymize(const std::vector<LabeledRecord>& records) {
  TransformResult out;
  out.report.strategy = "anon";
  out.report.records_in = records.size();
  out.records = records;
  for (auto& r : out.records) {
    if (!r.entities) throw AuditError(ErrorCode::MissingSpans, r.id);
    if (r.entities->empty()) continue;
    const std::string& src = require_text(r);
    std::vector<EntitySpan> spans = *r.entities;
    std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (spans[i].end > src.size() || spans[i].start >= spans[i].end) throw AuditError(ErrorCode::SpanOutOfBounds, r.id);
      if (i > 0 && spans[i].start < spans[i - 1].end)
        throw AuditError(ErrorCode::InvalidSpans, r.id + ": overlapping spans");
    }
    text::Rewriter rw(src);
    std::size_t pos = 0;
    std::vector<EntitySpan> masked;
    for (const auto& s : spans) {
      rw.keep(pos, s.start);
      const std::size_t at = rw.result().size();
      rw.replace(s.start, s.end, "E");
      masked.push_back({at, at + 1});
      pos = s.end;
    }
    rw.keep(pos, src.size());
    out.report.entities_masked += spans.size();
    r.text = rw.result();
    r.entities = std::move(masked);
  }
  out.report.records_out = out.records.size();
  return out;
}

namespace {

// Emits `src` into `rw` with every swap-pair word replaced; returns the count.
std::size_t swap_into(std::string_view src, const GenderLexicon& lexicon, text::Rewriter& rw) {
  std::size_t pos = 0;
  std::size_t count = 0;
  for (const auto& t : text::tokenize(src)) {
    if (t.core_end == t.core_begin) continue;
    const auto core = t.core(src);
    auto it = lexicon.swap_map().find(to_lower(core));
    if (it == lexicon.swap_map().end()) continue;
    rw.keep(pos, t.core_begin);
    rw.replace(t.core_begin, t.core_end, text::match_case(core, it->second));
    pos = t.core_end;
    ++count;
  }
  rw.keep(pos, src.size());
  return count;
}

}  // namespace

std::string swap_gendered_words(std::string_view src, const GenderLexicon& lexicon, std::size_t* swapped) {
  text::Rewriter rw(src);
  const std::size_t count = swap_into(src, lexicon, rw);
  if (swapped) *swapped = count;
  return rw.result();
}

TransformResult counterfactual_augment(const std::vector<LabeledRecord>& records, const GenderLexicon& lexicon) {
  TransformResult out;
  out.report.strategy = "ca";
  out.report.records_in = records.size();
  out.records = records;
  std::set<std::string> taken;
  for (const auto& r : records) taken.insert(r.id);

  for (const auto& r : records) {
    const std::string& src = require_text(r);
    text::Rewriter rw(src);
    const std::size_t count = swap_into(src, lexicon, rw);
    if (count == 0) continue;
    LabeledRecord copy = r;
    copy.id = unique_id(r.id, "#cf", taken);
    copy.text = rw.result();
    copy.gender = flip(r.gender);
    copy.pred.reset();
    copy.probs.reset();
    copy.entities = text::remap_spans(r.entities, rw);
    out.report.tokens_swapped += count;
    out.records.push_back(std::move(copy));
  }
  out.report.records_out = out.records.size();
  return out;
}

TransformResult subsample(const std::vector<LabeledRecord>& records, std::uint64_t seed) {
  TransformResult out;
  out.report.strategy = "subsample";
  out.report.records_in = records.size();
  out.report.seed = seed;
  const auto g = group_by_label(records);
  for (const auto& [label, by_gender] : g.groups) {
    const std::size_t keep = std::min(by_gender[0].size(), by_gender[1].size());
    if (keep == 0) out.report.unbalanced_labels.push_back(label);
    for (Gender gen : kGenders) {
      std::vector<std::size_t> idx = by_gender[index_of(gen)];
      Rng rng(derive_seed(seed, {hash_string(label), index_of(gen)}));
      shuffle_range(idx.begin(), idx.end(), rng);
      for (std::size_t i = 0; i < keep; ++i) out.records.push_back(records[idx[i]]);
    }
  }
  std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  out.report.records_out = out.records.size();
  return out;
}

TransformResult oversample(const std::vector<LabeledRecord>& records, std::uint64_t seed) {
  TransformResult out;
  out.report.strategy = "oversample";
  out.report.records_in = records.size();
  out.report.seed = seed;
  out.records = records;
  std::set<std::string> taken;
  for (const auto& r : records) taken.insert(r.id);
  std::map<std::string, std::size_t> dup_count;

  const auto g = group_by_label(records);
  for (const auto& [label, by_gender] : g.groups) {
    const auto& f = by_gender[index_of(Gender::F)];
    const auto& m = by_gender[index_of(Gender::M)];
    if (f.empty() || m.empty()) {
      out.report.unbalanced_labels.push_back(label);
      continue;
    }
    const auto& minority = f.size() < m.size() ? f : m;
    const std::size_t need = std::max(f.size(), m.size()) - minority.size();
    Rng rng(derive_seed(seed, {hash_string(label)}));
    for (std::size_t k = 0; k < need; ++k) {
      const auto& src = records[minority[uniform_index(rng, minority.size())]];
      LabeledRecord dup = src;
      const std::size_t n = ++dup_count[src.id];
      dup.id = unique_id(src.id, "#dup" + std::to_string(n), taken);
      out.records.push_back(std::move(dup));
    }
  }
  out.report.records_out = out.records.size();
  return out;
}

TransformResult iterative_scrub(const std::vector<LabeledRecord>& records, std::size_t n_words, std::size_t iterations,
                                const probe::ProbeConfig& config, std::uint64_t seed) {
  if (n_words == 0) throw AuditError(ErrorCode::InvalidArgument, "n_words must be >= 1");
  TransformResult out;
  out.report.strategy = "iter-scrub";
  out.report.records_in = records.size();
  out.report.seed = seed;
  out.records = records;
  for (const auto& r : records) require_text(r);

  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<const LabeledRecord*> ptrs;
    for (const auto& r : out.records) ptrs.push_back(&r);
    const auto bow = bag_of_words(ptrs, nullptr);
    if (bow.vocab.size() < 2 * n_words)
      throw AuditError(ErrorCode::VocabExhausted, std::to_string(bow.vocab.size()) + " words left, need " +
                                                      std::to_string(2 * n_words));
    probe::ProbeConfig cfg = config;
    cfg.seed = derive_seed(seed, {it});
    const auto model = probe::train(bow.features, bow.labels, kNumGenders, cfg);

    // Log-odds weight of each word toward F.
    std::vector<std::pair<double, std::string>> toward_f;
    for (std::size_t j = 0; j < bow.vocab.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      toward_f.emplace_back(model.weights(0, c) - model.weights(1, c), bow.vocab[j]);
    }
    auto by_f = toward_f;
    std::sort(by_f.begin(), by_f.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    ScrubIteration log;
    log.iteration = it + 1;
    log.probe_accuracy = probe::accuracy(model, bow.features, bow.labels);
    std::set<std::string> removed;
    for (std::size_t j = 0; j < n_words; ++j) {
      log.removed_female.push_back({by_f[j].second, by_f[j].first});
      removed.insert(by_f[j].second);
    }
    auto by_m = toward_f;
    std::sort(by_m.begin(), by_m.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : a.second < b.second;
    });
    for (const auto& [w_f, word] : by_m) {
      if (log.removed_male.size() == n_words) break;
      if (removed.count(word)) continue;
      log.removed_male.push_back({word, -w_f});
      removed.insert(word);
    }
    const auto by_magnitude = [](const ScoredWord& a, const ScoredWord& b) {
      return std::abs(a.weight) != std::abs(b.weight) ? std::abs(a.weight) > std::abs(b.weight) : a.word < b.word;
    };
    std::sort(log.removed_female.begin(), log.removed_female.end(), by_magnitude);
    std::sort(log.removed_male.begin(), log.removed_male.end(), by_magnitude);

    for (auto& r : out.records)
      out.report.tokens_removed += remove_tokens(r, [&](const std::string& w) { return removed.count(w) > 0; });
    out.report.iterations.push_back(std::move(log));
  }
  out.report.records_out = out.records.size();
  return out;
}

double bow_probe_accuracy(const std::vector<LabeledRecord>& records, const probe::ProbeConfig& config,
                          std::uint64_t seed) {
  if (records.size() < 4) throw AuditError(ErrorCode::InvalidArgument, "need at least 4 records");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0}));
  shuffle_range(order.begin(), order.end(), rng);
  const std::size_t n_train = (records.size() * 7) / 10;
  std::vector<const LabeledRecord*> train_set, test_set;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? train_set : test_set).push_back(&records[order[i]]);

  const auto train_bow = bag_of_words(train_set, nullptr);
  const auto test_bow = bag_of_words(test_set, &train_bow.vocab);
  probe::ProbeConfig cfg = config;
  cfg.seed = derive_seed(seed, {1});
  if (train_bow.vocab.empty()) {
    // No features left: the probe can only learn the majority gender.
    const auto model = probe::train(Matrix::Zero(train_bow.features.rows(), 1), train_bow.labels, kNumGenders, cfg);
    return probe::accuracy(model, Matrix::Zero(test_bow.features.rows(), 1), test_bow.labels);
  }
  const auto model = probe::train(train_bow.features, train_bow.labels, kNumGenders, cfg);
  return probe::accuracy(model, test_bow.features, test_bow.labels);
}

}  // namespace bias_audit::debias
