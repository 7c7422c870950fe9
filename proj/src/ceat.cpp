#include "bias_audit/ceat.hpp"

#include "bias_audit/analysis.hpp"
#include "bias_audit/error.hpp"
#include "bias_audit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace bias_audit::ceat {

void WeatSpec::validate() const {
  const auto bad = [](const std::string& why) { return AuditError(ErrorCode::InvalidWeatSpec, why); };
  if (targets_x.empty() || targets_y.empty() || attributes_a.empty() || attributes_b.empty())
    throw bad("all four word sets must be non-empty");
  const auto disjoint = [](const std::vector<std::string>& p, const std::vector<std::string>& q) {
    std::set<std::string> s(p.begin(), p.end());
    return std::none_of(q.begin(), q.end(), [&](const auto& w) { return s.count(w) > 0; });
  };
  if (!disjoint(targets_x, targets_y)) throw bad("target sets X and Y overlap");
  if (!disjoint(attributes_a, attributes_b)) throw bad("attribute sets A and B overlap");
}

WeatSpec read_weat_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw AuditError(ErrorCode::InvalidWeatSpec, path.string() + ": " + e.what());
  }
  const auto words = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array()) throw AuditError(ErrorCode::InvalidWeatSpec, std::string("missing ") + key);
    std::vector<std::string> out;
    for (const auto& w : j[key]) {
      if (!w.is_string()) throw AuditError(ErrorCode::InvalidWeatSpec, std::string(key) + " must hold strings");
      out.push_back(w.get<std::string>());
    }
    return out;
  };
  WeatSpec spec{words("targets_x"), words("targets_y"), words("attributes_a"), words("attributes_b")};
  spec.validate();
  return spec;
}

double cosine(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw AuditError(ErrorCode::DimMismatch, "vectors differ in dimension");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw AuditError(ErrorCode::ZeroVector, "cosine of a zero vector");
  return u.dot(v) / (nu * nv);
}

double weat_association(const Vector& w, const VectorSet& a, const VectorSet& b) {
  if (a.empty() || b.empty()) throw AuditError(ErrorCode::InvalidWeatSpec, "empty attribute set");
  double sa = 0.0;
  for (const auto& v : a) sa += cosine(w, v);
  double sb = 0.0;
  for (const auto& v : b) sb += cosine(w, v);
  return sa / static_cast<double>(a.size()) - sb / static_cast<double>(b.size());
}

namespace {

// Association scores of X followed by Y.
std::vector<double> target_scores(const ResolvedWeat& weat) {
  std::vector<double> s;
  s.reserve(weat.x.size() + weat.y.size());
  for (const auto& w : weat.x) s.push_back(weat_association(w, weat.a, weat.b));
  for (const auto& w : weat.y) s.push_back(weat_association(w, weat.a, weat.b));
  return s;
}

double effect_size_from_scores(std::span<const double> s, std::size_t n_x) {
  const std::size_t n = s.size();
  if (n_x == 0 || n_x >= n) throw AuditError(ErrorCode::InvalidWeatSpec, "both target sets need words");
  const double mean_x = std::accumulate(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n_x), 0.0) /
                        static_cast<double>(n_x);
  const double mean_y = std::accumulate(s.begin() + static_cast<std::ptrdiff_t>(n_x), s.end(), 0.0) /
                        static_cast<double>(n - n_x);
  const double mean_all = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : s) ss += (v - mean_all) * (v - mean_all);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd >= 1e-12)) throw AuditError(ErrorCode::DegenerateDenominator, "association scores have no spread");
  return (mean_x - mean_y) / sd;
}

}  // namespace

double weat_effect_size(const ResolvedWeat& weat) {
  if (weat.x.size() + weat.y.size() < 2) throw AuditError(ErrorCode::InvalidWeatSpec, "|X u Y| must be >= 2");
  const auto s = target_scores(weat);
  return effect_size_from_scores(s, weat.x.size());
}

WeatResult weat_p_value(const ResolvedWeat& weat, std::size_t max_permutations, std::uint64_t seed) {
  if (weat.x.size() != weat.y.size())
    throw AuditError(ErrorCode::UnequalTargetSizes,
                     std::to_string(weat.x.size()) + " vs " + std::to_string(weat.y.size()) + " target words");
  if (max_permutations == 0) throw AuditError(ErrorCode::InvalidArgument, "max_permutations must be positive");
  const auto s = target_scores(weat);
  WeatResult result;
  try {
    result.effect_size = effect_size_from_scores(s, weat.x.size());
  } catch (const AuditError& e) {
    // Constant scores: no difference to standardize, every partition ties.
    if (e.code() != ErrorCode::DegenerateDenominator) throw;
    result.effect_size = 0.0;
  }

  const std::size_t n = s.size();
  const std::size_t m = weat.x.size();
  const double total = std::accumulate(s.begin(), s.end(), 0.0);
  // mean_Xi - mean_Yi is increasing in sum_Xi for equal sizes, so compare subset sums.
  const auto subset_stat = [&](double sum_x) {
    return sum_x / static_cast<double>(m) - (total - sum_x) / static_cast<double>(n - m);
  };
  const double observed = subset_stat(std::accumulate(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(m), 0.0));
  double scale = 1.0;
  for (double v : s) scale = std::max(scale, std::abs(v));
  const double tol = 1e-11 * scale;

  const std::size_t n_parts = analysis::choose(n, m);
  std::size_t hits = 0;
  if (n_parts <= max_permutations) {
    result.exact = true;
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t count = 0;
    while (true) {
      double sum = 0.0;
      for (auto i : idx) sum += s[i];
      if (subset_stat(sum) >= observed - tol) ++hits;
      ++count;
      std::size_t pos = m;
      while (pos > 0 && idx[pos - 1] == n - m + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < m; ++j) idx[j] = idx[j - 1] + 1;
    }
    result.n_permutations_used = count;
    result.p_value = static_cast<double>(hits) / static_cast<double>(count);
    return result;
  }

  hits = 1;  // identity partition
  const std::size_t draws = max_permutations - 1;
  std::vector<double> work;
  for (std::size_t i = 0; i < draws; ++i) {
    Rng rng(derive_seed(seed, {i}));
    work = s;
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      std::swap(work[j], work[j + uniform_index(rng, n - j)]);
      sum += work[j];
    }
    if (subset_stat(sum) >= observed - tol) ++hits;
  }
  result.n_permutations_used = draws + 1;
  result.p_value = static_cast<double>(hits) / static_cast<double>(draws + 1);
  return result;
}

EffectLabel effect_label(double effect_size) noexcept {
  const double a = std::abs(effect_size);
  if (a > 0.8) return EffectLabel::Large;
  if (a > 0.5) return EffectLabel::Medium;
  return EffectLabel::Small;
}

std::string_view to_string(EffectLabel l) noexcept {
  switch (l) {
    case EffectLabel::Small: return "small";
    case EffectLabel::Medium: return "medium";
    case EffectLabel::Large: return "large";
  }
  return "?";
}

double effect_size_variance(double effect_size, std::size_t n_x, std::size_t n_y) noexcept {
  const double nx = static_cast<double>(n_x);
  const double ny = static_cast<double>(n_y);
  return (nx + ny) / (nx * ny) + effect_size * effect_size / (2.0 * (nx + ny));
}

RandomEffects combine_effect_sizes(std::span<const double> es, std::span<const double> variances) {
  if (es.size() != variances.size()) throw AuditError(ErrorCode::LengthMismatch, "effect sizes vs variances");
  if (es.size() < 2) throw AuditError(ErrorCode::InvalidArgument, "need at least 2 samples");
  for (double v : variances) {
    if (!(v > 0.0)) throw AuditError(ErrorCode::InvalidArgument, "variances must be positive");
  }
  const std::size_t n = es.size();
  double sw = 0.0, sw2 = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / variances[i];
    sw += w;
    sw2 += w * w;
    swx += w * es[i];
  }
  const double fixed = swx / sw;
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) q += (es[i] - fixed) * (es[i] - fixed) / variances[i];
  const double c = sw - sw2 / sw;
  const double df = static_cast<double>(n - 1);

  RandomEffects out;
  out.tau2 = c > 0.0 ? std::max(0.0, (q - df) / c) : 0.0;
  double sv = 0.0, svx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = 1.0 / (variances[i] + out.tau2);
    sv += v;
    svx += v * es[i];
  }
  out.ces = svx / sv;
  out.z = out.ces * std::sqrt(sv);
  out.p_value = std::erfc(std::abs(out.z) / std::sqrt(2.0));
  return out;
}

CeatResult ceat_combine(const ContextPools& pools, const WeatSpec& spec, std::size_t n_samples, std::uint64_t seed) {
  spec.validate();
  if (n_samples < 2) throw AuditError(ErrorCode::InvalidArgument, "n_samples must be >= 2");
  const auto pool_of = [&](const std::string& w) -> const std::vector<Vector>& {
    auto it = pools.find(w);
    if (it == pools.end() || it->second.empty()) throw AuditError(ErrorCode::EmptyContextPool, w);
    return it->second;
  };
  // Resolve pools up front so a missing word fails before any sampling.
  const auto resolve_pools = [&](const std::vector<std::string>& words) {
    std::vector<const std::vector<Vector>*> out;
    for (const auto& w : words) out.push_back(&pool_of(w));
    return out;
  };
  const auto px = resolve_pools(spec.targets_x);
  const auto py = resolve_pools(spec.targets_y);
  const auto pa = resolve_pools(spec.attributes_a);
  const auto pb = resolve_pools(spec.attributes_b);

  CeatResult result;
  result.per_sample_es.resize(n_samples);
  result.per_sample_var.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng(derive_seed(seed, {i}));
    const auto draw = [&](const std::vector<const std::vector<Vector>*>& ps) {
      VectorSet out;
      out.reserve(ps.size());
      for (const auto* p : ps) out.push_back((*p)[uniform_index(rng, p->size())]);
      return out;
    };
    ResolvedWeat weat;
    weat.x = draw(px);
    weat.y = draw(py);
    weat.a = draw(pa);
    weat.b = draw(pb);
    const double es = weat_effect_size(weat);
    result.per_sample_es[i] = es;
    result.per_sample_var[i] = effect_size_variance(es, weat.x.size(), weat.y.size());
  }
  const auto re = combine_effect_sizes(result.per_sample_es, result.per_sample_var);
  result.tau2 = re.tau2;
  result.ces = re.ces;
  result.p_value = re.p_value;
  return result;
}

ContextPools build_context_pools(std::span<const TokenOccurrence> corpus, const std::vector<std::string>& words,
                                 std::size_t pool_size, std::uint64_t seed) {
  if (pool_size == 0) throw AuditError(ErrorCode::InvalidArgument, "pool_size must be >= 1");
  std::map<std::string, std::vector<std::size_t>> where;
  for (std::size_t i = 0; i < corpus.size(); ++i) where[corpus[i].word].push_back(i);

  ContextPools pools;
  for (const auto& w : words) {
    if (pools.count(w)) continue;
    auto it = where.find(w);
    if (it == where.end()) throw AuditError(ErrorCode::WordAbsent, w);
    const auto& occ = it->second;
    Rng rng(derive_seed(seed, {hash_string(w)}));
    std::vector<std::size_t> chosen;
    if (occ.size() >= pool_size) {
      std::vector<std::size_t> work = occ;
      for (std::size_t j = 0; j < pool_size; ++j) std::swap(work[j], work[j + uniform_index(rng, work.size() - j)]);
      chosen.assign(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(pool_size));
    } else {
      for (std::size_t j = 0; j < pool_size; ++j) chosen.push_back(occ[uniform_index(rng, occ.size())]);
    }
    std::sort(chosen.begin(), chosen.end());
    auto& pool = pools[w];
    for (auto idx : chosen) pool.push_back(corpus[idx].vector);
  }
  return pools;
}

std::vector<TokenOccurrence> occurrences_from_embeddings(const EmbeddingMatrix& embeddings) {
  std::vector<TokenOccurrence> out;
  out.reserve(embeddings.rows());
  const Matrix data = embeddings.as_double();
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const auto& id = embeddings.ids()[i];
    const auto at = id.rfind('@');
    out.push_back({at == std::string::npos ? id : id.substr(0, at),
                   data.row(static_cast<Eigen::Index>(i)).transpose()});
  }
  return out;
}

}  // namespace bias_audit::ceat
