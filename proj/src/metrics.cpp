#include "rfcm/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "rfcm/errors.hpp"

namespace rfcm {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
  return out;
}

void require_corpus(std::span<const EvalPair> corpus, const char* metric) {
  if (corpus.empty()) throw ContractError(std::string(metric) + ": empty candidate corpus");
  for (const auto& p : corpus) {
    if (p.references.empty()) throw ContractError(std::string(metric) + ": pair without references");
  }
}

std::size_t closest_ref_length(const EvalPair& p) {
  const auto c = static_cast<long>(p.candidate.size());
  std::size_t best = p.references.front().size();
  for (const auto& r : p.references) {
    const auto d = std::labs(static_cast<long>(r.size()) - c);
    const auto bd = std::labs(static_cast<long>(best) - c);
    if (d < bd || (d == bd && r.size() < best)) best = r.size();
  }
  return best;
}

/// Clipped n-gram matches of the candidate and its candidate n-gram total.
std::pair<std::size_t, std::size_t> clipped_matches(const EvalPair& p, std::size_t n) {
  const NgramCounts cand = ngrams(p.candidate, n);
  NgramCounts max_ref;
  for (const auto& r : p.references) {
    for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
  }
  std::size_t matched = 0, total = 0;
  for (const auto& [g, c] : cand) {
    total += c;
    const auto it = max_ref.find(g);
    if (it != max_ref.end()) matched += std::min(c, it->second);
  }
  return {matched, total};
}

double brevity_penalty(double c, double r) {
  if (c <= 0.0) return 0.0;
  return c > r ? 1.0 : std::exp(1.0 - r / c);
}

}  // namespace

double bleu4(std::span<const EvalPair> corpus) {
  require_corpus(corpus, "bleu4");
  double matched[4] = {}, total[4] = {};
  double c = 0.0, r = 0.0;
  for (const auto& p : corpus) {
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto [m, t] = clipped_matches(p, n);
      matched[n - 1] += static_cast<double>(m);
      total[n - 1] += static_cast<double>(t);
    }
    c += static_cast<double>(p.candidate.size());
    r += static_cast<double>(closest_ref_length(p));
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  return brevity_penalty(c, r) * std::exp(log_sum / 4.0);
}

double sentence_bleu4(const EvalPair& p) {
  if (p.references.empty()) throw ContractError("sentence_bleu4: pair without references");
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto [m, t] = clipped_matches(p, n);
    double precision;
    if (n == 1) {
      if (m == 0) return 0.0;
      precision = static_cast<double>(m) / static_cast<double>(t);
    } else {
      precision = (static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0);
    }
    log_sum += std::log(precision);
  }
  return brevity_penalty(static_cast<double>(p.candidate.size()), static_cast<double>(closest_ref_length(p))) *
         std::exp(log_sum / 4.0);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const EvalPair& p, double beta) {
  if (p.references.empty()) throw ContractError("rouge_l: pair without references");
  const double b2 = beta * beta;
  double best = 0.0;
  for (const auto& r : p.references) {
    const auto l = static_cast<double>(lcs_length(p.candidate, r));
    if (l == 0.0) continue;
    const double prec = l / static_cast<double>(p.candidate.size());
    const double rec = l / static_cast<double>(r.size());
    best = std::max(best, (1.0 + b2) * prec * rec / (rec + b2 * prec));
  }
  return best;
}

double rouge_l(std::span<const EvalPair> corpus, double beta) {
  require_corpus(corpus, "rouge_l");
  double s = 0.0;
  for (const auto& p : corpus) s += rouge_l_pair(p, beta);
  return s / static_cast<double>(corpus.size());
}

namespace {

struct CiderVector {
  std::map<Tokens, double> weights[4];
  double norm[4] = {};
  double length = 0.0;
};

CiderVector cider_vector(const Tokens& t, const std::map<Tokens, double>& df, double log_n) {
  CiderVector v;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (const auto& [g, tf] : ngrams(t, n)) {
      const auto it = df.find(g);
      const double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
      const double w = static_cast<double>(tf) * (log_n - d);
      v.weights[n - 1][g] = w;
      v.norm[n - 1] += w * w;
      if (n == 2) v.length += static_cast<double>(tf);
    }
  }
  for (double& x : v.norm) x = std::sqrt(x);
  return v;
}

std::array<double, 4> cider_similarity(const CiderVector& hyp, const CiderVector& ref, double sigma) {
  const double delta = hyp.length - ref.length;
  std::array<double, 4> val{};
  for (int n = 0; n < 4; ++n) {
    for (const auto& [g, w] : hyp.weights[n]) {
      const auto it = ref.weights[n].find(g);
      if (it != ref.weights[n].end()) val[n] += std::min(w, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val[n] /= hyp.norm[n] * ref.norm[n];
    val[n] *= std::exp(-(delta * delta) / (2.0 * sigma * sigma));
  }
  return val;
}

}  // namespace

std::vector<double> cider_d_per_pair(std::span<const EvalPair> corpus, double sigma) {
  require_corpus(corpus, "cider_d");
  std::map<Tokens, double> df;
  for (const auto& p : corpus) {
    std::set<Tokens> seen;
    for (const auto& r : p.references) {
      for (std::size_t n = 1; n <= 4; ++n) {
        for (const auto& [g, c] : ngrams(r, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(corpus.size()));
  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (const auto& p : corpus) {
    const CiderVector hyp = cider_vector(p.candidate, df, log_n);
    std::array<double, 4> acc{};
    for (const auto& r : p.references) {
      const auto sim = cider_similarity(hyp, cider_vector(r, df, log_n), sigma);
      for (int n = 0; n < 4; ++n) acc[n] += sim[n];
    }
    const double mean_n = (acc[0] + acc[1] + acc[2] + acc[3]) / 4.0;
    scores.push_back(mean_n / static_cast<double>(p.references.size()) * 10.0);
  }
  return scores;
}

double cider_d(std::span<const EvalPair> corpus, double sigma) {
  const auto scores = cider_d_per_pair(corpus, sigma);
  double s = 0.0;
  for (const double x : scores) s += x;
  return s / static_cast<double>(scores.size());
}

std::string simple_stem(const std::string& word) {
  for (const std::string_view suffix : {"ing", "ed", "es", "ly", "s"}) {
    if (word.size() >= suffix.size() + 3 && word.ends_with(suffix)) return word.substr(0, word.size() - suffix.size());
  }
  return word;
}

namespace {

class MeteorSearch {
 public:
  MeteorSearch(const Tokens& cand, const Tokens& ref) : ref_size_(ref.size()) {
    std::vector<std::string> cs, rs;
    for (const auto& w : cand) cs.push_back(simple_stem(w));
    for (const auto& w : ref) rs.push_back(simple_stem(w));
    options_.resize(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (cand[i] == ref[j] || cs[i] == rs[j]) options_[i].push_back(j);
      }
    }
    remaining_.assign(cand.size() + 1, 0);
    for (std::size_t i = cand.size(); i-- > 0;) remaining_[i] = remaining_[i + 1] + (options_[i].empty() ? 0 : 1);
    used_.assign(ref.size(), false);
  }

  MeteorAlignment run() {
    search(0, 0, 0, kNone);
    return best_;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  static constexpr std::size_t kNodeBudget = 2'000'000;

  // prev_ref is the reference position matched by candidate i-1, or kNone.
  void search(std::size_t i, std::size_t matches, std::size_t chunks, std::size_t prev_ref) {
    if (++nodes_ > kNodeBudget && found_) return;
    if (i == options_.size()) {
      if (!found_ || matches > best_.matches || (matches == best_.matches && chunks < best_.chunks)) {
        best_ = {matches, chunks};
        found_ = true;
      }
      return;
    }
    if (found_) {
      const std::size_t cap = std::min(matches + remaining_[i], matches + (ref_size_ - matches));
      if (cap < best_.matches || (cap == best_.matches && chunks >= best_.chunks)) return;
    }
    for (const std::size_t j : options_[i]) {
      if (used_[j]) continue;
      used_[j] = true;
      const bool extends = prev_ref != kNone && j == prev_ref + 1;
      search(i + 1, matches + 1, chunks + (extends ? 0 : 1), j);
      used_[j] = false;
    }
    search(i + 1, matches, chunks, kNone);
  }

  std::size_t ref_size_;
  std::vector<std::vector<std::size_t>> options_;
  std::vector<std::size_t> remaining_;
  std::vector<bool> used_;
  MeteorAlignment best_;
  bool found_ = false;
  std::size_t nodes_ = 0;
};

}  // namespace

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  return MeteorSearch(candidate, reference).run();
}

double meteor_pair(const EvalPair& p) {
  if (p.references.empty()) throw ContractError("meteor_basic: pair without references");
  double best = 0.0;
  for (const auto& r : p.references) {
    const MeteorAlignment a = meteor_align(p.candidate, r);
    if (a.matches == 0) continue;
    const double m = static_cast<double>(a.matches);
    const double prec = m / static_cast<double>(p.candidate.size());
    const double rec = m / static_cast<double>(r.size());
    const double f_mean = 10.0 * prec * rec / (rec + 9.0 * prec);
    const double frag = static_cast<double>(a.chunks) / m;
    best = std::max(best, f_mean * (1.0 - 0.5 * frag * frag * frag));
  }
  return best;
}

double meteor_basic(std::span<const EvalPair> corpus) {
  require_corpus(corpus, "meteor_basic");
  double s = 0.0;
  for (const auto& p : corpus) s += meteor_pair(p);
  return s / static_cast<double>(corpus.size());
}

MetricReport score_corpus(std::span<const EvalPair> corpus) {
  require_corpus(corpus, "score_corpus");
  MetricReport r;
  r.n = corpus.size();
  r.bleu4 = bleu4(corpus);
  r.rouge_l = rouge_l(corpus);
  r.meteor_basic = meteor_basic(corpus);
  r.cider_d = cider_d(corpus);
  std::size_t exact = 0;
  for (const auto& p : corpus) {
    if (std::find(p.references.begin(), p.references.end(), p.candidate) != p.references.end()) ++exact;
  }
  r.exact_match = static_cast<double>(exact) / static_cast<double>(corpus.size());
  return r;
}

}  // namespace rfcm
