#pragma once

#include <span>
#include <string>
#include <vector>

namespace rfcm {

using Tokens = std::vector<std::string>;

struct EvalPair {
  Tokens candidate;
  std::vector<Tokens> references;  // nonempty
};

/// Corpus BLEU with n = 1..4, uniform weights, no smoothing; the brevity
/// penalty uses the reference length closest to each candidate.
double bleu4(std::span<const EvalPair> corpus);
/// Sentence-level BLEU with add-one smoothing for n >= 2.
double sentence_bleu4(const EvalPair& pair);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// LCS F-measure, (1+b^2)PR / (R + b^2 P), max over references.
double rouge_l_pair(const EvalPair& pair, double beta = 1.2);
double rouge_l(std::span<const EvalPair> corpus, double beta = 1.2);

/// CIDEr-D with document frequencies taken over the corpus's reference sets.
std::vector<double> cider_d_per_pair(std::span<const EvalPair> corpus, double sigma = 6.0);
double cider_d(std::span<const EvalPair> corpus, double sigma = 6.0);

/// Suffix-stripping stemmer used by meteor_basic.
std::string simple_stem(const std::string& word);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};
/// Unigram alignment (exact or stem match) maximizing matches, then
/// minimizing chunks.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);
double meteor_pair(const EvalPair& pair);
double meteor_basic(std::span<const EvalPair> corpus);

struct MetricReport {
  std::size_t n = 0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double meteor_basic = 0.0;
  double cider_d = 0.0;
  double exact_match = 0.0;
};

MetricReport score_corpus(std::span<const EvalPair> corpus);

}  // namespace rfcm
