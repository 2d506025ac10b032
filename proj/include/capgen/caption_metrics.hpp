#pragma once

// Corpus-level caption quality metrics over pre-tokenized captions with a
// single reference per hypothesis.

#include <array>
#include <string>
#include <vector>

#include "capgen/kernels.hpp"

namespace capgen {

using Tokens = std::vector<std::string>;
using TokenizedCorpus = std::vector<Tokens>;

inline constexpr Real kBleuFloor = 1e-9;
inline constexpr Real kRougeBeta = 1.2;
inline constexpr Real kCiderSigma = 6.0;
inline constexpr int kCiderMaxN = 4;

// Clipped corpus n-gram precisions for orders 1..n, geometric mean, times
// the brevity penalty exp(1 - r/c) when the hypotheses are shorter than the
// references. A zero precision is floored to kBleuFloor.
Real bleu_n(const TokenizedCorpus& hyps, const TokenizedCorpus& refs, int n);

// LCS F-measure with beta = 1.2, averaged over pairs.
Real rouge_l(const TokenizedCorpus& hyps, const TokenizedCorpus& refs);

// Exact-match unigram alignment (each hypothesis token takes the leftmost
// unused equal reference token). F_mean = 10PR / (R + 9P), fragmentation
// penalty 0.5 * (chunks / matches)^3, averaged over pairs.
Real meteor_lite(const TokenizedCorpus& hyps, const TokenizedCorpus& refs);

// CIDEr-D: tf-idf n-gram vectors for n = 1..4 with idf from the reference
// set, clipped cosine per order with a Gaussian length penalty (sigma 6),
// mean over orders, times 10, averaged over pairs.
Real cider_d(const TokenizedCorpus& hyps, const TokenizedCorpus& refs);

struct CaptionScores {
    std::array<Real, 4> bleu{};
    Real meteor = 0;
    Real rouge_l = 0;
    Real cider = 0;
    std::size_t corpus_size = 0;
};

CaptionScores score_captions(const TokenizedCorpus& hyps, const TokenizedCorpus& refs);

}  // namespace capgen
