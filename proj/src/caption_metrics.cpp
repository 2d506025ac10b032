#include "capgen/caption_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace capgen {

namespace {

using NgramCounts = std::unordered_map<std::string, int>;

void check_corpus(const TokenizedCorpus& hyps, const TokenizedCorpus& refs, const char* metric) {
    if (hyps.size() != refs.size())
        throw std::invalid_argument(std::string(metric) + ": " + std::to_string(hyps.size()) + " hypotheses vs " +
                                    std::to_string(refs.size()) + " references");
    if (hyps.empty()) throw std::invalid_argument(std::string(metric) + ": empty corpus");
}

// Unit separator never appears inside a token after normalization.
std::string ngram_key(const Tokens& tokens, std::size_t start, std::size_t n) {
    std::string key = tokens[start];
    for (std::size_t i = 1; i < n; ++i) {
        key.push_back('\x1f');
        key += tokens[start + i];
    }
    return key;
}

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[ngram_key(tokens, i, n)];
    return counts;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

Real bleu_n(const TokenizedCorpus& hyps, const TokenizedCorpus& refs, int n) {
    check_corpus(hyps, refs, "bleu");
    if (n < 1) throw std::invalid_argument("bleu: order must be at least 1");
    std::vector<Real> clipped(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
    Real hyp_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        hyp_len += static_cast<Real>(hyps[s].size());
        ref_len += static_cast<Real>(refs[s].size());
        for (int order = 1; order <= n; ++order) {
            const NgramCounts hyp_counts = count_ngrams(hyps[s], static_cast<std::size_t>(order));
            const NgramCounts ref_counts = count_ngrams(refs[s], static_cast<std::size_t>(order));
            for (const auto& [gram, count] : hyp_counts) {
                const auto it = ref_counts.find(gram);
                clipped[order - 1] += it == ref_counts.end() ? 0 : std::min(count, it->second);
                total[order - 1] += count;
            }
        }
    }
    if (hyp_len == 0) return 0.0;
    Real log_sum = 0;
    for (int order = 0; order < n; ++order) {
        const Real precision = clipped[order] > 0 ? clipped[order] / total[order] : kBleuFloor;
        log_sum += std::log(precision);
    }
    const Real brevity = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
    return brevity * std::exp(log_sum / n);
}

Real rouge_l(const TokenizedCorpus& hyps, const TokenizedCorpus& refs) {
    check_corpus(hyps, refs, "rouge_l");
    const Real beta2 = kRougeBeta * kRougeBeta;
    Real total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        if (hyps[s].empty() || refs[s].empty()) continue;
        const Real lcs = static_cast<Real>(lcs_length(hyps[s], refs[s]));
        const Real precision = lcs / static_cast<Real>(hyps[s].size());
        const Real recall = lcs / static_cast<Real>(refs[s].size());
        if (precision > 0 && recall > 0) total += (1 + beta2) * precision * recall / (recall + beta2 * precision);
    }
    return total / static_cast<Real>(hyps.size());
}

Real meteor_lite(const TokenizedCorpus& hyps, const TokenizedCorpus& refs) {
    check_corpus(hyps, refs, "meteor_lite");
    Real total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        const Tokens& hyp = hyps[s];
        const Tokens& ref = refs[s];
        std::vector<bool> used(ref.size(), false);
        std::size_t matches = 0, chunks = 0;
        long previous_ref = -2;  // ref index matched by the previous hypothesis token, -2 if none
        for (const std::string& token : hyp) {
            long matched = -2;
            for (std::size_t j = 0; j < ref.size(); ++j)
                if (!used[j] && ref[j] == token) {
                    used[j] = true;
                    matched = static_cast<long>(j);
                    break;
                }
            if (matched >= 0) {
                ++matches;
                if (previous_ref < 0 || matched != previous_ref + 1) ++chunks;
            }
            previous_ref = matched;
        }
        if (matches == 0) continue;
        const Real m = static_cast<Real>(matches);
        const Real precision = m / static_cast<Real>(hyp.size());
        const Real recall = m / static_cast<Real>(ref.size());
        const Real f_mean = 10 * precision * recall / (recall + 9 * precision);
        const Real penalty = 0.5 * std::pow(static_cast<Real>(chunks) / m, 3);
        total += f_mean * (1 - penalty);
    }
    return total / static_cast<Real>(hyps.size());
}

Real cider_d(const TokenizedCorpus& hyps, const TokenizedCorpus& refs) {
    check_corpus(hyps, refs, "cider");
    // Document frequency of every reference n-gram, one count per reference.
    std::unordered_map<std::string, Real> doc_freq;
    for (const Tokens& ref : refs)
        for (int n = 1; n <= kCiderMaxN; ++n)
            for (const auto& entry : count_ngrams(ref, static_cast<std::size_t>(n))) doc_freq[entry.first] += 1;
    const Real log_docs = std::log(static_cast<Real>(refs.size()));

    struct Vectors {
        std::array<std::unordered_map<std::string, Real>, kCiderMaxN> weights;
        std::array<Real, kCiderMaxN> norms{};
    };
    auto vectorize = [&](const Tokens& tokens) {
        Vectors v;
        for (int n = 1; n <= kCiderMaxN; ++n) {
            for (const auto& [gram, count] : count_ngrams(tokens, static_cast<std::size_t>(n))) {
                const auto it = doc_freq.find(gram);
                const Real df = it == doc_freq.end() ? 0.0 : it->second;
                const Real w = count * (log_docs - std::log(std::max<Real>(1.0, df)));
                v.weights[n - 1][gram] = w;
                v.norms[n - 1] += w * w;
            }
            v.norms[n - 1] = std::sqrt(v.norms[n - 1]);
        }
        return v;
    };

    Real total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        const Vectors hyp = vectorize(hyps[s]);
        const Vectors ref = vectorize(refs[s]);
        const Real delta = static_cast<Real>(hyps[s].size()) - static_cast<Real>(refs[s].size());
        const Real length_penalty = std::exp(-(delta * delta) / (2 * kCiderSigma * kCiderSigma));
        Real per_order = 0;
        for (int n = 0; n < kCiderMaxN; ++n) {
            Real value = 0;
            for (const auto& [gram, w_hyp] : hyp.weights[n]) {
                const auto it = ref.weights[n].find(gram);
                if (it == ref.weights[n].end()) continue;
                value += std::min(w_hyp, it->second) * it->second;
            }
            if (hyp.norms[n] != 0 && ref.norms[n] != 0) value /= hyp.norms[n] * ref.norms[n];
            per_order += value * length_penalty;
        }
        total += per_order / kCiderMaxN * 10.0;
    }
    return total / static_cast<Real>(hyps.size());
}

CaptionScores score_captions(const TokenizedCorpus& hyps, const TokenizedCorpus& refs) {
    CaptionScores scores;
    for (int n = 1; n <= 4; ++n) scores.bleu[n - 1] = bleu_n(hyps, refs, n);
    scores.meteor = meteor_lite(hyps, refs);
    scores.rouge_l = rouge_l(hyps, refs);
    scores.cider = cider_d(hyps, refs);
    scores.corpus_size = hyps.size();
    return scores;
}

}  // namespace capgen
