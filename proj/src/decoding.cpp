#include "capgen/decoding.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <stdexcept>

namespace capgen {

namespace {

bool ranks_before(const Beam& a, const Beam& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end());
}

void check_lengths(std::size_t max_len) {
    if (max_len < 2) throw std::invalid_argument("decoding: max_len must be at least 2");
}

std::vector<Real> score_or_throw(const NextTokenScorer& scorer, std::span<const int> prefix) {
    std::vector<Real> scores = scorer(prefix);
    if (scores.empty()) throw std::runtime_error("decoding: scorer returned no scores");
    return scores;
}

}  // namespace

Beam beam_search(const NextTokenScorer& scorer, int bos, int eos, std::size_t beam_size, std::size_t max_len,
                 std::vector<BeamStepTrace>* trace) {
    check_lengths(max_len);
    if (beam_size < 1) throw std::invalid_argument("beam_search: beam_size must be at least 1");

    std::vector<Beam> beams{Beam{{bos}, 0.0, false}};
    for (std::size_t length = 1; length < max_len; ++length) {
        const bool any_live = std::any_of(beams.begin(), beams.end(), [](const Beam& b) { return !b.finished; });
        if (!any_live) break;
        std::vector<Beam> candidates;
        for (const Beam& beam : beams) {
            if (beam.finished) {
                candidates.push_back(beam);
                continue;
            }
            const std::vector<Real> scores = score_or_throw(scorer, beam.tokens);
            for (std::size_t tok = 0; tok < scores.size(); ++tok) {
                Beam next{beam.tokens, beam.log_prob + scores[tok], static_cast<int>(tok) == eos};
                next.tokens.push_back(static_cast<int>(tok));
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), ranks_before);
        const std::size_t keep = std::min(beam_size, candidates.size());
        if (trace)
            trace->push_back({candidates[keep - 1].log_prob, keep < candidates.size()
                                                                 ? candidates[keep].log_prob
                                                                 : -std::numeric_limits<Real>::infinity()});
        candidates.resize(keep);
        beams = std::move(candidates);
    }
    // beams stays sorted, so the first finished one is the best finished one.
    for (const Beam& beam : beams)
        if (beam.finished) return beam;
    return beams.front();
}

Beam greedy_search(const NextTokenScorer& scorer, int bos, int eos, std::size_t max_len) {
    check_lengths(max_len);
    Beam beam{{bos}, 0.0, false};
    while (beam.tokens.size() < max_len) {
        const std::vector<Real> scores = score_or_throw(scorer, beam.tokens);
        const auto best = std::max_element(scores.begin(), scores.end());
        const int tok = static_cast<int>(best - scores.begin());
        beam.log_prob += *best;
        beam.tokens.push_back(tok);
        if (tok == eos) {
            beam.finished = true;
            break;
        }
    }
    return beam;
}

NextTokenScorer model_scorer(const Tensor& regions, const ModelConfig& config, const ModelParams& params) {
    auto encoded = std::make_shared<const std::vector<Tensor>>(encode(regions, config, params));
    return [encoded, &config, &params](std::span<const int> prefix) {
        const Tensor logits = decode(prefix, *encoded, config, params);
        const Tensor last = slice(logits, 0, logits.dim(0) - 1, logits.dim(0));
        const Tensor log_probs = log_softmax(last, 1);
        return std::vector<Real>(log_probs.data().begin(), log_probs.data().end());
    };
}

Beam generate(const Tensor& regions, const ModelConfig& config, const ModelParams& params, std::size_t beam_size,
              std::size_t max_len) {
    if (max_len > config.max_caption_len)
        throw std::invalid_argument("generate: max_len " + std::to_string(max_len) + " exceeds max_caption_len " +
                                    std::to_string(config.max_caption_len));
    return beam_search(model_scorer(regions, config, params), Vocab::kBos, Vocab::kEos, beam_size, max_len);
}

std::string stack_report(std::span<const std::pair<std::string, std::string>> frames) {
    std::string out;
    for (const auto& [id, caption] : frames) out += "frame " + id + ": " + caption + "\n";
    return out;
}

std::string stack_report(std::span<const std::string> captions) {
    std::vector<std::pair<std::string, std::string>> frames;
    frames.reserve(captions.size());
    for (std::size_t i = 0; i < captions.size(); ++i) frames.emplace_back(std::to_string(i), captions[i]);
    return stack_report(frames);
}

}  // namespace capgen
