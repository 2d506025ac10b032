#pragma once

// Autoregressive caption generation.
//
// Beam scores are cumulative natural-log probabilities with no length
// normalization. Candidates are ordered by score, then lexicographically by
// token ids (so a smaller id wins, and a proper prefix sorts before its
// extensions). Finished beams stay in the pool and compete with extensions
// of live beams until they fall out of the top beam_size.

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "capgen/model.hpp"
#include "capgen/text.hpp"

namespace capgen {

// Log-probabilities over the whole vocabulary for the token after prefix.
using NextTokenScorer = std::function<std::vector<Real>(std::span<const int> prefix)>;

struct Beam {
    std::vector<int> tokens;  // starts with bos
    Real log_prob = 0;
    bool finished = false;
};

struct BeamStepTrace {
    Real worst_kept;
    Real best_discarded;  // -inf when nothing was discarded
};

// max_len bounds the returned sequence length, bos and eos included.
Beam beam_search(const NextTokenScorer& scorer, int bos, int eos, std::size_t beam_size, std::size_t max_len,
                 std::vector<BeamStepTrace>* trace = nullptr);

Beam greedy_search(const NextTokenScorer& scorer, int bos, int eos, std::size_t max_len);

// Scorer that runs the captioning model on one frame. Encoder outputs are
// computed once; the returned callable keeps them alive.
NextTokenScorer model_scorer(const Tensor& regions, const ModelConfig& config, const ModelParams& params);

Beam generate(const Tensor& regions, const ModelConfig& config, const ModelParams& params, std::size_t beam_size,
              std::size_t max_len);

// One "frame <id>: <caption>" line per frame, in input order.
std::string stack_report(std::span<const std::pair<std::string, std::string>> frames);
// Frames numbered from 0.
std::string stack_report(std::span<const std::string> captions);

}  // namespace capgen
