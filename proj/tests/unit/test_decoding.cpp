#include <doctest.h>

#include <cmath>
#include <random>

#include "capgen/decoding.hpp"
#include "oracles.hpp"

using namespace capgen;

namespace {

// Toy language model: next-token log-probabilities drawn from a generator
// seeded by (model seed, prefix), so every prefix gets its own distribution.
struct ToyModel {
    std::uint64_t seed;
    std::size_t vocab;

    std::vector<Real> operator()(std::span<const int> prefix) const {
        std::uint64_t h = seed * 0x9e3779b97f4a7c15ULL;
        for (int t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001b3ULL;
        std::mt19937_64 rng(h);
        std::gamma_distribution<Real> gamma(0.7, 1.0);
        std::vector<Real> p(vocab);
        Real z = 0;
        for (Real& v : p) z += (v = gamma(rng) + 1e-6);
        for (Real& v : p) v = std::log(v / z);
        return p;
    }
};

}  // namespace

TEST_CASE("full-width beam equals exhaustive search") {
    constexpr int kBos = 0, kEos = 3;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CAPTURE(seed);
        const ToyModel model{seed, 4};
        for (std::size_t max_len : {3u, 4u}) {
            const std::size_t width = static_cast<std::size_t>(std::pow(4.0, static_cast<Real>(max_len)));
            const Beam beam = beam_search(model, kBos, kEos, width, max_len);
            const auto best = oracle::exhaustive_best(
                [&](const std::vector<int>& p) { return model(std::span<const int>(p)); }, kBos, kEos, max_len);
            CHECK(beam.tokens == best.tokens);
            CHECK(beam.log_prob == doctest::Approx(best.log_prob).epsilon(1e-12));
            CHECK(beam.finished);
        }
    }
}

TEST_CASE("beam of one is greedy") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const ToyModel model{seed, 6};
        for (std::size_t max_len : {2u, 3u, 5u, 8u}) {
            const Beam b = beam_search(model, 0, 5, 1, max_len);
            const Beam g = greedy_search(model, 0, 5, max_len);
            CHECK(b.tokens == g.tokens);
            CHECK(b.log_prob == g.log_prob);
        }
    }
}

TEST_CASE("outputs respect max_len and the trace is ordered") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ToyModel model{seed, 5};
        std::vector<BeamStepTrace> trace;
        const Beam b = beam_search(model, 0, 4, 3, 6, &trace);
        CHECK(b.tokens.size() <= 6);
        CHECK(b.tokens.front() == 0);
        for (const auto& step : trace) CHECK(step.worst_kept >= step.best_discarded);
    }
    CHECK_THROWS_AS(beam_search(ToyModel{1, 4}, 0, 3, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(beam_search(ToyModel{1, 4}, 0, 3, 2, 1), std::invalid_argument);
}

TEST_CASE("model-backed generation stays within the configured length") {
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 2;
    c.ff_width = 16;
    c.feature_dim = 4;
    c.vocab_size = 9;
    c.max_caption_len = 6;
    std::mt19937_64 rng(3);
    const ModelParams p = init_model(c, rng);
    const Tensor regions = oracle::random_tensor({2, 4}, rng, 1, false);
    const Beam b = generate(regions, c, p, 3, 6);
    CHECK(b.tokens.size() <= 6);
    CHECK(b.tokens.front() == Vocab::kBos);
    CHECK_THROWS_AS(generate(regions, c, p, 3, 7), std::invalid_argument);
}

TEST_CASE("stack report") {
    CHECK(stack_report(std::vector<std::string>{}).empty());
    CHECK(stack_report(std::vector<std::string>{"a", "b"}) == "frame 0: a\nframe 1: b\n");
    const std::vector<std::pair<std::string, std::string>> frames{
        {"tgt-val-00002", "x y"}, {"tgt-val-00000", "z"}, {"tgt-val-00001", ""}};
    CHECK(stack_report(frames) == "frame tgt-val-00002: x y\nframe tgt-val-00000: z\nframe tgt-val-00001: \n");
}
