// Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
// when any fails.
//
//   acceptance --cli <path to capgen> [--work <dir>] [--only 1,4,7]

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capgen/calibration.hpp"
#include "capgen/caption_metrics.hpp"
#include "capgen/decoding.hpp"
#include "capgen/domain_head.hpp"
#include "capgen/losses.hpp"
#include "capgen/model.hpp"
#include "capgen/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace capgen;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double child_cpu_seconds() {
    rusage u{};
    getrusage(RUSAGE_CHILDREN, &u);
    return static_cast<double>(u.ru_utime.tv_sec + u.ru_stime.tv_sec) +
           static_cast<double>(u.ru_utime.tv_usec + u.ru_stime.tv_usec) * 1e-6;
}

// Weighted sum so every output entry gets its own upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(y, oracle::random_tensor(y.shape(), rng, 1.0, false)));
}

ModelConfig tiny_model() {
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 3;
    c.n_memory_slots = 2;
    c.ff_width = 12;
    c.feature_dim = 5;
    c.max_caption_len = 6;
    c.vocab_size = 7;
    c.dropout = 0.0;
    return c;
}

// ---------------------------------------------------------------------------
// 1. finite differences

Outcome gradients() {
    const double start = cpu_seconds();
    double op_worst = 0, model_worst = 0;
    std::string op_name, model_name;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor a = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({4, 2}, rng);
        Tensor c = oracle::random_tensor({3, 4}, rng), bias = oracle::random_tensor({4}, rng);
        Tensor gain = oracle::random_tensor({4}, rng), lnb = oracle::random_tensor({4}, rng);
        Tensor table = oracle::random_tensor({5, 3}, rng), v = oracle::random_tensor({6}, rng);
        Tensor logits = oracle::random_tensor({4, 5}, rng, 2.0);
        const std::vector<int> ids{4, 0, 2, 2}, targets{1, 4, 0, 3};

        AttentionParams att;
        for (Linear* l : {&att.query, &att.key, &att.value, &att.output}) {
            l->weight = oracle::random_tensor({4, 4}, rng, 0.5);
            l->bias = oracle::random_tensor({4}, rng, 0.1);
        }
        Tensor mem_k = oracle::random_tensor({2, 4}, rng), mem_v = oracle::random_tensor({2, 4}, rng);

        DomainHeadConfig hc;
        hc.input_dim = 4;
        hc.hidden1 = 5;
        hc.hidden2 = 3;
        std::mt19937_64 head_rng(seed + 50);
        const DomainHeadParams head = init_domain_head(hc, head_rng);

        const std::vector<std::pair<std::string, std::function<oracle::GradCheck()>>> ops = {
            {"matmul", [&] { return oracle::check_gradients([&] { return probe(matmul(a, b), seed); }, {a, b}); }},
            {"transpose", [&] { return oracle::check_gradients([&] { return probe(transpose(a), seed); }, {a}); }},
            {"add", [&] { return oracle::check_gradients([&] { return probe(add(a, c), seed); }, {a, c}); }},
            {"sub", [&] { return oracle::check_gradients([&] { return probe(sub(a, c), seed); }, {a, c}); }},
            {"mul", [&] { return oracle::check_gradients([&] { return probe(mul(a, c), seed); }, {a, c}); }},
            {"scale", [&] { return oracle::check_gradients([&] { return probe(scale(a, -1.7), seed); }, {a}); }},
            {"add_row",
             [&] { return oracle::check_gradients([&] { return probe(add_row(a, bias), seed); }, {a, bias}); }},
            {"relu", [&] { return oracle::check_gradients([&] { return probe(relu(a), seed); }, {a}); }},
            {"sigmoid", [&] { return oracle::check_gradients([&] { return probe(sigmoid(a), seed); }, {a}); }},
            {"softmax", [&] { return oracle::check_gradients([&] { return probe(softmax(a, 1), seed); }, {a}); }},
            {"softmax0", [&] { return oracle::check_gradients([&] { return probe(softmax(a, 0), seed); }, {a}); }},
            {"log_softmax",
             [&] { return oracle::check_gradients([&] { return probe(log_softmax(a, 1), seed); }, {a}); }},
            {"layer_norm",
             [&] {
                 return oracle::check_gradients([&] { return probe(layer_norm(a, gain, lnb, 1e-5), seed); },
                                                {a, gain, lnb});
             }},
            {"concat",
             [&] {
                 return oracle::check_gradients(
                     [&] {
                         const Tensor parts[] = {a, c};
                         return probe(concat(parts, 1), seed);
                     },
                     {a, c});
             }},
            {"slice", [&] { return oracle::check_gradients([&] { return probe(slice(a, 1, 1, 3), seed); }, {a}); }},
            {"reshape",
             [&] { return oracle::check_gradients([&] { return probe(reshape(a, {2, 6}), seed); }, {a}); }},
            {"embed_lookup",
             [&] { return oracle::check_gradients([&] { return probe(embed_lookup(table, ids), seed); }, {table}); }},
            {"sum_mean", [&] { return oracle::check_gradients([&] { return mul(sum(v), mean(v)); }, {v}); }},
            {"mean_rows", [&] { return oracle::check_gradients([&] { return probe(mean_rows(a), seed); }, {a}); }},
            {"dropout",
             [&] {
                 return oracle::check_gradients(
                     [&] {
                         std::mt19937_64 mask(seed);
                         return probe(dropout(a, 0.3, mask), seed);
                     },
                     {a});
             }},
            {"attention",
             [&] {
                 return oracle::check_gradients(
                     [&] { return probe(multi_head_attention(att, a, c, 2, &mem_k, &mem_v, false), seed); },
                     {a, c, mem_k, mem_v, att.query.weight, att.key.weight, att.value.weight, att.output.weight});
             }},
            {"causal_attention",
             [&] {
                 return oracle::check_gradients(
                     [&] { return probe(multi_head_attention(att, a, a, 2, nullptr, nullptr, true), seed); },
                     {a, att.query.weight, att.value.bias});
             }},
            {"ce_ls_rows",
             [&] { return oracle::check_gradients([&] { return ce_ls_rows(logits, targets, 0.1, 3); }, {logits}); }},
            {"domain_head",
             [&] {
                 return oracle::check_gradients(
                     [&] { return probe(domain_logits(a, hc, head, false), seed); },
                     {a, head.fc1.weight, head.fc2.weight, head.fc3.weight, head.fc3.bias});
             }},
        };
        for (const auto& [name, run] : ops) {
            const auto r = run();
            if (r.worst > op_worst) {
                op_worst = r.worst;
                op_name = name;
            }
        }

        const ModelConfig mc = tiny_model();
        std::mt19937_64 model_rng(100 + seed);
        const ModelParams p = init_model(mc, model_rng);
        const Tensor regions = oracle::random_tensor({3, mc.feature_dim}, model_rng, 1.0, false);
        const std::vector<int> tokens{2, 4, 5, 6}, next{4, 5, 6, 3};
        std::vector<Tensor> params;
        for (const auto& [name, t] : p.named()) params.push_back(t);
        const auto r = oracle::check_gradients(
            [&] { return caption_loss(decode(tokens, encode(regions, mc, p), mc, p), next, 0.1, Vocab::kPad); },
            params);
        if (r.worst > model_worst) {
            model_worst = r.worst;
            model_name = p.named()[r.worst_input].first;
        }
    }
    const double elapsed = cpu_seconds() - start;
    return {op_worst < 1e-4 && model_worst < 1e-3 && elapsed < 60,
            "worst per-op " + fmt(op_worst, 3) + " (" + op_name + "), whole model " + fmt(model_worst, 3) + " (" +
                model_name + "), " + fmt(elapsed, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. gradient reversal

Outcome grl_contract() {
    bool forward_ok = true, backward_ok = true, twin_ok = true, twin_nonzero = false;
    std::mt19937_64 rng(11);
    for (Real lambda : {0.0, 0.3, 1.0, 2.5}) {
        Tensor x = oracle::random_tensor({4, 3}, rng);
        const Tensor w = oracle::random_tensor({4, 3}, rng, 1.0, false);
        {
            Tape tape;
            const Tensor y = grad_reverse(x, lambda);
            for (std::size_t i = 0; i < x.size(); ++i) forward_ok &= y.at(i) == x.at(i);
            tape.backward(sum(mul(y, w)));
        }
        for (std::size_t i = 0; i < x.size(); ++i) backward_ok &= x.grad()[i] == -lambda * w.at(i);
    }

    ModelConfig c = tiny_model();
    c.feature_dim = 6;
    for (Real lambda : {0.5, 1.0, 1.7}) {
        std::mt19937_64 model_rng(7);
        const ModelParams p = init_model(c, model_rng);
        DomainHeadConfig hc;
        hc.input_dim = c.d_model;
        hc.grl_lambda = lambda;
        const DomainHeadParams head = init_domain_head(hc, model_rng);
        const Tensor regions = oracle::random_tensor({3, c.feature_dim}, model_rng, 1.0, false);
        auto grads = [&](bool reverse) {
            std::vector<std::vector<Real>> out;
            const auto named = p.named();
            for (auto [name, t] : named) t.zero_grad();
            {
                Tape tape;
                tape.backward(ce_ls(domain_logits(encoder_summary(encode(regions, c, p)), hc, head, reverse), 1, 0));
            }
            for (const auto& [name, t] : named)
                if (name.rfind("encoder.", 0) == 0 || name.rfind("input_", 0) == 0)
                    out.emplace_back(t.grad().begin(), t.grad().end());
            return out;
        };
        const auto plain = grads(false), reversed = grads(true);
        for (std::size_t t = 0; t < plain.size(); ++t)
            for (std::size_t i = 0; i < plain[t].size(); ++i) {
                const Real expect = -lambda * plain[t][i];
                twin_ok &= std::abs(reversed[t][i] - expect) <= 1e-12 * std::max<Real>(1, std::abs(expect));
                twin_nonzero |= plain[t][i] != 0;
            }
    }
    return {forward_ok && backward_ok && twin_ok && twin_nonzero,
            std::string("forward identity ") + (forward_ok ? "exact" : "broken") + ", backward -lambda*g " +
                (backward_ok ? "exact" : "broken") + ", twin encoder gradients " + (twin_ok ? "match" : "differ")};
}

// ---------------------------------------------------------------------------
// 3. label smoothing

Outcome label_smoothing() {
    std::mt19937_64 rng(5);
    std::normal_distribution<Real> normal(0, 3);
    std::uniform_int_distribution<std::size_t> width(2, 12);
    std::uniform_real_distribution<Real> unit(0, 1);
    Real worst = 0;
    bool smooth_exact = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = width(rng);
        const std::size_t cls = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
        std::vector<Real> logits(k);
        for (Real& v : logits) v = normal(rng);
        const Real mx = *std::max_element(logits.begin(), logits.end());
        Real z = 0;
        for (Real v : logits) z += std::exp(v - mx);
        const Real vanilla = -(logits[cls] - mx - std::log(z));
        worst = std::max(worst, std::abs(ce_ls(Tensor::vector(logits), cls, 0.0).item() - vanilla));

        const Real eps = unit(rng);
        const auto t = smooth_labels(cls, k, eps);
        for (std::size_t j = 0; j < k; ++j)
            smooth_exact &= t[j] == (j == cls ? 1.0 : 0.0) * (1 - eps) + eps / static_cast<Real>(k);
    }
    return {worst < 1e-12 && smooth_exact, "max |ce_ls(eps=0) - ce| " + fmt(worst, 3) + " over 100 cases, targets " +
                                               (smooth_exact ? "exact" : "off")};
}

// ---------------------------------------------------------------------------
// 4. caption metrics

Outcome metric_oracles() {
    std::mt19937_64 rng(2024);
    Real worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 6;
        const auto hyps = oracle::random_corpus(rng, n, 4, 8);
        const auto refs = oracle::random_corpus(rng, n, 4, 8);
        for (int order = 1; order <= 4; ++order)
            worst = std::max(worst, std::abs(bleu_n(hyps, refs, order) - oracle::bleu(hyps, refs, order)));
        worst = std::max(worst, std::abs(rouge_l(hyps, refs) - oracle::rouge_l(hyps, refs)));
        worst = std::max(worst, std::abs(meteor_lite(hyps, refs) - oracle::meteor_lite(hyps, refs)));
        worst = std::max(worst, std::abs(cider_d(hyps, refs) - oracle::cider_d(hyps, refs)));
    }
    bool identical = true;
    for (int trial = 0; trial < 10; ++trial) {
        const auto corpus = oracle::random_corpus(rng, 5, 6, 9, 4);
        identical &= std::abs(bleu_n(corpus, corpus, 4) - 1) < 1e-12 && std::abs(rouge_l(corpus, corpus) - 1) < 1e-12;
    }
    return {worst < 1e-9 && identical, "max deviation from brute force " + fmt(worst, 3) +
                                           " over 50 corpora, identical pairs " + (identical ? "score 1" : "below 1")};
}

// ---------------------------------------------------------------------------
// 5. beam search

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

Outcome beam_optimality() {
    constexpr int kBos = 0, kEos = 3;
    int exhaustive_ok = 0, greedy_ok = 0, greedy_total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ToyModel model{seed, 4};
        const std::size_t max_len = 3, width = 64;
        const Beam beam = beam_search(model, kBos, kEos, width, max_len);
        const auto best = oracle::exhaustive_best(
            [&](const std::vector<int>& p) { return model(std::span<const int>(p)); }, kBos, kEos, max_len);
        exhaustive_ok += beam.tokens == best.tokens && std::abs(beam.log_prob - best.log_prob) < 1e-12;
        for (std::size_t len : {2u, 3u, 5u, 8u}) {
            const ToyModel wide{seed + 1000, 6};
            ++greedy_total;
            const Beam b = beam_search(wide, 0, 5, 1, len), g = greedy_search(wide, 0, 5, len);
            greedy_ok += b.tokens == g.tokens && b.log_prob == g.log_prob;
        }
    }
    return {exhaustive_ok == 20 && greedy_ok == greedy_total,
            std::to_string(exhaustive_ok) + "/20 toy models match exhaustive search, beam 1 = greedy on " +
                std::to_string(greedy_ok) + "/" + std::to_string(greedy_total)};
}

// ---------------------------------------------------------------------------
// 6. calibration

PredictionSet predictions(std::size_t k, const std::vector<std::pair<std::vector<Real>, int>>& rows) {
    PredictionSet p(k);
    for (const auto& [probs, label] : rows) p.add(probs, label);
    return p;
}

Outcome calibration_fixtures() {
    const Real e = ece(predictions(2, {{{0.8, 0.2}, 0}, {{0.8, 0.2}, 1}}));
    const Real s = sce(predictions(2, {{{0.9, 0.1}, 0}, {{0.7, 0.3}, 1}, {{0.4, 0.6}, 1}, {{0.85, 0.15}, 0}}));
    const Real t = tace(predictions(2, {{{0.9, 0.1}, 0},
                                        {{0.6, 0.4}, 1},
                                        {{0.3, 0.7}, 1},
                                        {{0.8, 0.2}, 0},
                                        {{0.5, 0.5}, 0},
                                        {{0.15, 0.85}, 1}}),
                        2, 0.2);
    const CalibrationScores perfect =
        score_calibration(predictions(3, {{{1, 0, 0}, 0}, {{0, 1, 0}, 1}, {{0, 0, 1}, 2}, {{0, 1, 0}, 1}}));
    const bool fixtures = std::abs(e - 0.3) < 1e-12 && std::abs(s - 0.3375) < 1e-12 && std::abs(t - 19.0 / 240) < 1e-12;
    const bool zero = perfect.ece == 0 && perfect.sce == 0 && perfect.tace == 0 && perfect.brier == 0;
    return {fixtures && zero, "ece " + fmt(e, 12) + ", sce " + fmt(s, 12) + ", tace " + fmt(t, 12) +
                                  ", perfect predictions " + (zero ? "all zero" : "non-zero")};
}

// ---------------------------------------------------------------------------
// 7-8. synthetic direction checks

struct DeskRun {
    Real td_bleu1 = 0;
    Real td_ece = 0;
};

ModelConfig desk_model(const SynthConfig& synth) {
    ModelConfig mc;
    mc.feature_dim = synth.feature_dim;
    mc.max_caption_len = 12;
    return mc;
}

DeskRun desk_run(std::uint64_t seed, TrainMode mode, bool label_smoothing) {
    SynthConfig synth = SynthConfig::desk();
    synth.seed = 7 + seed;
    const SyntheticData data = generate_synthetic(synth);
    const Vocab vocab = Vocab::build(all_captions(data));
    const DatasetSplits splits{data.source_train, data.source_val, data.target_train, data.target_val};
    TrainConfig tc = TrainConfig::desk();
    tc.seed = 1 + seed;
    tc.mode = mode;
    tc.use_ls = label_smoothing;
    const ProtocolResult r = run_protocol(AdaptationMode::kUda, splits, vocab, desk_model(synth), tc);
    return {r.target.captions.bleu[0], r.target.calibration->ece};
}

constexpr int kSeeds = 5;
std::vector<DeskRun> adversarial_runs;  // shared by criteria 7 and 8

const std::vector<DeskRun>& adversarial_ls() {
    if (adversarial_runs.empty())
        for (int s = 0; s < kSeeds; ++s) adversarial_runs.push_back(desk_run(s, TrainMode::kAdversarial, true));
    return adversarial_runs;
}

Outcome adversarial_direction() {
    const double start = cpu_seconds();
    Real so = 0, adv = 0;
    std::string per_seed;
    const auto& runs = adversarial_ls();
    for (int s = 0; s < kSeeds; ++s) {
        const DeskRun base = desk_run(s, TrainMode::kSourceOnly, true);
        so += base.td_bleu1 / kSeeds;
        adv += runs[s].td_bleu1 / kSeeds;
        per_seed += (s ? " " : "") + fmt(base.td_bleu1, 3) + "/" + fmt(runs[s].td_bleu1, 3);
    }
    const double elapsed = cpu_seconds() - start;
    return {adv - so > 0.01 && elapsed < 30 * 60,
            "TD BLEU-1 source_only " + fmt(so) + " vs adversarial " + fmt(adv) + " (margin " + fmt(adv - so, 3) +
                "; per seed " + per_seed + "), " + fmt(elapsed / 60, 3) + " CPU-min"};
}

Outcome smoothing_direction() {
    Real with = 0, without = 0;
    const auto& runs = adversarial_ls();
    for (int s = 0; s < kSeeds; ++s) {
        with += runs[s].td_ece / kSeeds;
        without += desk_run(s, TrainMode::kAdversarial, false).td_ece / kSeeds;
    }
    return {with < without, "TD token ECE eps=0.1 " + fmt(with) + " vs eps=0 " + fmt(without)};
}

// ---------------------------------------------------------------------------
// 9. overfit

Outcome overfit() {
    SynthConfig synth = SynthConfig::desk();
    const SyntheticData data = generate_synthetic(synth);
    const std::vector<Sample> train(data.source_train.begin(), data.source_train.begin() + 50);
    ModelConfig mc = desk_model(synth);
    mc.dropout = 0;
    mc.vocab_size = 0;
    const Vocab vocab = Vocab::build(all_captions(data));
    mc.vocab_size = vocab.size();
    DomainHeadConfig hc;
    hc.input_dim = mc.d_model;
    CaptionModel model = init_caption_model(mc, hc, vocab, 3);

    TrainConfig tc;
    tc.mode = TrainMode::kSourceOnly;
    tc.use_ls = false;
    Trainer trainer(model, tc);

    StepBatch all;
    for (const Sample& s : train) all.captioned.push_back(&s);
    auto full_loss = [&] {
        std::mt19937_64 unused(0);
        return forward_backward(model, all, 0.0, unused, false).caption;
    };
    const Real initial = full_loss();
    Real last = initial;
    std::size_t reached = 0;
    std::mt19937_64 order_rng(9);
    for (std::size_t step = 1; step <= 200; ++step) {
        std::vector<std::size_t> idx(train.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), order_rng);
        StepBatch batch;
        for (std::size_t i = 0; i < tc.batch_size; ++i) batch.captioned.push_back(&train[idx[i]]);
        trainer.train_step(batch);
        if (step % 10 == 0) {
            last = full_loss();
            if (!reached && last < 0.1 * initial) reached = step;
        }
    }
    const auto captions = caption_samples(model, train, 1);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < train.size(); ++i)
        exact += normalize_tokenize(captions[i]) == normalize_tokenize(*train[i].caption);
    const Real accuracy = static_cast<Real>(exact) / static_cast<Real>(train.size());
    return {reached > 0 && accuracy >= 0.9,
            "caption loss " + fmt(initial) + " -> " + fmt(last) +
                (reached ? " (below 10% at step " + std::to_string(reached) + ")" : " (never below 10%)") +
                ", greedy exact match " + fmt(100 * accuracy, 3) + "%"};
}

// ---------------------------------------------------------------------------
// 10. CLI pipeline

Outcome cli_pipeline(const fs::path& cli, const fs::path& work) {
    if (cli.empty() || !fs::exists(cli)) return {false, "capgen binary not found at '" + cli.string() + "'"};
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string exe = "\"" + cli.string() + "\"";
    auto at = [&](const char* name) { return "\"" + (work / name).string() + "\""; };
    const std::vector<std::pair<std::string, std::string>> steps = {
        {"gen-data", exe + " gen-data --out " + at("data")},
        {"train", exe + " train --data " + at("data") + " --out " + at("model.ckpt")},
        {"adapt", exe + " adapt --data " + at("data") + " --init " + at("model.ckpt") + " --protocol one --out " +
                      at("adapted.ckpt")},
        {"generate", exe + " generate --ckpt " + at("adapted.ckpt") + " --input " + at("data/target_val.jsonl") +
                         " --out " + at("hyps.jsonl") + " --dump-preds " + at("preds.jsonl")},
        {"score", exe + " score --hyps " + at("hyps.jsonl") + " --refs " + at("data/target_val.jsonl") + " --out " +
                      at("score.json")},
        {"calib", exe + " calib --preds " + at("preds.jsonl") + " --out " + at("calib.json")},
        {"report", exe + " report --hyps " + at("hyps.jsonl") + " --score " + at("score.json") + " --calib " +
                       at("calib.json") + " --stack " + at("stack.txt") + " --out " + at("report.json")},
    };
    const double start = child_cpu_seconds();
    for (const auto& [name, command] : steps) {
        const std::string logged = command + " > " + at((name + ".log").c_str()) + " 2>&1";
        if (std::system(logged.c_str()) != 0) return {false, name + " failed; see " + (work / (name + ".log")).string()};
    }
    const double elapsed = child_cpu_seconds() - start;

    std::ifstream in(work / "report.json");
    const json report = json::parse(in, nullptr, false);
    const char* keys[] = {"bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor", "rouge_l",
                          "cider",  "ece",    "sce",    "tace",   "brier"};
    std::size_t populated = 0;
    for (const char* k : keys)
        populated += report.is_object() && report.contains(k) && report[k].is_number() &&
                     std::isfinite(report[k].get<double>());
    std::ifstream stack(work / "stack.txt");
    std::size_t lines = 0;
    for (std::string line; std::getline(stack, line);) lines += line.rfind("frame ", 0) == 0;
    const std::size_t frames = load_jsonl(work / "data/target_val.jsonl").size();
    return {populated == 11 && lines == frames && elapsed < 10 * 60,
            std::to_string(populated) + "/11 numbers populated, stack report " + std::to_string(lines) + "/" +
                std::to_string(frames) + " frames, " + fmt(elapsed / 60, 3) + " CPU-min"};
}

// ---------------------------------------------------------------------------
// 11. reproducibility

Outcome reproducibility() {
    auto once = [] {
        SynthConfig synth = SynthConfig::desk();
        synth.seed = 21;
        const SyntheticData data = generate_synthetic(synth);
        const Vocab vocab = Vocab::build(all_captions(data));
        const DatasetSplits splits{data.source_train, data.source_val, data.target_train, data.target_val};
        TrainConfig tc = TrainConfig::desk();
        tc.max_steps = 60;
        tc.finetune_steps = 20;
        const ProtocolResult r = run_protocol(AdaptationMode::kOneShot, splits, vocab, desk_model(synth), tc);
        return std::make_pair(r.target.to_json().dump() + r.source.to_json().dump(), parameter_hash(r.model));
    };
    const auto a = once(), b = once();
    return {a == b, std::string("score reports ") + (a.first == b.first ? "identical" : "differ") +
                        ", parameter hashes " + (a.second == b.second ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::string cli_path, work = (fs::temp_directory_path() / "capgen_acceptance").string();
    std::vector<int> only;
    app.add_option("--cli", cli_path, "path to the capgen executable");
    app.add_option("--work", work, "scratch directory for the CLI pipeline")->capture_default_str();
    app.add_option("--only", only, "run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradients},
        {"GRL contract", grl_contract},
        {"LS reduction", label_smoothing},
        {"metric oracles", metric_oracles},
        {"beam search optimality", beam_optimality},
        {"calibration metrics", calibration_fixtures},
        {"adversarial beats source-only on TD BLEU-1", adversarial_direction},
        {"label smoothing lowers TD ECE", smoothing_direction},
        {"overfit sanity", overfit},
        {"protocol pipeline", [&] { return cli_pipeline(cli_path, work); }},
        {"reproducibility", reproducibility},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
