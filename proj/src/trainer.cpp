#include "capgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "capgen/decoding.hpp"

namespace capgen {

using nlohmann::json;

TrainMode parse_train_mode(std::string_view name) {
    if (name == "source_only") return TrainMode::kSourceOnly;
    if (name == "adversarial") return TrainMode::kAdversarial;
    throw std::invalid_argument("unknown training mode '" + std::string(name) + "' (expected source_only|adversarial)");
}

std::string_view train_mode_name(TrainMode mode) {
    return mode == TrainMode::kSourceOnly ? "source_only" : "adversarial";
}

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.max_steps = 300;
    c.lr_factor = 0.3;
    c.adam_eps = 1e-2;
    c.grl_lambda = 0.01;
    return c;
}

TrainConfig TrainConfig::paper_scale() {
    TrainConfig c;
    c.batch_size = 50;
    c.warmup = 10000;
    return c;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("TrainConfig: " + what); };
    if (epochs == 0 || batch_size == 0 || warmup == 0) fail("epochs, batch_size and warmup must be positive");
    if (beam_size == 0) fail("beam_size must be positive");
    if (!(label_smoothing >= 0 && label_smoothing <= 1)) fail("label_smoothing must lie in [0, 1]");
    if (!(grl_lambda >= 0) || !std::isfinite(grl_lambda)) fail("grl_lambda must be finite and non-negative");
    if (n_domain_classes != 2 && n_domain_classes != 3) fail("n_domain_classes must be 2 or 3");
    if (!(lr_factor > 0)) fail("lr_factor must be positive");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1) || !(adam_eps > 0))
        fail("Adam betas must lie in [0, 1) and eps must be positive");
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"warmup", warmup},
            {"max_steps", max_steps},
            {"lr_factor", lr_factor},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"seed", seed},
            {"label_smoothing", label_smoothing},
            {"grl_lambda", grl_lambda},
            {"n_domain_classes", n_domain_classes},
            {"use_grl", use_grl},
            {"use_ls", use_ls},
            {"mode", train_mode_name(mode)},
            {"adaptation", adaptation_mode_name(adaptation)},
            {"finetune_steps", finetune_steps},
            {"finetune_domain_loss", finetune_domain_loss},
            {"beam_size", beam_size},
            {"caption_loss_reduction", "mean over non-pad tokens"}};
}

Real lr_schedule(std::size_t step, std::size_t d_model, std::size_t warmup, Real factor) {
    if (step < 1) throw std::invalid_argument("lr_schedule: step must be at least 1");
    const Real s = static_cast<Real>(step);
    return factor * std::pow(static_cast<Real>(d_model), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(static_cast<Real>(warmup), -1.5));
}

// ---------------------------------------------------------------------------
// Model bundle

std::vector<NamedTensor> CaptionModel::named() const {
    std::vector<NamedTensor> out = params.named();
    for (NamedTensor& entry : head.named()) out.push_back(std::move(entry));
    return out;
}

CaptionModel init_caption_model(const ModelConfig& config, const DomainHeadConfig& head_config, Vocab vocab,
                                std::uint64_t seed) {
    if (config.vocab_size != vocab.size())
        throw std::invalid_argument("model vocab_size " + std::to_string(config.vocab_size) +
                                    " does not match vocabulary of " + std::to_string(vocab.size()));
    if (head_config.input_dim != config.d_model)
        throw std::invalid_argument("domain head input_dim must equal d_model");
    std::mt19937_64 rng(seed);
    CaptionModel model{config, head_config, init_model(config, rng), {}, std::move(vocab), 0};
    model.head = init_domain_head(head_config, rng);
    return model;
}

std::uint64_t parameter_hash(const CaptionModel& model) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, tensor] : model.named())
        for (const Real v : tensor.data()) {
            unsigned char bytes[sizeof(Real)];
            std::memcpy(bytes, &v, sizeof(Real));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ULL;
            }
        }
    return h;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<NamedTensor> params, Real beta1, Real beta2, Real eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& entry : params_) {
        m_.emplace_back(entry.second.size(), 0.0);
        v_.emplace_back(entry.second.size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& entry : params_) entry.second.zero_grad();
}

void Adam::step(Real lr) {
    ++t_;
    const Real correction1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
    const Real correction2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& param = params_[p].second;
        const auto grad = param.grad();
        auto value = param.mutable_data();
        auto& m = m_[p];
        auto& v = v_[p];
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1 - beta2_) * grad[i] * grad[i];
            const Real m_hat = m[i] / correction1;
            const Real v_hat = v[i] / correction2;
            value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

// ---------------------------------------------------------------------------
// Forward / backward

std::vector<int> caption_ids(const Sample& sample, const CaptionModel& model) {
    if (!sample.caption) throw std::invalid_argument("sample " + sample.id + " has no caption");
    const std::vector<std::string> tokens = normalize_tokenize(*sample.caption);
    std::vector<int> ids = encode_caption(tokens, model.vocab, tokens.size() + 2);
    if (ids.size() > model.config.max_caption_len + 1)
        throw std::invalid_argument("caption of sample " + sample.id + " is longer than max_caption_len allows");
    return ids;
}

namespace {

Tensor stacked_summaries(const std::vector<const Sample*>& samples,
                         const std::map<const Sample*, std::vector<Tensor>>& encoded, std::size_t d_model) {
    std::vector<Tensor> rows;
    rows.reserve(samples.size());
    for (const Sample* s : samples) rows.push_back(reshape(encoder_summary(encoded.at(s)), {1, d_model}));
    return concat(rows, 0);
}

}  // namespace

StepLosses forward_backward(CaptionModel& model, const StepBatch& batch, Real caption_epsilon, std::mt19937_64& rng,
                            bool training) {
    Tape tape;
    const ForwardMode mode{training, &rng};
    std::map<const Sample*, std::vector<Tensor>> encoded;
    for (const auto* group : {&batch.captioned, &batch.source_domain, &batch.target_domain})
        for (const Sample* s : *group)
            if (!encoded.count(s)) encoded.emplace(s, encode(s->regions.to_tensor(), model.config, model.params, mode));

    Tensor caption;
    if (!batch.captioned.empty()) {
        std::vector<Tensor> logits;
        std::vector<int> targets;
        for (const Sample* s : batch.captioned) {
            const std::vector<int> ids = caption_ids(*s, model);
            const std::span<const int> inputs(ids.data(), ids.size() - 1);
            logits.push_back(decode(inputs, encoded.at(s), model.config, model.params, mode));
            targets.insert(targets.end(), ids.begin() + 1, ids.end());
        }
        caption = caption_loss(concat(logits, 0), targets, caption_epsilon, Vocab::kPad);
    } else {
        caption = Tensor::scalar(0.0);
    }

    Tensor source_loss, target_loss;
    if (!batch.source_domain.empty()) {
        const Tensor logits = domain_logits(stacked_summaries(batch.source_domain, encoded, model.config.d_model),
                                            model.head_config, model.head);
        source_loss = ce_ls_rows(logits, std::vector<int>(batch.source_domain.size(), 0), 0.0);
    }
    if (!batch.target_domain.empty()) {
        const Tensor logits = domain_logits(stacked_summaries(batch.target_domain, encoded, model.config.d_model),
                                            model.head_config, model.head);
        target_loss = ce_ls_rows(logits, std::vector<int>(batch.target_domain.size(), 1), 0.0);
    }

    const LossBreakdown losses = total_loss(caption, source_loss, target_loss);
    tape.backward(losses.total);
    return {losses.total.item(), losses.caption, losses.source_domain, losses.target_domain};
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(CaptionModel& model, TrainConfig config, std::ostream* log)
    : model_(model),
      config_(std::move(config)),
      log_(log),
      adam_(model.named(), config_.adam_beta1, config_.adam_beta2, config_.adam_eps),
      rng_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
    config_.validate();
    model_.head_config.grl_lambda = config_.grl_lambda;
}

Real Trainer::current_lr() const {
    return lr_schedule(model_.step + 1, model_.config.d_model, config_.warmup, config_.lr_factor);
}

StepLosses Trainer::train_step(const StepBatch& batch) {
    adam_.zero_grad();
    const StepLosses losses = forward_backward(model_, batch, config_.caption_epsilon(), rng_);
    if (!std::isfinite(losses.total))
        throw std::runtime_error("non-finite loss at step " + std::to_string(model_.step + 1) +
                                 ": L_y=" + std::to_string(losses.caption) + " L_S=" +
                                 std::to_string(losses.source_domain) + " L_T=" + std::to_string(losses.target_domain));
    const Real lr = current_lr();
    adam_.step(lr);
    ++model_.step;
    if (log_)
        *log_ << json{{"step", model_.step},
                      {"lr", lr},
                      {"L", losses.total},
                      {"L_y", losses.caption},
                      {"L_S", losses.source_domain},
                      {"L_T", losses.target_domain}}
                     .dump()
              << '\n';
    return losses;
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

// Endless reshuffled stream of indices.
class Cycler {
public:
    Cycler(std::size_t n, std::mt19937_64& rng) : n_(n), rng_(rng) {}

    std::vector<std::size_t> take(std::size_t count) {
        std::vector<std::size_t> out;
        if (n_ == 0) return out;
        while (out.size() < count) {
            if (pos_ == order_.size()) {
                order_ = shuffled(n_, rng_);
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    std::size_t n_;
    std::mt19937_64& rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

}  // namespace

void Trainer::fit(std::span<const Sample> source, std::span<const Sample> target) {
    if (source.empty()) throw std::invalid_argument("fit: no source samples");
    const bool adversarial = config_.adversarial();
    if (adversarial && target.empty()) throw std::invalid_argument("fit: adversarial mode needs target samples");
    Cycler target_stream(target.size(), rng_);
    const std::size_t per_epoch = (source.size() + config_.batch_size - 1) / config_.batch_size;
    std::size_t total = config_.epochs * per_epoch;
    if (config_.max_steps) total = std::min(total, config_.max_steps);
    std::size_t steps = 0;
    for (std::size_t epoch = 0; epoch < config_.epochs && steps < total; ++epoch) {
        const std::vector<std::size_t> order = shuffled(source.size(), rng_);
        for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
            if (steps >= total) break;
            StepBatch batch;
            for (std::size_t i = start; i < std::min(order.size(), start + config_.batch_size); ++i)
                batch.captioned.push_back(&source[order[i]]);
            if (adversarial) {
                batch.source_domain = batch.captioned;
                for (const std::size_t i : target_stream.take(batch.captioned.size()))
                    batch.target_domain.push_back(&target[i]);
            }
            train_step(batch);
            ++steps;
        }
    }
}

void Trainer::finetune(std::span<const Sample> subset, std::span<const Sample> source, std::span<const Sample> target) {
    if (subset.empty()) return;
    const bool with_domain = config_.finetune_domain_loss && config_.adversarial();
    Cycler subset_stream(subset.size(), rng_);
    Cycler source_stream(source.size(), rng_);
    Cycler target_stream(target.size(), rng_);
    const std::size_t batch_size = std::min(config_.batch_size, subset.size());
    for (std::size_t step = 0; step < config_.finetune_steps; ++step) {
        StepBatch batch;
        for (const std::size_t i : subset_stream.take(batch_size)) batch.captioned.push_back(&subset[i]);
        if (with_domain) {
            for (const std::size_t i : source_stream.take(batch_size)) batch.source_domain.push_back(&source[i]);
            for (const std::size_t i : target_stream.take(batch_size)) batch.target_domain.push_back(&target[i]);
        }
        train_step(batch);
    }
}

// ---------------------------------------------------------------------------
// Evaluation

json ScoreReport::to_json() const {
    json j{{"format", "capgen-score-report"},
           {"version", 1},
           {"corpus_size", captions.corpus_size},
           {"bleu_1", captions.bleu[0]},
           {"bleu_2", captions.bleu[1]},
           {"bleu_3", captions.bleu[2]},
           {"bleu_4", captions.bleu[3]},
           {"meteor", captions.meteor},
           {"rouge_l", captions.rouge_l},
           {"cider", captions.cider},
           {"metric_versions",
            {{"bleu", "corpus clipped precision, geometric mean, brevity penalty, floor 1e-9"},
             {"meteor", "meteor-lite exact unigram match, greedy leftmost alignment, no stemming or synonyms"},
             {"rouge_l", "lcs f-measure beta=1.2, sentence average"},
             {"cider", "cider-d sigma=6, n=1..4, idf from references, x10"},
             {"calibration", "token-level teacher forcing; ece/sce 10 equal-width bins; tace 15 equal-mass bins, "
                             "threshold 0.01"}}}};
    if (calibration) {
        j["ece"] = calibration->ece;
        j["sce"] = calibration->sce;
        j["tace"] = calibration->tace;
        j["brier"] = calibration->brier;
        j["calibration_predictions"] = calibration->predictions;
    }
    return j;
}

ScoreReport ScoreReport::from_json(const json& j) {
    ScoreReport r;
    r.captions.corpus_size = j.value("corpus_size", std::size_t{0});
    for (int n = 1; n <= 4; ++n) r.captions.bleu[n - 1] = j.at("bleu_" + std::to_string(n)).get<Real>();
    r.captions.meteor = j.at("meteor").get<Real>();
    r.captions.rouge_l = j.at("rouge_l").get<Real>();
    r.captions.cider = j.at("cider").get<Real>();
    if (j.contains("ece"))
        r.calibration = CalibrationScores{j.at("ece").get<Real>(), j.at("sce").get<Real>(), j.at("tace").get<Real>(),
                                          j.at("brier").get<Real>(),
                                          j.value("calibration_predictions", std::size_t{0})};
    return r;
}

std::vector<std::string> caption_samples(const CaptionModel& model, std::span<const Sample> samples,
                                         std::size_t beam_size) {
    std::vector<std::string> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) {
        const Beam best = generate(s.regions.to_tensor(), model.config, model.params, beam_size,
                                   model.config.max_caption_len);
        out.push_back(decode_ids(best.tokens, model.vocab));
    }
    return out;
}

PredictionSet token_predictions(const CaptionModel& model, std::span<const Sample> samples) {
    PredictionSet preds(model.vocab.size());
    for (const Sample& s : samples) {
        if (!s.caption) continue;
        const std::vector<int> ids = caption_ids(s, model);
        const std::vector<Tensor> encoded = encode(s.regions.to_tensor(), model.config, model.params);
        const Tensor probs =
            softmax(decode(std::span<const int>(ids.data(), ids.size() - 1), encoded, model.config, model.params), 1);
        const std::size_t k = probs.dim(1);
        for (std::size_t pos = 0; pos + 1 < ids.size(); ++pos) {
            if (ids[pos + 1] == Vocab::kPad) continue;
            preds.add(probs.data().subspan(pos * k, k), ids[pos + 1]);
        }
    }
    return preds;
}

ScoreReport evaluate(const CaptionModel& model, std::span<const Sample> samples, std::size_t beam_size,
                     bool with_calibration) {
    const std::vector<std::string> hyps = caption_samples(model, samples, beam_size);
    TokenizedCorpus hyp_tokens, ref_tokens;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].caption) continue;
        hyp_tokens.push_back(normalize_tokenize(hyps[i]));
        ref_tokens.push_back(normalize_tokenize(*samples[i].caption));
    }
    ScoreReport report;
    report.captions = score_captions(hyp_tokens, ref_tokens);
    if (with_calibration) report.calibration = score_calibration(token_predictions(model, samples));
    return report;
}

// ---------------------------------------------------------------------------
// Protocols

std::vector<std::size_t> adapt_model(CaptionModel& model, const DatasetSplits& data, const TrainConfig& config,
                                     std::ostream* log) {
    const std::vector<std::size_t> chosen = select_adaptation_set(data.target_train, model.vocab, config.adaptation);
    if (chosen.empty()) return chosen;
    std::vector<Sample> subset;
    subset.reserve(chosen.size());
    for (const std::size_t i : chosen) subset.push_back(data.target_train[i]);
    Trainer trainer(model, config, log);
    trainer.finetune(subset, data.source_train, data.target_train);
    return chosen;
}

ProtocolResult run_protocol(AdaptationMode mode, const DatasetSplits& data, const Vocab& vocab,
                            const ModelConfig& model_config, TrainConfig config, std::ostream* log) {
    config.validate();
    config.adaptation = mode;
    ModelConfig mc = model_config;
    mc.vocab_size = vocab.size();
    const DomainHeadConfig head{mc.d_model, 64, 32, config.n_domain_classes, config.grl_lambda};
    ProtocolResult result{init_caption_model(mc, head, vocab, config.seed), {}, {}, {}, 0, 0};
    {
        Trainer trainer(result.model, config, log);
        trainer.fit(data.source_train, data.target_train);
    }
    result.hash_before_adaptation = parameter_hash(result.model);
    result.adaptation_set = adapt_model(result.model, data, config, log);
    result.hash_after_adaptation = parameter_hash(result.model);
    result.target = evaluate(result.model, data.target_val, config.beam_size);
    result.source = evaluate(result.model, data.source_val, config.beam_size);
    return result;
}

}  // namespace capgen
