#pragma once

// Adversarial caption training.
//
// One step encodes every frame of the batch once, takes the caption loss on
// captioned frames, the domain loss on source frames (label 0) and target
// frames (label 1) through the reversed-gradient head, and applies a single
// Adam update to the sum of the three terms.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "capgen/caption_metrics.hpp"
#include "capgen/calibration.hpp"
#include "capgen/data.hpp"
#include "capgen/domain_head.hpp"
#include "capgen/losses.hpp"
#include "capgen/model.hpp"
#include "capgen/text.hpp"

namespace capgen {

enum class TrainMode { kSourceOnly, kAdversarial };

TrainMode parse_train_mode(std::string_view name);  // source_only | adversarial
std::string_view train_mode_name(TrainMode mode);

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    std::size_t warmup = 200;
    std::size_t max_steps = 0;  // 0: run all epochs
    Real lr_factor = 1.0;
    Real adam_beta1 = 0.9;
    Real adam_beta2 = 0.98;
    Real adam_eps = 1e-9;
    std::uint64_t seed = 1;
    Real label_smoothing = 0.1;
    Real grl_lambda = 1.0;
    std::size_t n_domain_classes = 3;
    bool use_grl = true;
    bool use_ls = true;
    TrainMode mode = TrainMode::kAdversarial;
    AdaptationMode adaptation = AdaptationMode::kUda;
    std::size_t finetune_steps = 100;
    bool finetune_domain_loss = false;
    std::size_t beam_size = 5;

    // Short schedule for the 32-dim synthetic preset. Adam's epsilon is
    // raised so that parameters fed only by the reversed domain gradient
    // (units that fire on target frames alone) move in proportion to lambda
    // instead of at a normalized full step.
    static TrainConfig desk();
    // Full-size settings: batch 50, warmup 10000.
    static TrainConfig paper_scale();

    Real caption_epsilon() const { return use_ls ? label_smoothing : 0.0; }
    bool adversarial() const { return mode == TrainMode::kAdversarial && use_grl; }
    void validate() const;
    nlohmann::json to_json() const;
};

// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), times factor.
Real lr_schedule(std::size_t step, std::size_t d_model, std::size_t warmup, Real factor = 1.0);

// Captioning network, domain head and vocabulary as one unit.
struct CaptionModel {
    ModelConfig config;
    DomainHeadConfig head_config;
    ModelParams params;
    DomainHeadParams head;
    Vocab vocab;
    std::size_t step = 0;  // optimizer steps taken so far

    std::vector<NamedTensor> named() const;
};

CaptionModel init_caption_model(const ModelConfig& config, const DomainHeadConfig& head_config, Vocab vocab,
                                std::uint64_t seed);

// FNV-1a over every parameter value in registration order.
std::uint64_t parameter_hash(const CaptionModel& model);

class Adam {
public:
    Adam(std::vector<NamedTensor> params, Real beta1, Real beta2, Real eps);

    void zero_grad();
    void step(Real lr);
    std::size_t steps() const { return t_; }

private:
    std::vector<NamedTensor> params_;
    std::vector<std::vector<Real>> m_, v_;
    Real beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct StepBatch {
    std::vector<const Sample*> captioned;      // caption loss
    std::vector<const Sample*> source_domain;  // domain label 0
    std::vector<const Sample*> target_domain;  // domain label 1
};

struct StepLosses {
    Real total = 0, caption = 0, source_domain = 0, target_domain = 0;
};

// Builds the graph for one batch and backpropagates. Does not update
// parameters; gradients accumulate into them.
StepLosses forward_backward(CaptionModel& model, const StepBatch& batch, Real caption_epsilon, std::mt19937_64& rng,
                            bool training = true);

// Token ids (bos ... eos) of a sample's caption; throws when absent.
std::vector<int> caption_ids(const Sample& sample, const CaptionModel& model);

class Trainer {
public:
    Trainer(CaptionModel& model, TrainConfig config, std::ostream* log = nullptr);

    // One optimizer update. Throws std::runtime_error on a non-finite loss.
    StepLosses train_step(const StepBatch& batch);

    // Epoch loop over source captions; target frames feed the domain loss
    // in adversarial mode.
    void fit(std::span<const Sample> source, std::span<const Sample> target);

    // Caption-loss updates on the adaptation subset for finetune_steps steps.
    // With finetune_domain_loss the domain terms stay on using the given
    // source/target pools.
    void finetune(std::span<const Sample> subset, std::span<const Sample> source, std::span<const Sample> target);

    const TrainConfig& config() const { return config_; }
    std::mt19937_64& rng() { return rng_; }

private:
    Real current_lr() const;

    CaptionModel& model_;
    TrainConfig config_;
    std::ostream* log_;
    Adam adam_;
    std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct ScoreReport {
    CaptionScores captions;
    std::optional<CalibrationScores> calibration;

    nlohmann::json to_json() const;
    static ScoreReport from_json(const nlohmann::json& j);
};

std::vector<std::string> caption_samples(const CaptionModel& model, std::span<const Sample> samples,
                                         std::size_t beam_size);

// Teacher-forced next-token distributions at every non-pad caption position.
PredictionSet token_predictions(const CaptionModel& model, std::span<const Sample> samples);

ScoreReport evaluate(const CaptionModel& model, std::span<const Sample> samples, std::size_t beam_size,
                     bool with_calibration = true);

// ---------------------------------------------------------------------------
// Protocols

struct DatasetSplits {
    std::vector<Sample> source_train, source_val, target_train, target_val;
};

struct ProtocolResult {
    CaptionModel model;
    ScoreReport target;
    ScoreReport source;
    std::vector<std::size_t> adaptation_set;
    std::uint64_t hash_before_adaptation = 0;
    std::uint64_t hash_after_adaptation = 0;
};

// Selects the adaptation subset and fine-tunes on it (no-op for uda).
std::vector<std::size_t> adapt_model(CaptionModel& model, const DatasetSplits& data, const TrainConfig& config,
                                     std::ostream* log = nullptr);

// Training (source_only or adversarial per config), adaptation, then
// evaluation on both validation splits.
ProtocolResult run_protocol(AdaptationMode mode, const DatasetSplits& data, const Vocab& vocab,
                            const ModelConfig& model_config, TrainConfig config, std::ostream* log = nullptr);

}  // namespace capgen
