#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "capgen/tensor.hpp"
#include "capgen/text.hpp"

namespace capgen {

enum class Domain : int { kSource = 0, kTarget = 1 };

struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> values;  // row-major

    Tensor to_tensor() const { return Tensor::matrix(rows, cols, values); }
    bool operator==(const FeatureMatrix&) const = default;
};

// One frame: region feature rows, its domain and (when labeled) a caption.
struct Sample {
    std::string id;
    Domain domain = Domain::kSource;
    FeatureMatrix regions;
    std::optional<std::string> caption;

    bool operator==(const Sample&) const = default;
};

// One JSON object per line: {"id", "domain", "regions": [[...], ...], "caption"?}.
// Errors carry the 1-based line number. With feature_dim set, every region
// row must have exactly that many entries.
std::vector<Sample> load_jsonl(const std::filesystem::path& path,
                               std::optional<std::size_t> feature_dim = std::nullopt);
void save_jsonl(std::span<const Sample> samples, const std::filesystem::path& path);

nlohmann::json sample_to_json(const Sample& sample);
Sample sample_from_json(const nlohmann::json& j, std::optional<std::size_t> feature_dim = std::nullopt);

// ---------------------------------------------------------------------------
// Synthetic two-domain generator.
//
// Every object class has a Gaussian mean shared by both domains; a predicate
// adds its own offset to the instrument row. Target rows additionally carry a
// fixed shift vector. Captions read "a/an <instrument> is <predicate> <tissue>".

struct InstrumentSpec {
    std::string name;
    std::vector<std::string> predicates;
};

struct DomainSpec {
    std::vector<InstrumentSpec> instruments;
    std::string tissue = "tissue";
    std::size_t train_count = 0;
    std::size_t val_count = 0;

    // Instruments followed by the tissue.
    std::vector<std::string> object_classes() const;
};

struct SynthConfig {
    DomainSpec source;
    DomainSpec target;
    std::size_t feature_dim = 512;
    Real class_scale = 1.0;      // stddev of class-mean entries
    Real predicate_scale = 1.0;  // stddev of predicate-offset entries
    Real tightness = 0.5;        // within-class stddev; smaller gives tighter clusters
    Real shift = 8.0;            // L2 norm of the target-domain shift vector
    std::uint64_t seed = 7;

    // 32-dim features with small split sizes.
    static SynthConfig desk();
    // 512-dim features with dataset-sized splits.
    static SynthConfig paper_scale();

    void validate() const;
    nlohmann::json to_json() const;
};

struct SyntheticData {
    std::vector<Sample> source_train, source_val, target_train, target_val;
};

SyntheticData generate_synthetic(const SynthConfig& config);

// Every caption in the four splits, source first.
std::vector<std::string> all_captions(const SyntheticData& data);

nlohmann::json dataset_manifest(const SynthConfig& config, const SyntheticData& data, const Vocab& vocab);

// ---------------------------------------------------------------------------
// Target-domain adaptation subsets.

enum class AdaptationMode { kUda, kZeroShot, kOneShot, kFewShot };

AdaptationMode parse_adaptation_mode(std::string_view name);  // uda | zero | one | few
std::string_view adaptation_mode_name(AdaptationMode mode);

struct AdaptationOptions {
    Real zero_shot_coverage = 0.85;
    Real few_shot_multiplier = 2.0;
};

// Greedy set cover over caption words. Returns indices into samples in the
// order they were picked. Ties go to the lowest sample id. Throws when a
// sample lacks a caption or when the universe cannot be covered.
std::vector<std::size_t> select_adaptation_set(std::span<const Sample> samples,
                                               std::span<const std::string> universe, AdaptationMode mode,
                                               const AdaptationOptions& options = {});

// Universe = distinct in-vocab words of the samples' captions.
std::vector<std::size_t> select_adaptation_set(std::span<const Sample> samples, const Vocab& vocab,
                                               AdaptationMode mode, const AdaptationOptions& options = {});

// Fraction of universe words present in the captions of the chosen samples.
Real caption_coverage(std::span<const Sample> samples, std::span<const std::size_t> chosen,
                      std::span<const std::string> universe);

std::vector<std::string> caption_universe(std::span<const Sample> samples, const Vocab& vocab);

}  // namespace capgen
