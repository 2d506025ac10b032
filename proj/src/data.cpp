#include "capgen/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace capgen {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON-lines IO

json sample_to_json(const Sample& sample) {
    json rows = json::array();
    for (std::size_t r = 0; r < sample.regions.rows; ++r) {
        const auto begin = sample.regions.values.begin() + static_cast<std::ptrdiff_t>(r * sample.regions.cols);
        rows.push_back(std::vector<Real>(begin, begin + static_cast<std::ptrdiff_t>(sample.regions.cols)));
    }
    json j{{"id", sample.id}, {"domain", static_cast<int>(sample.domain)}, {"regions", std::move(rows)}};
    if (sample.caption) j["caption"] = *sample.caption;
    return j;
}

Sample sample_from_json(const json& j, std::optional<std::size_t> feature_dim) {
    if (!j.is_object()) throw std::invalid_argument("sample must be a JSON object");
    Sample s;
    if (!j.contains("id") || !j["id"].is_string()) throw std::invalid_argument("missing string field 'id'");
    s.id = j["id"].get<std::string>();
    if (!j.contains("domain") || !j["domain"].is_number_integer())
        throw std::invalid_argument("missing integer field 'domain'");
    const int domain = j["domain"].get<int>();
    if (domain != 0 && domain != 1) throw std::invalid_argument("domain must be 0 or 1, got " + std::to_string(domain));
    s.domain = static_cast<Domain>(domain);
    if (!j.contains("regions") || !j["regions"].is_array() || j["regions"].empty())
        throw std::invalid_argument("'regions' must be a non-empty array of rows");
    for (const json& row : j["regions"]) {
        if (!row.is_array() || row.empty()) throw std::invalid_argument("region rows must be non-empty arrays");
        if (s.regions.rows == 0) s.regions.cols = row.size();
        if (row.size() != s.regions.cols)
            throw std::invalid_argument("region rows have differing widths " + std::to_string(s.regions.cols) +
                                        " and " + std::to_string(row.size()));
        for (const json& v : row) {
            if (!v.is_number()) throw std::invalid_argument("region entries must be numbers");
            const Real x = v.get<Real>();
            if (!std::isfinite(x)) throw std::invalid_argument("region entries must be finite");
            s.regions.values.push_back(x);
        }
        ++s.regions.rows;
    }
    if (feature_dim && s.regions.cols != *feature_dim)
        throw std::invalid_argument("region rows have " + std::to_string(s.regions.cols) + " features, expected " +
                                    std::to_string(*feature_dim));
    if (j.contains("caption") && !j["caption"].is_null()) {
        if (!j["caption"].is_string()) throw std::invalid_argument("'caption' must be a string");
        s.caption = j["caption"].get<std::string>();
    }
    return s;
}

std::vector<Sample> load_jsonl(const std::filesystem::path& path, std::optional<std::size_t> feature_dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<Sample> samples;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            samples.push_back(sample_from_json(json::parse(line), feature_dim));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return samples;
}

void save_jsonl(std::span<const Sample> samples, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const Sample& s : samples) out << sample_to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic generator

std::vector<std::string> DomainSpec::object_classes() const {
    std::vector<std::string> out;
    for (const InstrumentSpec& inst : instruments) out.push_back(inst.name);
    out.push_back(tissue);
    return out;
}

namespace {

DomainSpec default_source() {
    DomainSpec d;
    d.instruments = {
        {"bipolar forceps", {"grasping", "manipulating", "retracting"}},
        {"prograsp forceps", {"grasping", "retracting"}},
        {"monopolar curved scissors", {"cutting", "cauterizing"}},
        {"clip applier", {"clipping"}},
        {"suction", {"suctioning"}},
        {"ultrasound probe", {"ultrasound sensing"}},
        {"stapler", {"stapling"}},
        {"large needle driver", {"suturing", "looping"}},
    };
    d.tissue = "tissue";
    return d;
}

DomainSpec default_target() {
    DomainSpec d;
    d.instruments = {
        {"clip applier", {"clipping"}},
        {"suction", {"suctioning"}},
        {"spatulated monopolar cautery", {"cauterizing"}},
        {"maryland dissector", {"grasping", "manipulating"}},
    };
    d.tissue = "tissue";
    return d;
}

std::string article_for(const std::string& word) {
    return !word.empty() && std::string_view("aeiou").find(word.front()) != std::string_view::npos ? "an" : "a";
}

json domain_to_json(const DomainSpec& d) {
    json instruments = json::array();
    for (const InstrumentSpec& inst : d.instruments)
        instruments.push_back({{"name", inst.name}, {"predicates", inst.predicates}});
    return {{"instruments", instruments},
            {"tissue", d.tissue},
            {"train_count", d.train_count},
            {"val_count", d.val_count}};
}

}  // namespace

SynthConfig SynthConfig::desk() {
    SynthConfig c;
    c.source = default_source();
    c.target = default_target();
    c.source.train_count = 240;
    c.source.val_count = 60;
    c.target.train_count = 48;
    c.target.val_count = 133;
    c.feature_dim = 32;
    c.shift = 16.0;
    return c;
}

SynthConfig SynthConfig::paper_scale() {
    SynthConfig c = desk();
    c.source.train_count = 1639;
    c.source.val_count = 447;
    c.feature_dim = 512;
    return c;
}

void SynthConfig::validate() const {
    for (const DomainSpec* d : {&source, &target}) {
        if (d->instruments.empty()) throw std::invalid_argument("SynthConfig: a domain has no instruments");
        if (d->tissue.empty()) throw std::invalid_argument("SynthConfig: a domain has no tissue class");
        for (const InstrumentSpec& inst : d->instruments)
            if (inst.name.empty() || inst.predicates.empty())
                throw std::invalid_argument("SynthConfig: instrument '" + inst.name + "' needs a name and predicates");
    }
    const bool shared = std::any_of(source.instruments.begin(), source.instruments.end(), [&](const auto& s) {
        return std::any_of(target.instruments.begin(), target.instruments.end(),
                           [&](const auto& t) { return t.name == s.name; });
    });
    if (!shared) throw std::invalid_argument("SynthConfig: domains must share at least one instrument");
    if (feature_dim == 0) throw std::invalid_argument("SynthConfig: feature_dim must be positive");
    if (!(tightness > 0) || !(class_scale >= 0) || !(predicate_scale >= 0) || !(shift >= 0))
        throw std::invalid_argument("SynthConfig: scales must be non-negative and tightness positive");
}

json SynthConfig::to_json() const {
    return {{"source", domain_to_json(source)},
            {"target", domain_to_json(target)},
            {"feature_dim", feature_dim},
            {"class_scale", class_scale},
            {"predicate_scale", predicate_scale},
            {"tightness", tightness},
            {"shift", shift},
            {"seed", seed}};
}

SyntheticData generate_synthetic(const SynthConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<Real> normal(0.0, 1.0);
    const std::size_t dim = config.feature_dim;
    auto gaussian_vector = [&](Real stddev) {
        std::vector<Real> v(dim);
        for (Real& x : v) x = stddev * normal(rng);
        return v;
    };

    // Sorted so shared classes get identical means regardless of domain order.
    std::set<std::string> objects, predicates;
    for (const DomainSpec* d : {&config.source, &config.target}) {
        for (const std::string& o : d->object_classes()) objects.insert(o);
        for (const InstrumentSpec& inst : d->instruments) predicates.insert(inst.predicates.begin(), inst.predicates.end());
    }
    std::map<std::string, std::vector<Real>> class_mean, predicate_offset;
    for (const std::string& o : objects) class_mean[o] = gaussian_vector(config.class_scale);
    for (const std::string& p : predicates) predicate_offset[p] = gaussian_vector(config.predicate_scale);

    std::vector<Real> shift = gaussian_vector(1.0);
    Real norm = 0;
    for (Real x : shift) norm += x * x;
    norm = std::sqrt(norm);
    for (Real& x : shift) x = norm > 0 ? x * config.shift / norm : 0.0;

    auto draw = [&](const DomainSpec& spec, Domain domain, const std::string& id) {
        std::uniform_int_distribution<std::size_t> pick_inst(0, spec.instruments.size() - 1);
        const InstrumentSpec& inst = spec.instruments[pick_inst(rng)];
        std::uniform_int_distribution<std::size_t> pick_pred(0, inst.predicates.size() - 1);
        const std::string& predicate = inst.predicates[pick_pred(rng)];

        Sample s;
        s.id = id;
        s.domain = domain;
        s.regions.rows = 2;
        s.regions.cols = dim;
        s.regions.values.resize(2 * dim);
        const std::vector<Real>& inst_mean = class_mean.at(inst.name);
        const std::vector<Real>& pred_offset = predicate_offset.at(predicate);
        const std::vector<Real>& tissue_mean = class_mean.at(spec.tissue);
        const Real domain_scale = domain == Domain::kTarget ? 1.0 : 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            s.regions.values[c] =
                inst_mean[c] + pred_offset[c] + config.tightness * normal(rng) + domain_scale * shift[c];
            s.regions.values[dim + c] = tissue_mean[c] + config.tightness * normal(rng) + domain_scale * shift[c];
        }
        s.caption = article_for(inst.name) + " " + inst.name + " is " + predicate + " " + spec.tissue;
        return s;
    };

    auto make_split = [&](const DomainSpec& spec, Domain domain, const char* prefix, std::size_t count) {
        std::vector<Sample> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            char id[48];
            std::snprintf(id, sizeof(id), "%s-%05zu", prefix, i);
            out.push_back(draw(spec, domain, id));
        }
        return out;
    };

    SyntheticData data;
    data.source_train = make_split(config.source, Domain::kSource, "src-train", config.source.train_count);
    data.source_val = make_split(config.source, Domain::kSource, "src-val", config.source.val_count);
    data.target_train = make_split(config.target, Domain::kTarget, "tgt-train", config.target.train_count);
    data.target_val = make_split(config.target, Domain::kTarget, "tgt-val", config.target.val_count);
    return data;
}

std::vector<std::string> all_captions(const SyntheticData& data) {
    std::vector<std::string> out;
    for (const auto* split : {&data.source_train, &data.source_val, &data.target_train, &data.target_val})
        for (const Sample& s : *split)
            if (s.caption) out.push_back(*s.caption);
    return out;
}

json dataset_manifest(const SynthConfig& config, const SyntheticData& data, const Vocab& vocab) {
    auto object_count = [](const DomainSpec& d) { return d.object_classes().size(); };
    std::size_t shared = 0;
    for (const std::string& o : config.source.object_classes()) {
        const auto t = config.target.object_classes();
        shared += std::count(t.begin(), t.end(), o) > 0 ? 1 : 0;
    }
    return {{"format", "capgen-dataset"},
            {"version", 1},
            {"seed", config.seed},
            {"counts",
             {{"source_train", data.source_train.size()},
              {"source_val", data.source_val.size()},
              {"target_train", data.target_train.size()},
              {"target_val", data.target_val.size()}}},
            {"vocab_size", vocab.size()},
            {"source_object_classes", object_count(config.source)},
            {"target_object_classes", object_count(config.target)},
            {"shared_object_classes", shared},
            {"config", config.to_json()}};
}

// ---------------------------------------------------------------------------
// Adaptation subsets

AdaptationMode parse_adaptation_mode(std::string_view name) {
    if (name == "uda") return AdaptationMode::kUda;
    if (name == "zero") return AdaptationMode::kZeroShot;
    if (name == "one") return AdaptationMode::kOneShot;
    if (name == "few") return AdaptationMode::kFewShot;
    throw std::invalid_argument("unknown adaptation mode '" + std::string(name) + "' (expected uda|zero|one|few)");
}

std::string_view adaptation_mode_name(AdaptationMode mode) {
    switch (mode) {
        case AdaptationMode::kUda: return "uda";
        case AdaptationMode::kZeroShot: return "zero";
        case AdaptationMode::kOneShot: return "one";
        case AdaptationMode::kFewShot: return "few";
    }
    return "?";
}

namespace {

std::vector<std::set<std::size_t>> word_sets(std::span<const Sample> samples, std::span<const std::string> universe) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < universe.size(); ++i) index.emplace(universe[i], i);
    std::vector<std::set<std::size_t>> sets;
    for (const Sample& s : samples) {
        if (!s.caption) throw std::invalid_argument("adaptation selection: sample " + s.id + " has no caption");
        std::set<std::size_t> words;
        for (const std::string& tok : normalize_tokenize(*s.caption))
            if (const auto it = index.find(tok); it != index.end()) words.insert(it->second);
        sets.push_back(std::move(words));
    }
    return sets;
}

}  // namespace

std::vector<std::string> caption_universe(std::span<const Sample> samples, const Vocab& vocab) {
    std::vector<std::string> words;
    std::set<std::string> seen;
    for (const Sample& s : samples) {
        if (!s.caption) continue;
        for (const std::string& tok : normalize_tokenize(*s.caption))
            if (vocab.contains(tok) && seen.insert(tok).second) words.push_back(tok);
    }
    return words;
}

Real caption_coverage(std::span<const Sample> samples, std::span<const std::size_t> chosen,
                      std::span<const std::string> universe) {
    if (universe.empty()) return 1.0;
    const auto sets = word_sets(samples, universe);
    std::set<std::size_t> covered;
    for (const std::size_t i : chosen) covered.insert(sets.at(i).begin(), sets.at(i).end());
    return static_cast<Real>(covered.size()) / static_cast<Real>(universe.size());
}

std::vector<std::size_t> select_adaptation_set(std::span<const Sample> samples,
                                               std::span<const std::string> universe, AdaptationMode mode,
                                               const AdaptationOptions& options) {
    if (mode == AdaptationMode::kUda) return {};
    if (universe.empty()) throw std::invalid_argument("adaptation selection: empty word universe");
    const auto sets = word_sets(samples, universe);
    const Real target_coverage = mode == AdaptationMode::kZeroShot ? options.zero_shot_coverage : 1.0;
    const Real total = static_cast<Real>(universe.size());

    // Lower id first among equal gains.
    auto better = [&](std::size_t a, std::size_t b, std::size_t gain_a, std::size_t gain_b) {
        if (gain_a != gain_b) return gain_a > gain_b;
        return samples[a].id < samples[b].id;
    };

    std::vector<std::size_t> chosen;
    std::vector<bool> taken(samples.size(), false);
    std::set<std::size_t> covered;
    while (static_cast<Real>(covered.size()) / total < target_coverage) {
        std::size_t best = samples.size(), best_gain = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (taken[i]) continue;
            std::size_t gain = 0;
            for (const std::size_t w : sets[i]) gain += covered.count(w) ? 0 : 1;
            if (gain > 0 && (best == samples.size() || better(i, best, gain, best_gain))) {
                best = i;
                best_gain = gain;
            }
        }
        if (best == samples.size())
            throw std::invalid_argument("adaptation selection: coverage " +
                                        std::to_string(static_cast<Real>(covered.size()) / total) +
                                        " cannot reach the required " + std::to_string(target_coverage));
        taken[best] = true;
        chosen.push_back(best);
        covered.insert(sets[best].begin(), sets[best].end());
    }

    if (mode == AdaptationMode::kFewShot) {
        const auto extra = static_cast<std::size_t>(std::llround(options.few_shot_multiplier * chosen.size()));
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (!taken[i]) rest.push_back(i);
        std::sort(rest.begin(), rest.end(),
                  [&](std::size_t a, std::size_t b) { return better(a, b, sets[a].size(), sets[b].size()); });
        for (std::size_t i = 0; i < rest.size() && i < extra; ++i) chosen.push_back(rest[i]);
    }
    return chosen;
}

std::vector<std::size_t> select_adaptation_set(std::span<const Sample> samples, const Vocab& vocab,
                                               AdaptationMode mode, const AdaptationOptions& options) {
    if (mode == AdaptationMode::kUda) return {};
    for (const Sample& s : samples)
        if (!s.caption) throw std::invalid_argument("adaptation selection: sample " + s.id + " has no caption");
    const std::vector<std::string> universe = caption_universe(samples, vocab);
    return select_adaptation_set(samples, universe, mode, options);
}

}  // namespace capgen
