#include "capgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace capgen {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'A', 'P', 'G', 'E', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    return value;
}

std::string get_string(std::istream& in, std::size_t length, const std::filesystem::path& path) {
    std::string s(length, '\0');
    if (length && !in.read(s.data(), static_cast<std::streamsize>(length)))
        throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    return s;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
    return {{"d_model", c.d_model},         {"n_heads", c.n_heads},
            {"n_layers", c.n_layers},       {"n_memory_slots", c.n_memory_slots},
            {"ff_width", c.ff_width},       {"feature_dim", c.feature_dim},
            {"max_caption_len", c.max_caption_len}, {"vocab_size", c.vocab_size},
            {"dropout", c.dropout},         {"layer_norm_eps", c.layer_norm_eps}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_memory_slots = j.at("n_memory_slots").get<std::size_t>();
    c.ff_width = j.at("ff_width").get<std::size_t>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.max_caption_len = j.at("max_caption_len").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.dropout = j.at("dropout").get<Real>();
    c.layer_norm_eps = j.at("layer_norm_eps").get<Real>();
    c.validate();
    return c;
}

json head_config_to_json(const DomainHeadConfig& c) {
    return {{"input_dim", c.input_dim},
            {"hidden1", c.hidden1},
            {"hidden2", c.hidden2},
            {"n_domain_classes", c.n_domain_classes},
            {"grl_lambda", c.grl_lambda}};
}

DomainHeadConfig head_config_from_json(const json& j) {
    DomainHeadConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden1 = j.at("hidden1").get<std::size_t>();
    c.hidden2 = j.at("hidden2").get<std::size_t>();
    c.n_domain_classes = j.at("n_domain_classes").get<std::size_t>();
    c.grl_lambda = j.at("grl_lambda").get<Real>();
    c.validate();
    return c;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
    return std::filesystem::path(checkpoint.string() + ".manifest.json");
}

void save_checkpoint(const CaptionModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    const json header{{"model", model_config_to_json(model.config)},
                      {"domain_head", head_config_to_json(model.head_config)},
                      {"vocab", model.vocab.tokens()},
                      {"step", model.step}};
    const std::string header_text = header.dump();
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    const std::vector<NamedTensor> arrays = model.named();
    put<std::uint64_t>(out, arrays.size());
    json manifest = json::object();
    for (const auto& [name, tensor] : arrays) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
        for (const std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(tensor.data().data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(Real)));
        manifest[name] = tensor.shape();
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());

    std::ofstream mf(manifest_path(path));
    if (!mf) throw std::runtime_error("cannot write manifest for " + path.string());
    mf << json{{"format", "capgen-checkpoint"}, {"version", kVersion}, {"arrays", manifest}}.dump(2) << '\n';
}

CaptionModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path.string() + " is not a capgen checkpoint");
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion)
        throw std::runtime_error("checkpoint " + path.string() + " has unsupported version " + std::to_string(version));
    const auto header_len = get<std::uint64_t>(in, path);
    const json header = json::parse(get_string(in, header_len, path));

    const ModelConfig config = model_config_from_json(header.at("model"));
    const DomainHeadConfig head = head_config_from_json(header.at("domain_head"));
    const auto tokens = header.at("vocab").get<std::vector<std::string>>();
    Vocab vocab;
    if (tokens.size() < Vocab::kSpecialCount)
        throw std::runtime_error("checkpoint " + path.string() + " has a truncated vocabulary");
    {
        std::vector<std::string> words(tokens.begin() + Vocab::kSpecialCount, tokens.end());
        vocab = Vocab::build(std::vector<std::string>{join_tokens(words)});
        if (vocab.tokens() != tokens)
            throw std::runtime_error("checkpoint " + path.string() + " vocabulary does not rebuild identically");
    }

    CaptionModel model = init_caption_model(config, head, std::move(vocab), 0);
    model.step = header.at("step").get<std::size_t>();
    std::map<std::string, Tensor> by_name;
    for (auto& [name, tensor] : model.named()) by_name.emplace(name, tensor);

    const auto count = get<std::uint64_t>(in, path);
    if (count != by_name.size())
        throw std::runtime_error("checkpoint " + path.string() + " holds " + std::to_string(count) +
                                 " arrays, model expects " + std::to_string(by_name.size()));
    for (std::uint64_t a = 0; a < count; ++a) {
        const std::string name = get_string(in, get<std::uint32_t>(in, path), path);
        const auto rank = get<std::uint32_t>(in, path);
        Shape shape(rank);
        for (auto& d : shape) d = get<std::uint64_t>(in, path);
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint array '" + name + "' is unknown to the model");
        if (it->second.shape() != shape)
            throw std::runtime_error("checkpoint array '" + name + "' has shape " + shape_string(shape) +
                                     ", model expects " + shape_string(it->second.shape()));
        auto values = it->second.mutable_data();
        if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(Real))))
            throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    }
    return model;
}

}  // namespace capgen
