#include "capgen/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace capgen {

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelConfig: " + what); };
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
        fail("d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
             std::to_string(n_heads) + ")");
    if (n_layers < 1) fail("n_layers must be at least 1");
    if (ff_width == 0) fail("ff_width must be positive");
    if (feature_dim == 0) fail("feature_dim must be positive");
    if (max_caption_len < 2) fail("max_caption_len must be at least 2");
    if (vocab_size < 2) fail("vocab_size must be at least 2");
    if (!(dropout >= 0 && dropout < 1)) fail("dropout must lie in [0, 1)");
    if (!(layer_norm_eps > 0)) fail("layer_norm_eps must be positive");
}

Tensor Linear::operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }

namespace {

Tensor xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const Real limit = std::sqrt(6.0 / static_cast<Real>(in + out));
    std::uniform_real_distribution<Real> dist(-limit, limit);
    std::vector<Real> values(in * out);
    for (Real& v : values) v = dist(rng);
    return Tensor::matrix(in, out, std::move(values), true);
}

Tensor gaussian(std::size_t rows, std::size_t cols, Real stddev, std::mt19937_64& rng) {
    std::normal_distribution<Real> dist(0.0, stddev);
    std::vector<Real> values(rows * cols);
    for (Real& v : values) v = dist(rng);
    return Tensor::matrix(rows, cols, std::move(values), true);
}

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    return {xavier(in, out, rng), Tensor::zeros({out}, true)};
}

LayerNormParams make_norm(std::size_t width) {
    return {Tensor::filled({width}, 1.0, true), Tensor::zeros({width}, true)};
}

AttentionParams make_attention(std::size_t d, std::mt19937_64& rng) {
    return {make_linear(d, d, rng), make_linear(d, d, rng), make_linear(d, d, rng), make_linear(d, d, rng)};
}

void push_linear(std::vector<NamedTensor>& out, const std::string& prefix, const Linear& l) {
    out.emplace_back(prefix + ".weight", l.weight);
    out.emplace_back(prefix + ".bias", l.bias);
}

void push_norm(std::vector<NamedTensor>& out, const std::string& prefix, const LayerNormParams& n) {
    out.emplace_back(prefix + ".gain", n.gain);
    out.emplace_back(prefix + ".bias", n.bias);
}

void push_attention(std::vector<NamedTensor>& out, const std::string& prefix, const AttentionParams& a) {
    push_linear(out, prefix + ".query", a.query);
    push_linear(out, prefix + ".key", a.key);
    push_linear(out, prefix + ".value", a.value);
    push_linear(out, prefix + ".output", a.output);
}

Tensor causal_mask(std::size_t queries, std::size_t keys) {
    std::vector<Real> mask(queries * keys, 0.0);
    for (std::size_t i = 0; i < queries; ++i)
        for (std::size_t j = i + 1; j < keys; ++j) mask[i * keys + j] = -std::numeric_limits<Real>::infinity();
    return Tensor::matrix(queries, keys, std::move(mask));
}

Tensor maybe_dropout(const Tensor& x, const ModelConfig& config, ForwardMode mode) {
    if (!mode.training || config.dropout == 0) return x;
    if (!mode.rng) throw std::invalid_argument("training forward pass needs an rng for dropout");
    return dropout(x, config.dropout, *mode.rng);
}

Tensor feed_forward(const Linear& in, const Linear& out, const Tensor& x, const ModelConfig& config,
                    ForwardMode mode) {
    return out(maybe_dropout(relu(in(x)), config, mode));
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::mt19937_64& rng) {
    config.validate();
    const std::size_t d = config.d_model;
    const std::size_t head_dim = d / config.n_heads;
    ModelParams p;
    p.input_projection = make_linear(config.feature_dim, d, rng);
    p.input_norm = make_norm(d);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        EncoderLayerParams layer;
        layer.attention = make_attention(d, rng);
        if (config.n_memory_slots > 0) {
            layer.memory_keys = gaussian(config.n_memory_slots, d, 1.0 / std::sqrt(static_cast<Real>(head_dim)), rng);
            layer.memory_values =
                gaussian(config.n_memory_slots, d, 1.0 / std::sqrt(static_cast<Real>(config.n_memory_slots)), rng);
        }
        layer.attention_norm = make_norm(d);
        layer.ff_in = make_linear(d, config.ff_width, rng);
        layer.ff_out = make_linear(config.ff_width, d, rng);
        layer.ff_norm = make_norm(d);
        p.encoder.push_back(std::move(layer));
    }
    p.token_embedding = gaussian(config.vocab_size, d, 1.0, rng);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        DecoderLayerParams layer;
        layer.self_attention = make_attention(d, rng);
        layer.self_norm = make_norm(d);
        layer.cross_attention = make_attention(d, rng);
        for (std::size_t e = 0; e < config.n_layers; ++e) layer.mesh_gates.push_back(make_linear(2 * d, d, rng));
        layer.cross_norm = make_norm(d);
        layer.ff_in = make_linear(d, config.ff_width, rng);
        layer.ff_out = make_linear(config.ff_width, d, rng);
        layer.ff_norm = make_norm(d);
        p.decoder.push_back(std::move(layer));
    }
    p.output_projection = make_linear(d, config.vocab_size, rng);
    return p;
}

std::vector<NamedTensor> ModelParams::named() const {
    std::vector<NamedTensor> out;
    push_linear(out, "input_projection", input_projection);
    push_norm(out, "input_norm", input_norm);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        const std::string prefix = "encoder." + std::to_string(l);
        const EncoderLayerParams& layer = encoder[l];
        push_attention(out, prefix + ".attention", layer.attention);
        if (layer.memory_keys.defined()) {
            out.emplace_back(prefix + ".memory_keys", layer.memory_keys);
            out.emplace_back(prefix + ".memory_values", layer.memory_values);
        }
        push_norm(out, prefix + ".attention_norm", layer.attention_norm);
        push_linear(out, prefix + ".ff_in", layer.ff_in);
        push_linear(out, prefix + ".ff_out", layer.ff_out);
        push_norm(out, prefix + ".ff_norm", layer.ff_norm);
    }
    out.emplace_back("token_embedding", token_embedding);
    for (std::size_t l = 0; l < decoder.size(); ++l) {
        const std::string prefix = "decoder." + std::to_string(l);
        const DecoderLayerParams& layer = decoder[l];
        push_attention(out, prefix + ".self_attention", layer.self_attention);
        push_norm(out, prefix + ".self_norm", layer.self_norm);
        push_attention(out, prefix + ".cross_attention", layer.cross_attention);
        for (std::size_t e = 0; e < layer.mesh_gates.size(); ++e)
            push_linear(out, prefix + ".mesh_gate." + std::to_string(e), layer.mesh_gates[e]);
        push_norm(out, prefix + ".cross_norm", layer.cross_norm);
        push_linear(out, prefix + ".ff_in", layer.ff_in);
        push_linear(out, prefix + ".ff_out", layer.ff_out);
        push_norm(out, prefix + ".ff_norm", layer.ff_norm);
    }
    push_linear(out, "output_projection", output_projection);
    return out;
}

std::size_t parameter_count(const ModelConfig& config) {
    config.validate();
    const std::size_t d = config.d_model, ff = config.ff_width, n = config.n_layers;
    const std::size_t linear_dd = d * d + d;
    const std::size_t attention = 4 * linear_dd;
    const std::size_t norm = 2 * d;
    const std::size_t ffn = (d * ff + ff) + (ff * d + d);
    const std::size_t encoder_layer = attention + 2 * config.n_memory_slots * d + 2 * norm + ffn;
    const std::size_t decoder_layer = 2 * attention + n * (2 * d * d + d) + 3 * norm + ffn;
    return (config.feature_dim * d + d) + norm + n * encoder_layer + config.vocab_size * d + n * decoder_layer +
           (d * config.vocab_size + config.vocab_size);
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
    std::vector<Real> table(length * d_model);
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < d_model; ++i) {
            const Real exponent = static_cast<Real>(2 * (i / 2)) / static_cast<Real>(d_model);
            const Real angle = static_cast<Real>(pos) / std::pow(10000.0, exponent);
            table[pos * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return Tensor::matrix(length, d_model, std::move(table));
}

Tensor multi_head_attention(const AttentionParams& params, const Tensor& queries, const Tensor& keys_values,
                            std::size_t n_heads, const Tensor* memory_keys, const Tensor* memory_values,
                            bool causal) {
    const std::size_t d = queries.dim(1);
    const std::size_t head_dim = d / n_heads;
    const Tensor q = params.query(queries);
    Tensor k = params.key(keys_values);
    Tensor v = params.value(keys_values);
    if (memory_keys && memory_keys->defined()) {
        const Tensor kparts[] = {k, *memory_keys};
        const Tensor vparts[] = {v, *memory_values};
        k = concat(kparts, 0);
        v = concat(vparts, 0);
    }
    const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(head_dim));
    Tensor mask;
    if (causal) mask = causal_mask(q.dim(0), k.dim(0));
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t lo = h * head_dim, hi = lo + head_dim;
        Tensor scores = scale(matmul(slice(q, 1, lo, hi), transpose(slice(k, 1, lo, hi))), inv_sqrt);
        if (causal) scores = add(scores, mask);
        heads.push_back(matmul(softmax(scores, 1), slice(v, 1, lo, hi)));
    }
    return params.output(n_heads == 1 ? heads[0] : concat(heads, 1));
}

std::vector<Tensor> encode(const Tensor& regions, const ModelConfig& config, const ModelParams& params,
                           ForwardMode mode) {
    if (regions.rank() != 2 || regions.dim(0) < 1)
        throw std::invalid_argument("encode: regions must be [n_regions >= 1, feature_dim], got " +
                                    shape_string(regions.shape()));
    if (regions.dim(1) != config.feature_dim)
        throw std::invalid_argument("encode: feature_dim mismatch, regions " + shape_string(regions.shape()) +
                                    " vs configured " + std::to_string(config.feature_dim));
    Tensor x = relu(params.input_projection(regions));
    x = layer_norm(maybe_dropout(x, config, mode), params.input_norm.gain, params.input_norm.bias,
                   config.layer_norm_eps);
    std::vector<Tensor> outputs;
    outputs.reserve(params.encoder.size());
    for (const EncoderLayerParams& layer : params.encoder) {
        const Tensor attended = multi_head_attention(layer.attention, x, x, config.n_heads, &layer.memory_keys,
                                                     &layer.memory_values, false);
        x = layer_norm(add(x, maybe_dropout(attended, config, mode)), layer.attention_norm.gain,
                       layer.attention_norm.bias, config.layer_norm_eps);
        const Tensor ff = feed_forward(layer.ff_in, layer.ff_out, x, config, mode);
        x = layer_norm(add(x, maybe_dropout(ff, config, mode)), layer.ff_norm.gain, layer.ff_norm.bias,
                       config.layer_norm_eps);
        outputs.push_back(x);
    }
    return outputs;
}

Tensor decode(std::span<const int> tokens, std::span<const Tensor> encoder_outputs, const ModelConfig& config,
              const ModelParams& params, ForwardMode mode) {
    if (tokens.empty()) throw std::invalid_argument("decode: empty token sequence");
    if (tokens.size() > config.max_caption_len)
        throw std::invalid_argument("decode: " + std::to_string(tokens.size()) +
                                    " tokens exceed max_caption_len " + std::to_string(config.max_caption_len));
    if (encoder_outputs.empty()) throw std::invalid_argument("decode: no encoder outputs");
    const std::size_t t = tokens.size();
    const Real mesh_norm = 1.0 / static_cast<Real>(encoder_outputs.size());

    Tensor y = add(embed_lookup(params.token_embedding, tokens), positional_encoding(t, config.d_model));
    y = maybe_dropout(y, config, mode);
    for (const DecoderLayerParams& layer : params.decoder) {
        if (layer.mesh_gates.size() != encoder_outputs.size())
            throw std::invalid_argument("decode: " + std::to_string(encoder_outputs.size()) +
                                        " encoder outputs for " + std::to_string(layer.mesh_gates.size()) +
                                        " mesh gates");
        const Tensor self_attended =
            multi_head_attention(layer.self_attention, y, y, config.n_heads, nullptr, nullptr, true);
        y = layer_norm(add(y, maybe_dropout(self_attended, config, mode)), layer.self_norm.gain,
                       layer.self_norm.bias, config.layer_norm_eps);

        Tensor mesh;
        for (std::size_t e = 0; e < encoder_outputs.size(); ++e) {
            const Tensor cross = multi_head_attention(layer.cross_attention, y, encoder_outputs[e], config.n_heads,
                                                      nullptr, nullptr, false);
            const Tensor gate_in[] = {y, cross};
            const Tensor gate = sigmoid(layer.mesh_gates[e](concat(gate_in, 1)));
            const Tensor gated = mul(gate, cross);
            mesh = mesh.defined() ? add(mesh, gated) : gated;
        }
        mesh = scale(mesh, mesh_norm);
        y = layer_norm(add(y, maybe_dropout(mesh, config, mode)), layer.cross_norm.gain, layer.cross_norm.bias,
                       config.layer_norm_eps);

        const Tensor ff = feed_forward(layer.ff_in, layer.ff_out, y, config, mode);
        y = layer_norm(add(y, maybe_dropout(ff, config, mode)), layer.ff_norm.gain, layer.ff_norm.bias,
                       config.layer_norm_eps);
    }
    return params.output_projection(y);
}

Tensor encoder_summary(std::span<const Tensor> encoder_outputs) {
    if (encoder_outputs.empty()) throw std::invalid_argument("encoder_summary: no encoder outputs");
    return mean_rows(encoder_outputs.back());
}

}  // namespace capgen
