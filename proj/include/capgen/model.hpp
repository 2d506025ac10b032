#pragma once

// Memory-augmented encoder and meshed decoder over region features.
//
// The encoder turns the unordered set of region feature rows of one frame into
// n_layers stacked representations. Each encoder self-attention extends its
// keys and values with learned memory slots. The decoder reads every encoder
// layer: per decoder layer, a shared cross-attention is applied to each
// encoder output, each result is weighted by a sigmoid gate computed from the
// decoder state and the attended values, and the gated results are summed and
// divided by the number of encoder layers.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "capgen/tensor.hpp"

namespace capgen {

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 3;
    std::size_t n_memory_slots = 8;
    std::size_t ff_width = 256;
    std::size_t feature_dim = 512;
    std::size_t max_caption_len = 16;
    std::size_t vocab_size = 0;
    Real dropout = 0.1;
    Real layer_norm_eps = 1e-5;

    // Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

using NamedTensor = std::pair<std::string, Tensor>;

// Weight is [in, out]; rows are multiplied on the left.
struct Linear {
    Tensor weight;
    Tensor bias;

    Tensor operator()(const Tensor& x) const;
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;
};

struct AttentionParams {
    Linear query, key, value, output;
};

struct EncoderLayerParams {
    AttentionParams attention;
    Tensor memory_keys;    // [n_memory_slots, d_model], absent when slots == 0
    Tensor memory_values;  // [n_memory_slots, d_model]
    LayerNormParams attention_norm;
    Linear ff_in, ff_out;
    LayerNormParams ff_norm;
};

struct DecoderLayerParams {
    AttentionParams self_attention;
    LayerNormParams self_norm;
    AttentionParams cross_attention;
    std::vector<Linear> mesh_gates;  // one per encoder layer, [2*d_model, d_model]
    LayerNormParams cross_norm;
    Linear ff_in, ff_out;
    LayerNormParams ff_norm;
};

struct ModelParams {
    Linear input_projection;
    LayerNormParams input_norm;
    std::vector<EncoderLayerParams> encoder;
    Tensor token_embedding;  // [vocab_size, d_model]
    std::vector<DecoderLayerParams> decoder;
    Linear output_projection;

    // Every learnable tensor under a stable dotted name, in registration order.
    std::vector<NamedTensor> named() const;
};

ModelParams init_model(const ModelConfig& config, std::mt19937_64& rng);

// Training switches dropout on; inference leaves rng unused.
struct ForwardMode {
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

// Returns every encoder layer's output, first to last.
std::vector<Tensor> encode(const Tensor& regions, const ModelConfig& config, const ModelParams& params,
                           ForwardMode mode = {});

// Logits [tokens.size(), vocab_size]. Position i only sees tokens[0..i].
Tensor decode(std::span<const int> tokens, std::span<const Tensor> encoder_outputs, const ModelConfig& config,
              const ModelParams& params, ForwardMode mode = {});

// Mean over regions of the last encoder layer.
Tensor encoder_summary(std::span<const Tensor> encoder_outputs);

// Sinusoidal position table [length, d_model].
Tensor positional_encoding(std::size_t length, std::size_t d_model);

// Multi-head attention of queries over keys_values. Memory slot rows are
// appended to the projected keys/values when given; causal masks future keys.
Tensor multi_head_attention(const AttentionParams& params, const Tensor& queries, const Tensor& keys_values,
                            std::size_t n_heads, const Tensor* memory_keys, const Tensor* memory_values,
                            bool causal);

std::size_t parameter_count(const ModelConfig& config);

}  // namespace capgen
