#pragma once

// Domain discriminator behind a gradient reversal layer: GRL, then three
// fully connected layers with ReLU between them. Domain labels are 0 for
// source and 1 for target; a third output class widens the softmax without
// ever being a training label.

#include <random>
#include <vector>

#include "capgen/model.hpp"

namespace capgen {

struct DomainHeadConfig {
    std::size_t input_dim = 64;
    std::size_t hidden1 = 64;
    std::size_t hidden2 = 32;
    std::size_t n_domain_classes = 3;
    Real grl_lambda = 1.0;

    void validate() const;
};

struct DomainHeadParams {
    Linear fc1, fc2, fc3;

    std::vector<NamedTensor> named() const;
};

DomainHeadParams init_domain_head(const DomainHeadConfig& config, std::mt19937_64& rng);

// summary is [input_dim] (one frame) or [batch, input_dim]; the result is
// [n_domain_classes] or [batch, n_domain_classes] accordingly. reverse=false
// drops the GRL and exists for comparing against an unreversed twin.
Tensor domain_logits(const Tensor& summary, const DomainHeadConfig& config, const DomainHeadParams& params,
                     bool reverse = true);

}  // namespace capgen
