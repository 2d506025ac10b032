#include "capgen/domain_head.hpp"

#include <cmath>
#include <stdexcept>

namespace capgen {

void DomainHeadConfig::validate() const {
    if (n_domain_classes != 2 && n_domain_classes != 3)
        throw std::invalid_argument("DomainHeadConfig: n_domain_classes must be 2 or 3, got " +
                                    std::to_string(n_domain_classes));
    if (input_dim == 0 || hidden1 == 0 || hidden2 == 0)
        throw std::invalid_argument("DomainHeadConfig: layer widths must be positive");
    if (!(grl_lambda >= 0) || !std::isfinite(grl_lambda))
        throw std::invalid_argument("DomainHeadConfig: grl_lambda must be finite and non-negative");
}

std::vector<NamedTensor> DomainHeadParams::named() const {
    return {{"domain_head.fc1.weight", fc1.weight}, {"domain_head.fc1.bias", fc1.bias},
            {"domain_head.fc2.weight", fc2.weight}, {"domain_head.fc2.bias", fc2.bias},
            {"domain_head.fc3.weight", fc3.weight}, {"domain_head.fc3.bias", fc3.bias}};
}

DomainHeadParams init_domain_head(const DomainHeadConfig& config, std::mt19937_64& rng) {
    config.validate();
    auto make = [&rng](std::size_t in, std::size_t out) {
        const Real limit = std::sqrt(6.0 / static_cast<Real>(in + out));
        std::uniform_real_distribution<Real> dist(-limit, limit);
        std::vector<Real> w(in * out);
        for (Real& v : w) v = dist(rng);
        return Linear{Tensor::matrix(in, out, std::move(w), true), Tensor::zeros({out}, true)};
    };
    return {make(config.input_dim, config.hidden1), make(config.hidden1, config.hidden2),
            make(config.hidden2, config.n_domain_classes)};
}

Tensor domain_logits(const Tensor& summary, const DomainHeadConfig& config, const DomainHeadParams& params,
                     bool reverse) {
    const bool single = summary.rank() == 1;
    if (summary.shape().back() != config.input_dim || summary.rank() > 2)
        throw std::invalid_argument("domain_logits: summary " + shape_string(summary.shape()) +
                                    " does not match input_dim " + std::to_string(config.input_dim));
    Tensor x = single ? reshape(summary, {1, config.input_dim}) : summary;
    if (reverse) x = grad_reverse(x, config.grl_lambda);
    x = relu(params.fc1(x));
    x = relu(params.fc2(x));
    x = params.fc3(x);
    return single ? reshape(x, {config.n_domain_classes}) : x;
}

}  // namespace capgen
