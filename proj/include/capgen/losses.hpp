#pragma once

#include <optional>
#include <span>
#include <vector>

#include "capgen/tensor.hpp"

namespace capgen {

// Smoothed target: true class gets (1 - epsilon) + epsilon / K, every other
// class epsilon / K.
std::vector<Real> smooth_labels(std::size_t true_class, std::size_t num_classes, Real epsilon);

// Cross-entropy of softmax(logits) against the smoothed target. logits is [K].
Tensor ce_ls(const Tensor& logits, std::size_t true_class, Real epsilon);

// Mean of ce_ls over the rows of logits [n, K] whose target differs from
// ignore_id. Throws when every row is ignored.
Tensor ce_ls_rows(const Tensor& logits, std::span<const int> targets, Real epsilon,
                  std::optional<int> ignore_id = std::nullopt);

// Caption loss under teacher forcing: row i of logits predicts targets[i].
inline Tensor caption_loss(const Tensor& logits, std::span<const int> targets, Real epsilon, int pad_id) {
    return ce_ls_rows(logits, targets, epsilon, pad_id);
}

struct LossBreakdown {
    Tensor total;
    Real caption = 0;
    Real source_domain = 0;
    Real target_domain = 0;
};

// total = caption + source_domain + target_domain. Undefined domain terms
// count as zero.
LossBreakdown total_loss(const Tensor& caption, const Tensor& source_domain, const Tensor& target_domain);

}  // namespace capgen
