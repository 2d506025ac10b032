#include "capgen/losses.hpp"

#include <stdexcept>
#include <string>

namespace capgen {

std::vector<Real> smooth_labels(std::size_t true_class, std::size_t num_classes, Real epsilon) {
    if (!(epsilon >= 0 && epsilon <= 1))
        throw std::invalid_argument("smooth_labels: epsilon must lie in [0, 1], got " + std::to_string(epsilon));
    if (num_classes < 2) throw std::invalid_argument("smooth_labels: need at least 2 classes");
    if (true_class >= num_classes)
        throw std::invalid_argument("smooth_labels: class " + std::to_string(true_class) + " outside " +
                                    std::to_string(num_classes) + " classes");
    const Real k = static_cast<Real>(num_classes);
    std::vector<Real> target(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const Real hard = c == true_class ? 1.0 : 0.0;
        target[c] = hard * (1.0 - epsilon) + epsilon / k;
    }
    return target;
}

Tensor ce_ls(const Tensor& logits, std::size_t true_class, Real epsilon) {
    if (logits.rank() != 1) throw std::invalid_argument("ce_ls: logits must be [K], got " + shape_string(logits.shape()));
    const Tensor target = Tensor::vector(smooth_labels(true_class, logits.size(), epsilon));
    return scale(sum(mul(target, log_softmax(logits, 0))), -1.0);
}

Tensor ce_ls_rows(const Tensor& logits, std::span<const int> targets, Real epsilon, std::optional<int> ignore_id) {
    if (logits.rank() != 2 || logits.dim(0) != targets.size())
        throw std::invalid_argument("ce_ls_rows: logits " + shape_string(logits.shape()) + " do not align with " +
                                    std::to_string(targets.size()) + " targets");
    const std::size_t rows = logits.dim(0), k = logits.dim(1);
    std::vector<Real> weights(rows * k, 0.0);
    std::size_t counted = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (ignore_id && targets[r] == *ignore_id) continue;
        if (targets[r] < 0) throw std::invalid_argument("ce_ls_rows: negative target id");
        const std::vector<Real> row = smooth_labels(static_cast<std::size_t>(targets[r]), k, epsilon);
        std::copy(row.begin(), row.end(), weights.begin() + static_cast<std::ptrdiff_t>(r * k));
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("ce_ls_rows: every target position is padding");
    const Tensor target = Tensor::matrix(rows, k, std::move(weights));
    return scale(sum(mul(target, log_softmax(logits, 1))), -1.0 / static_cast<Real>(counted));
}

LossBreakdown total_loss(const Tensor& caption, const Tensor& source_domain, const Tensor& target_domain) {
    LossBreakdown out;
    out.total = caption;
    out.caption = caption.item();
    if (source_domain.defined()) {
        out.total = add(out.total, source_domain);
        out.source_domain = source_domain.item();
    }
    if (target_domain.defined()) {
        out.total = add(out.total, target_domain);
        out.target_domain = target_domain.item();
    }
    return out;
}

}  // namespace capgen
