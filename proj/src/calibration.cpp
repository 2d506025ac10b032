#include "capgen/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace capgen {

PredictionSet::PredictionSet(std::size_t num_classes) : num_classes_(num_classes) {
    if (num_classes == 0) throw std::invalid_argument("PredictionSet: need at least one class");
}

void PredictionSet::add(std::span<const Real> probabilities, int label) {
    if (probabilities.size() != num_classes_)
        throw std::invalid_argument("PredictionSet: row of " + std::to_string(probabilities.size()) +
                                    " probabilities for " + std::to_string(num_classes_) + " classes");
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes_)
        throw std::invalid_argument("PredictionSet: label " + std::to_string(label) + " out of range");
    Real total = 0;
    for (const Real p : probabilities) {
        if (!(p >= 0)) throw std::invalid_argument("PredictionSet: negative or NaN probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument("PredictionSet: probabilities sum to " + std::to_string(total));
    probs_.insert(probs_.end(), probabilities.begin(), probabilities.end());
    labels_.push_back(label);
}

namespace {

void require_usable(const PredictionSet& preds, std::size_t n_bins, const char* metric) {
    if (n_bins < 1) throw std::invalid_argument(std::string(metric) + ": n_bins must be at least 1");
    if (preds.size() == 0) throw std::invalid_argument(std::string(metric) + ": no predictions");
}

std::size_t equal_width_bin(Real p, std::size_t n_bins) {
    const Real scaled = std::ceil(p * static_cast<Real>(n_bins));
    if (scaled <= 1) return 0;
    return std::min(static_cast<std::size_t>(scaled) - 1, n_bins - 1);
}

struct BinAccumulator {
    Real count = 0, hits = 0, confidence = 0;

    Real weighted_gap(Real total) const {
        if (count == 0) return 0;
        return (count / total) * std::abs(hits / count - confidence / count);
    }
};

}  // namespace

Real ece(const PredictionSet& preds, std::size_t n_bins) {
    require_usable(preds, n_bins, "ece");
    std::vector<BinAccumulator> bins(n_bins);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto row = preds.row(i);
        const auto top = std::max_element(row.begin(), row.end());
        BinAccumulator& bin = bins[equal_width_bin(*top, n_bins)];
        bin.count += 1;
        bin.confidence += *top;
        bin.hits += (top - row.begin()) == preds.label(i) ? 1 : 0;
    }
    const Real n = static_cast<Real>(preds.size());
    Real error = 0;
    for (const BinAccumulator& bin : bins) error += bin.weighted_gap(n);
    return error;
}

Real sce(const PredictionSet& preds, std::size_t n_bins) {
    require_usable(preds, n_bins, "sce");
    const std::size_t k = preds.num_classes();
    const Real n = static_cast<Real>(preds.size());
    Real error = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<BinAccumulator> bins(n_bins);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const Real p = preds.row(i)[c];
            BinAccumulator& bin = bins[equal_width_bin(p, n_bins)];
            bin.count += 1;
            bin.confidence += p;
            bin.hits += preds.label(i) == static_cast<int>(c) ? 1 : 0;
        }
        for (const BinAccumulator& bin : bins) error += bin.weighted_gap(n);
    }
    return error / static_cast<Real>(k);
}

Real tace(const PredictionSet& preds, std::size_t n_bins, Real threshold) {
    require_usable(preds, n_bins, "tace");
    if (!(threshold >= 0 && threshold < 1))
        throw std::invalid_argument("tace: threshold must lie in [0, 1), got " + std::to_string(threshold));
    const std::size_t k = preds.num_classes();
    const Real n = static_cast<Real>(preds.size());
    Real error = 0;
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < k; ++c) {
        kept.clear();
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (preds.row(i)[c] >= threshold) kept.push_back(i);
        std::stable_sort(kept.begin(), kept.end(),
                         [&](std::size_t a, std::size_t b) { return preds.row(a)[c] < preds.row(b)[c]; });
        const std::size_t m = kept.size();
        for (std::size_t r = 0; r < n_bins; ++r) {
            const std::size_t lo = r * m / n_bins, hi = (r + 1) * m / n_bins;
            BinAccumulator bin;
            for (std::size_t j = lo; j < hi; ++j) {
                bin.count += 1;
                bin.confidence += preds.row(kept[j])[c];
                bin.hits += preds.label(kept[j]) == static_cast<int>(c) ? 1 : 0;
            }
            error += bin.weighted_gap(n);
        }
    }
    return error / static_cast<Real>(k);
}

Real brier(const PredictionSet& preds) {
    if (preds.size() == 0) throw std::invalid_argument("brier: no predictions");
    Real total = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto row = preds.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const Real diff = row[c] - (static_cast<int>(c) == preds.label(i) ? 1.0 : 0.0);
            total += diff * diff;
        }
    }
    return total / static_cast<Real>(preds.size());
}

CalibrationScores score_calibration(const PredictionSet& preds) {
    return {ece(preds), sce(preds), tace(preds), brier(preds), preds.size()};
}

}  // namespace capgen
