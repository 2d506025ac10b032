#pragma once

// Calibration error of categorical predictions.
//
// Equal-width bins are half-open on the left, (b/B, (b+1)/B], with zero
// placed in the first bin. Predicted class is the argmax (lowest index on
// ties).

#include <span>
#include <vector>

#include "capgen/kernels.hpp"

namespace capgen {

class PredictionSet {
public:
    explicit PredictionSet(std::size_t num_classes);

    // Throws when the row has the wrong width, a negative entry, or does not
    // sum to 1 within 1e-6, or when label is out of range.
    void add(std::span<const Real> probabilities, int label);

    std::size_t num_classes() const { return num_classes_; }
    std::size_t size() const { return labels_.size(); }
    std::span<const Real> row(std::size_t i) const { return {probs_.data() + i * num_classes_, num_classes_}; }
    int label(std::size_t i) const { return labels_[i]; }

private:
    std::size_t num_classes_;
    std::vector<Real> probs_;
    std::vector<int> labels_;
};

inline constexpr std::size_t kDefaultBins = 10;
inline constexpr std::size_t kDefaultAdaptiveBins = 15;
inline constexpr Real kDefaultTaceThreshold = 0.01;

// Top-label calibration: sum over bins of (|bin| / N) * |accuracy - confidence|.
Real ece(const PredictionSet& preds, std::size_t n_bins = kDefaultBins);

// Classwise ECE with equal-width bins, averaged over classes.
Real sce(const PredictionSet& preds, std::size_t n_bins = kDefaultBins);

// Classwise error over probabilities >= threshold only, with equal-mass bins
// per class. Bin gaps are weighted by |bin| / N and averaged over classes; a
// class with no probability above the threshold contributes zero.
Real tace(const PredictionSet& preds, std::size_t n_bins = kDefaultAdaptiveBins,
          Real threshold = kDefaultTaceThreshold);

// Mean squared distance to the one-hot label, in [0, 2].
Real brier(const PredictionSet& preds);

struct CalibrationScores {
    Real ece = 0;
    Real sce = 0;
    Real tace = 0;
    Real brier = 0;
    std::size_t predictions = 0;
};

CalibrationScores score_calibration(const PredictionSet& preds);

}  // namespace capgen
