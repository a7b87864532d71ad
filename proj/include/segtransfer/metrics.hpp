#ifndef SEGTRANSFER_METRICS_HPP
#define SEGTRANSFER_METRICS_HPP

#include <vector>

#include "segtransfer/tensor.hpp"

namespace segtransfer {

/// Class-by-class pixel tally, accumulated across any number of images.
/// Rows index the ground truth, columns the prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  /// Adds every pixel where the ground truth is not ignored. Predictions must
  /// be complete (no ignore entries) and in range; throws otherwise.
  void accumulate(const LabelMap& prediction, const LabelMap& ground_truth);

  int num_classes() const { return num_classes_; }
  long long count(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * num_classes_ + predicted];
  }
  long long total() const;

 private:
  int num_classes_;
  std::vector<long long> counts_;
};

/// Intersection over union per class; NaN for classes absent from both the
/// truth and the predictions.
std::vector<double> per_class_iou(const ConfusionMatrix& cm);

/// Mean IoU over the classes with a defined IoU. Throws std::domain_error
/// when no class has one (empty matrix).
double miou(const ConfusionMatrix& cm);

/// Peak signal-to-noise ratio between two same-shape images in [0,1], in dB
/// with peak 1. Returns 100 when the mean squared error is below 1e-10.
double psnr(const Tensor3& a, const Tensor3& b);

/// Single-scale structural similarity, averaged over all fully interior
/// positions of an 11x11 Gaussian window (sigma 1.5) and over channels.
/// Requires both extents to be at least 11.
double ssim(const Tensor3& a, const Tensor3& b);

/// 1 - miou_adv / miou_clean. Not clamped; negative when the attack helps.
/// Throws std::domain_error when miou_clean is zero.
double success_rate(double miou_clean, double miou_adv);

}  // namespace segtransfer

#endif  // SEGTRANSFER_METRICS_HPP
