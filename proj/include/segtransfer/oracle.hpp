#ifndef SEGTRANSFER_ORACLE_HPP
#define SEGTRANSFER_ORACLE_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "segtransfer/tensor.hpp"

namespace segtransfer {

/// Differentiable per-pixel classifier. Implementations must be deterministic
/// and, unless concurrent_safe() says otherwise, safe to call from several
/// threads at once (read-only after construction).
class ModelOracle {
 public:
  virtual ~ModelOracle() = default;

  virtual const std::string& id() const = 0;
  virtual int num_classes() const = 0;
  virtual int input_channels() const = 0;

  /// Pre-softmax scores, shape (H, W, num_classes).
  virtual Logits logits(const Tensor3& image) const = 0;

  /// Input gradient of sum(upstream * logits): the vector-Jacobian product
  /// of the logits with respect to the image. Same shape as the image.
  virtual Tensor3 logits_vjp(const Tensor3& image, const Tensor3& upstream) const = 0;

  virtual bool concurrent_safe() const { return true; }
};

/// Per-pixel linear model: logits(y,x,k) = sum_c image(y,x,c) * W(c,k) + b(k).
/// Gradients have closed form, which makes it the reference fixture.
class ToyLinearSegmenter final : public ModelOracle {
 public:
  ToyLinearSegmenter(std::string id, int channels, int num_classes,
                     std::vector<double> weights, std::vector<double> biases);

  const std::string& id() const override { return id_; }
  int num_classes() const override { return num_classes_; }
  int input_channels() const override { return channels_; }
  Logits logits(const Tensor3& image) const override;
  Tensor3 logits_vjp(const Tensor3& image, const Tensor3& upstream) const override;

  double weight(int channel, int cls) const {
    return weights_[static_cast<std::size_t>(channel) * num_classes_ + cls];
  }
  double bias(int cls) const { return biases_[cls]; }

 private:
  std::string id_;
  int channels_;
  int num_classes_;
  std::vector<double> weights_;  // (channels, num_classes) row-major
  std::vector<double> biases_;
};

struct LossGrad {
  double loss = 0.0;
  Tensor3 grad;
};

/// Argmax decode of the logits; ties break toward the lowest class index.
LabelMap predict(const ModelOracle& oracle, const Tensor3& image);

/// Mean over non-ignored pixels of weight_i * CE_i and its input gradient.
/// pixel_weights, when given, has H*W entries (row-major) and must be
/// non-negative and finite; ignored pixels contribute nothing either way.
LossGrad loss_and_input_grad(const ModelOracle& oracle, const Tensor3& image,
                             const LabelMap& labels,
                             std::span<const double> pixel_weights = {});

/// Cross-entropy per pixel (row-major H*W); ignored pixels report 0.
std::vector<double> per_pixel_losses(const ModelOracle& oracle, const Tensor3& image,
                                     const LabelMap& labels);

struct LogitSelection {
  int y = 0;
  int x = 0;
  int cls = 0;
  double weight = 0.0;
};

/// Input gradient of sum(weight * logit(y, x, cls)) over the selection.
/// An empty selection yields a zero gradient.
Tensor3 logit_selection_grad(const ModelOracle& oracle, const Tensor3& image,
                             std::span<const LogitSelection> selection);

/// Central-difference gradient of the (optionally weighted) mean loss,
/// element by element. Independent of the analytic path; test oracle.
Tensor3 finite_difference_grad(const ModelOracle& oracle, const Tensor3& image,
                               const LabelMap& labels, double h,
                               std::span<const double> pixel_weights = {});

}  // namespace segtransfer

#endif  // SEGTRANSFER_ORACLE_HPP
