#ifndef SEGTRANSFER_TRANSFORMS_HPP
#define SEGTRANSFER_TRANSFORMS_HPP

#include "segtransfer/tensor.hpp"

namespace segtransfer {

struct DiverseInputParams {
  double probability = 0.7;   // chance the transform fires at all
  double scale_min = 0.9;     // lower bound of the random down-scale
};

/// Normalized, symmetric, strictly positive Gaussian kernel.
struct GaussianKernel {
  int size = 1;
  double sigma = 1.0;
  std::vector<double> values;  // size * size, sums to 1

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * size + j]; }
};

GaussianKernel make_gaussian_kernel(int size, double sigma);

struct DiverseInputResult {
  Tensor3 image;
  LabelMap labels;
  bool applied = false;
  // Geometry of the applied transform; meaningful only when applied.
  int resized_h = 0;
  int resized_w = 0;
  int offset_y = 0;
  int offset_x = 0;
};

/// With probability p: bilinear down-scale by s ~ U(scale_min, 1), zero-pad
/// the image back to (H, W) at a random offset, pad labels with ignore_index.
/// Otherwise returns the inputs unchanged. Output shapes always equal input
/// shapes. RNG draw order: gate, scale, offset_y, offset_x.
DiverseInputResult diverse_input(const Tensor3& image, const LabelMap& labels,
                                 const DiverseInputParams& params, Rng& rng);

/// Adjoint of the transform recorded in `applied_info`, mapping a gradient
/// w.r.t. the transformed image back to a gradient w.r.t. the original.
Tensor3 diverse_input_grad_to_input(const Tensor3& transformed_grad,
                                    const DiverseInputResult& applied_info);

/// Per-channel 2-D cross-correlation with zero padding, "same" output size.
Tensor3 convolve_gradient(const Tensor3& grad, const GaussianKernel& kernel);

// Building blocks, exposed for direct testing.
Tensor3 bilinear_resize(const Tensor3& image, int out_h, int out_w);
Tensor3 bilinear_resize_adjoint(const Tensor3& grad_resized, int in_h, int in_w);
LabelMap nearest_resize(const LabelMap& labels, int out_h, int out_w);

}  // namespace segtransfer

#endif  // SEGTRANSFER_TRANSFORMS_HPP
