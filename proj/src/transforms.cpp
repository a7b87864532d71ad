#include "segtransfer/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segtransfer {

namespace {

// Source coordinate for output index i when resampling n_in -> n_out.
// Half-pixel centers; exact identity when n_in == n_out.
inline double source_coord(int i, int n_in, int n_out) {
  return (i + 0.5) * static_cast<double>(n_in) / n_out - 0.5;
}

inline int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

}  // namespace

GaussianKernel make_gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) {
    throw std::invalid_argument("gaussian kernel size must be odd and positive");
  }
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    throw std::invalid_argument("gaussian kernel sigma must be finite and positive");
  }
  GaussianKernel k;
  k.size = size;
  k.sigma = sigma;
  k.values.assign(static_cast<std::size_t>(size) * size, 0.0);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double dy = i - r;
      const double dx = j - r;
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k.values[static_cast<std::size_t>(i) * size + j] = v;
      sum += v;
    }
  }
  for (double& v : k.values) v /= sum;
  return k;
}

Tensor3 bilinear_resize(const Tensor3& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("bilinear_resize: output extents must be positive");
  }
  Tensor3 out(out_h, out_w, image.channels);
  for (int i = 0; i < out_h; ++i) {
    const double sy = source_coord(i, image.height, out_h);
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    const int ya = clamp_index(y0, image.height);
    const int yb = clamp_index(y0 + 1, image.height);
    for (int j = 0; j < out_w; ++j) {
      const double sx = source_coord(j, image.width, out_w);
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      const int xa = clamp_index(x0, image.width);
      const int xb = clamp_index(x0 + 1, image.width);
      const double w00 = (1.0 - fy) * (1.0 - fx);
      const double w01 = (1.0 - fy) * fx;
      const double w10 = fy * (1.0 - fx);
      const double w11 = fy * fx;
      for (int c = 0; c < image.channels; ++c) {
        out.at(i, j, c) = w00 * image.at(ya, xa, c) + w01 * image.at(ya, xb, c) +
                          w10 * image.at(yb, xa, c) + w11 * image.at(yb, xb, c);
      }
    }
  }
  return out;
}

Tensor3 bilinear_resize_adjoint(const Tensor3& grad_resized, int in_h, int in_w) {
  if (in_h < 1 || in_w < 1) {
    throw std::invalid_argument("bilinear_resize_adjoint: input extents must be positive");
  }
  Tensor3 out(in_h, in_w, grad_resized.channels);
  for (int i = 0; i < grad_resized.height; ++i) {
    const double sy = source_coord(i, in_h, grad_resized.height);
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    const int ya = clamp_index(y0, in_h);
    const int yb = clamp_index(y0 + 1, in_h);
    for (int j = 0; j < grad_resized.width; ++j) {
      const double sx = source_coord(j, in_w, grad_resized.width);
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      const int xa = clamp_index(x0, in_w);
      const int xb = clamp_index(x0 + 1, in_w);
      const double w00 = (1.0 - fy) * (1.0 - fx);
      const double w01 = (1.0 - fy) * fx;
      const double w10 = fy * (1.0 - fx);
      const double w11 = fy * fx;
      for (int c = 0; c < grad_resized.channels; ++c) {
        const double g = grad_resized.at(i, j, c);
        out.at(ya, xa, c) += w00 * g;
        out.at(ya, xb, c) += w01 * g;
        out.at(yb, xa, c) += w10 * g;
        out.at(yb, xb, c) += w11 * g;
      }
    }
  }
  return out;
}

LabelMap nearest_resize(const LabelMap& labels, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("nearest_resize: output extents must be positive");
  }
  LabelMap out(out_h, out_w, labels.num_classes);
  out.ignore_index = labels.ignore_index;
  for (int i = 0; i < out_h; ++i) {
    const double sy = source_coord(i, labels.height, out_h);
    const int y = clamp_index(static_cast<int>(std::floor(sy + 0.5)), labels.height);
    for (int j = 0; j < out_w; ++j) {
      const double sx = source_coord(j, labels.width, out_w);
      const int x = clamp_index(static_cast<int>(std::floor(sx + 0.5)), labels.width);
      out.at(i, j) = labels.at(y, x);
    }
  }
  return out;
}

DiverseInputResult diverse_input(const Tensor3& image, const LabelMap& labels,
                                 const DiverseInputParams& params, Rng& rng) {
  validate_image(image);
  validate_labels(labels, image.height, image.width);
  if (!(params.probability >= 0.0 && params.probability <= 1.0)) {
    throw std::invalid_argument("diverse_input: probability must lie in [0, 1]");
  }
  if (!(params.scale_min > 0.0 && params.scale_min <= 1.0)) {
    throw std::invalid_argument("diverse_input: scale_min must lie in (0, 1]");
  }

  DiverseInputResult res;
  const double gate = rng.uniform01();
  if (gate >= params.probability) {
    res.image = image;
    res.labels = labels;
    res.applied = false;
    return res;
  }

  const double scale = rng.uniform(params.scale_min, 1.0);
  const int rh = std::max(1, static_cast<int>(std::lround(image.height * scale)));
  const int rw = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  const int off_y = static_cast<int>(rng.uniform_int(0, image.height - rh));
  const int off_x = static_cast<int>(rng.uniform_int(0, image.width - rw));

  Tensor3 small = bilinear_resize(image, rh, rw);
  LabelMap small_labels = nearest_resize(labels, rh, rw);

  Tensor3 padded(image.height, image.width, image.channels);  // zero background
  LabelMap padded_labels(image.height, image.width, labels.num_classes);
  padded_labels.ignore_index = labels.ignore_index;
  std::fill(padded_labels.data.begin(), padded_labels.data.end(), labels.ignore_index);
  for (int i = 0; i < rh; ++i) {
    for (int j = 0; j < rw; ++j) {
      for (int c = 0; c < image.channels; ++c) {
        padded.at(off_y + i, off_x + j, c) = small.at(i, j, c);
      }
      padded_labels.at(off_y + i, off_x + j) = small_labels.at(i, j);
    }
  }

  res.image = std::move(padded);
  res.labels = std::move(padded_labels);
  res.applied = true;
  res.resized_h = rh;
  res.resized_w = rw;
  res.offset_y = off_y;
  res.offset_x = off_x;
  return res;
}

Tensor3 diverse_input_grad_to_input(const Tensor3& transformed_grad,
                                    const DiverseInputResult& applied_info) {
  if (!applied_info.applied) {
    return transformed_grad;
  }
  if (!transformed_grad.same_shape(applied_info.image)) {
    throw std::invalid_argument("diverse_input_grad_to_input: gradient shape mismatch");
  }
  const int rh = applied_info.resized_h;
  const int rw = applied_info.resized_w;
  Tensor3 cropped(rh, rw, transformed_grad.channels);
  for (int i = 0; i < rh; ++i) {
    for (int j = 0; j < rw; ++j) {
      for (int c = 0; c < transformed_grad.channels; ++c) {
        cropped.at(i, j, c) =
            transformed_grad.at(applied_info.offset_y + i, applied_info.offset_x + j, c);
      }
    }
  }
  return bilinear_resize_adjoint(cropped, transformed_grad.height, transformed_grad.width);
}

Tensor3 convolve_gradient(const Tensor3& grad, const GaussianKernel& kernel) {
  if (kernel.size < 1 || kernel.size % 2 == 0 ||
      kernel.values.size() != static_cast<std::size_t>(kernel.size) * kernel.size) {
    throw std::invalid_argument("convolve_gradient: malformed kernel");
  }
  const int r = kernel.size / 2;
  Tensor3 out(grad.height, grad.width, grad.channels);
  for (int i = 0; i < grad.height; ++i) {
    for (int j = 0; j < grad.width; ++j) {
      for (int c = 0; c < grad.channels; ++c) {
        double acc = 0.0;
        for (int ki = 0; ki < kernel.size; ++ki) {
          const int y = i + ki - r;
          if (y < 0 || y >= grad.height) continue;
          for (int kj = 0; kj < kernel.size; ++kj) {
            const int x = j + kj - r;
            if (x < 0 || x >= grad.width) continue;
            acc += kernel.at(ki, kj) * grad.at(y, x, c);
          }
        }
        out.at(i, j, c) = acc;
      }
    }
  }
  return out;
}

}  // namespace segtransfer
