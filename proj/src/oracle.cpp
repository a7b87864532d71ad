#include "segtransfer/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace segtransfer {

namespace {

void check_pair(const ModelOracle& oracle, const Tensor3& image) {
  if (image.height < 1 || image.width < 1)
    throw std::invalid_argument("image must have positive extents");
  if (image.channels != oracle.input_channels())
    throw std::invalid_argument("image channel count does not match oracle '" +
                                oracle.id() + "'");
}

// Numerically stable softmax cross-entropy at one pixel. Fills probs (size
// num_classes) and returns CE against class y.
double softmax_ce(const Logits& logits, int py, int px, int y, std::vector<double>& probs) {
  const int k = logits.channels;
  double m = logits.at(py, px, 0);
  for (int i = 1; i < k; ++i) m = std::max(m, logits.at(py, px, i));
  double z = 0.0;
  for (int i = 0; i < k; ++i) {
    probs[i] = std::exp(logits.at(py, px, i) - m);
    z += probs[i];
  }
  for (int i = 0; i < k; ++i) probs[i] /= z;
  return std::log(z) + m - logits.at(py, px, y);
}

double weighted_mean_ce(const ModelOracle& oracle, const Tensor3& image,
                        const LabelMap& labels, std::span<const double> pixel_weights) {
  const Logits lg = oracle.logits(image);
  long long valid = 0;
  for (int v : labels.data)
    if (v != labels.ignore_index) ++valid;
  if (valid == 0) throw std::domain_error("all pixels ignored; loss is undefined");
  std::vector<double> probs(oracle.num_classes());
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(valid);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int label = labels.at(y, x);
      if (label == labels.ignore_index) continue;
      const double w =
          pixel_weights.empty()
              ? 1.0
              : pixel_weights[static_cast<std::size_t>(y) * image.width + x];
      loss += w * softmax_ce(lg, y, x, label, probs) * inv_n;
    }
  }
  return loss;
}

}  // namespace

ToyLinearSegmenter::ToyLinearSegmenter(std::string id, int channels, int num_classes,
                                       std::vector<double> weights,
                                       std::vector<double> biases)
    : id_(std::move(id)), channels_(channels), num_classes_(num_classes),
      weights_(std::move(weights)), biases_(std::move(biases)) {
  if (channels_ < 1 || num_classes_ < 1)
    throw std::invalid_argument("toy linear segmenter needs channels >= 1 and classes >= 1");
  if (weights_.size() != static_cast<std::size_t>(channels_) * num_classes_)
    throw std::invalid_argument("toy linear weight count must be channels * num_classes");
  if (biases_.size() != static_cast<std::size_t>(num_classes_))
    throw std::invalid_argument("toy linear bias count must be num_classes");
}

Logits ToyLinearSegmenter::logits(const Tensor3& image) const {
  check_pair(*this, image);
  Logits out(image.height, image.width, num_classes_);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int k = 0; k < num_classes_; ++k) {
        double acc = biases_[k];
        for (int c = 0; c < channels_; ++c)
          acc += image.at(y, x, c) * weight(c, k);
        out.at(y, x, k) = acc;
      }
    }
  }
  return out;
}

Tensor3 ToyLinearSegmenter::logits_vjp(const Tensor3& image, const Tensor3& upstream) const {
  check_pair(*this, image);
  if (upstream.height != image.height || upstream.width != image.width ||
      upstream.channels != num_classes_)
    throw std::invalid_argument("upstream shape must be (H, W, num_classes)");
  Tensor3 grad(image.height, image.width, channels_);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < channels_; ++c) {
        double acc = 0.0;
        for (int k = 0; k < num_classes_; ++k)
          acc += upstream.at(y, x, k) * weight(c, k);
        grad.at(y, x, c) = acc;
      }
    }
  }
  return grad;
}

LabelMap predict(const ModelOracle& oracle, const Tensor3& image) {
  check_pair(oracle, image);
  const Logits lg = oracle.logits(image);
  LabelMap out(image.height, image.width, oracle.num_classes());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      int best = 0;
      double best_v = lg.at(y, x, 0);
      for (int k = 1; k < lg.channels; ++k) {
        if (lg.at(y, x, k) > best_v) {  // strict: ties keep the lowest index
          best_v = lg.at(y, x, k);
          best = k;
        }
      }
      out.at(y, x) = best;
    }
  }
  return out;
}

LossGrad loss_and_input_grad(const ModelOracle& oracle, const Tensor3& image,
                             const LabelMap& labels,
                             std::span<const double> pixel_weights) {
  check_pair(oracle, image);
  validate_labels(labels, image.height, image.width);
  const std::size_t npix = labels.size();
  if (!pixel_weights.empty()) {
    if (pixel_weights.size() != npix)
      throw std::invalid_argument("pixel_weights must have H*W entries");
    for (double w : pixel_weights) {
      if (!std::isfinite(w) || w < 0.0)
        throw std::invalid_argument("pixel_weights must be non-negative and finite");
    }
  }

  const Logits lg = oracle.logits(image);
  const int k = oracle.num_classes();

  long long valid = 0;
  for (int v : labels.data)
    if (v != labels.ignore_index) ++valid;
  if (valid == 0)
    throw std::domain_error("all pixels ignored; loss is undefined");

  Tensor3 dlogits(image.height, image.width, k);
  std::vector<double> probs(k);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(valid);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int label = labels.at(y, x);
      if (label == labels.ignore_index) continue;
      const double w =
          pixel_weights.empty()
              ? 1.0
              : pixel_weights[static_cast<std::size_t>(y) * image.width + x];
      const double ce = softmax_ce(lg, y, x, label, probs);
      loss += w * ce * inv_n;
      if (w == 0.0) continue;
      for (int i = 0; i < k; ++i) {
        const double target = (i == label) ? 1.0 : 0.0;
        dlogits.at(y, x, i) = w * inv_n * (probs[i] - target);
      }
    }
  }
  return {loss, oracle.logits_vjp(image, dlogits)};
}

std::vector<double> per_pixel_losses(const ModelOracle& oracle, const Tensor3& image,
                                     const LabelMap& labels) {
  check_pair(oracle, image);
  validate_labels(labels, image.height, image.width);
  const Logits lg = oracle.logits(image);
  std::vector<double> out(labels.size(), 0.0);
  std::vector<double> probs(oracle.num_classes());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int label = labels.at(y, x);
      if (label == labels.ignore_index) continue;
      out[static_cast<std::size_t>(y) * image.width + x] =
          softmax_ce(lg, y, x, label, probs);
    }
  }
  return out;
}

Tensor3 logit_selection_grad(const ModelOracle& oracle, const Tensor3& image,
                             std::span<const LogitSelection> selection) {
  check_pair(oracle, image);
  if (selection.empty())
    return Tensor3(image.height, image.width, image.channels);
  Tensor3 upstream(image.height, image.width, oracle.num_classes());
  for (const LogitSelection& s : selection) {
    if (s.y < 0 || s.y >= image.height || s.x < 0 || s.x >= image.width)
      throw std::invalid_argument("logit selection coordinate out of bounds");
    if (s.cls < 0 || s.cls >= oracle.num_classes())
      throw std::invalid_argument("logit selection class out of range");
    upstream.at(s.y, s.x, s.cls) += s.weight;
  }
  return oracle.logits_vjp(image, upstream);
}

Tensor3 finite_difference_grad(const ModelOracle& oracle, const Tensor3& image,
                               const LabelMap& labels, double h,
                               std::span<const double> pixel_weights) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step h must be > 0");
  check_pair(oracle, image);

  validate_labels(labels, image.height, image.width);
  if (!pixel_weights.empty() && pixel_weights.size() != labels.size())
    throw std::invalid_argument("pixel_weights must have H*W entries");

  auto loss_at = [&](const Tensor3& x) {
    return weighted_mean_ce(oracle, x, labels, pixel_weights);
  };

  Tensor3 grad(image.height, image.width, image.channels);
  Tensor3 probe = image;
  for (std::size_t i = 0; i < probe.data.size(); ++i) {
    const double v = probe.data[i];
    probe.data[i] = v + h;
    const double up = loss_at(probe);
    probe.data[i] = v - h;
    const double down = loss_at(probe);
    probe.data[i] = v;
    grad.data[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace segtransfer
