#include "segtransfer/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "segtransfer/transforms.hpp"

namespace segtransfer {

ConfusionMatrix::ConfusionMatrix(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) {
    throw std::invalid_argument("confusion matrix needs at least one class");
  }
  counts_.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
}

void ConfusionMatrix::accumulate(const LabelMap& prediction, const LabelMap& ground_truth) {
  if (prediction.height != ground_truth.height || prediction.width != ground_truth.width) {
    throw std::invalid_argument("confusion matrix: shape mismatch");
  }
  for (std::size_t i = 0; i < ground_truth.data.size(); ++i) {
    const int truth = ground_truth.data[i];
    if (truth == ground_truth.ignore_index) continue;
    if (truth < 0 || truth >= num_classes_) {
      throw std::invalid_argument("confusion matrix: ground truth class out of range");
    }
    const int pred = prediction.data[i];
    if (pred == prediction.ignore_index) {
      throw std::invalid_argument("confusion matrix: prediction may not use the ignore index");
    }
    if (pred < 0 || pred >= num_classes_) {
      throw std::invalid_argument("confusion matrix: prediction class out of range");
    }
    ++counts_[static_cast<std::size_t>(truth) * num_classes_ + pred];
  }
}

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (long long v : counts_) t += v;
  return t;
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
  const int n = cm.num_classes();
  std::vector<double> ious(n, std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < n; ++c) {
    long long tp = cm.count(c, c);
    long long row = 0;
    long long col = 0;
    for (int k = 0; k < n; ++k) {
      row += cm.count(c, k);
      col += cm.count(k, c);
    }
    const long long uni = row + col - tp;
    if (uni > 0) {
      ious[c] = static_cast<double>(tp) / static_cast<double>(uni);
    }
  }
  return ious;
}

double miou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int defined = 0;
  for (double v : per_class_iou(cm)) {
    if (!std::isnan(v)) {
      sum += v;
      ++defined;
    }
  }
  if (defined == 0) {
    throw std::domain_error("miou: no class has a defined IoU");
  }
  return sum / defined;
}

double psnr(const Tensor3& a, const Tensor3& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("psnr: shape mismatch");
  }
  if (a.data.empty()) {
    throw std::invalid_argument("psnr: empty tensors");
  }
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor3& a, const Tensor3& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("ssim: shape mismatch");
  }
  constexpr int kWindow = 11;
  if (a.height < kWindow || a.width < kWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
  constexpr double kC2 = 0.03 * 0.03;
  static const GaussianKernel window = make_gaussian_kernel(kWindow, 1.5);

  double total = 0.0;
  long long positions = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int i = 0; i + kWindow <= a.height; ++i) {
      for (int j = 0; j + kWindow <= a.width; ++j) {
        double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
        for (int wi = 0; wi < kWindow; ++wi) {
          for (int wj = 0; wj < kWindow; ++wj) {
            const double w = window.at(wi, wj);
            const double x = a.at(i + wi, j + wj, c);
            const double y = b.at(i + wi, j + wj, c);
            mx += w * x;
            my += w * y;
            sxx += w * x * x;
            syy += w * y * y;
            sxy += w * x * y;
          }
        }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cov = sxy - mx * my;
        const double num = (2.0 * mx * my + kC1) * (2.0 * cov + kC2);
        const double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
        total += num / den;
        ++positions;
      }
    }
  }
  return total / static_cast<double>(positions);
}

double success_rate(double miou_clean, double miou_adv) {
  if (!(std::isfinite(miou_clean) && std::isfinite(miou_adv))) {
    throw std::invalid_argument("success_rate: inputs must be finite");
  }
  if (miou_clean == 0.0) {
    throw std::domain_error("success_rate: clean miou is zero");
  }
  return 1.0 - miou_adv / miou_clean;
}

}  // namespace segtransfer
