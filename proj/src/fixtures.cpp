#include "segtransfer/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "segtransfer/io.hpp"
#include "segtransfer/metrics.hpp"

namespace segtransfer {

namespace {

// Class colors, deliberately close: the gaps (0.04 to 0.08 per channel)
// exceed the rendering noise but sit within reach of an 8/255 budget.
constexpr double kColors[3][3] = {
    {0.46, 0.50, 0.54},  // background
    {0.50, 0.54, 0.46},  // disk
    {0.54, 0.46, 0.50},  // rectangle
};

struct Disk {
  double cx, cy, r;
};
struct Rect {
  int x0, y0, x1, y1;  // inclusive
};

}  // namespace

std::vector<Sample> make_shapes_samples(const ShapesParams& params) {
  if (params.count < 1 || params.size < 12) {
    throw std::invalid_argument("shapes: count must be >= 1 and size >= 12");
  }
  if (!(params.noise >= 0.0 && params.noise < 0.4)) {
    throw std::invalid_argument("shapes: noise must lie in [0, 0.4)");
  }
  Rng rng(params.seed);
  const int n = params.size;
  std::vector<Sample> samples;
  samples.reserve(params.count);
  for (int idx = 0; idx < params.count; ++idx) {
    Disk d;
    d.r = rng.uniform(n / 6.0, n / 3.0);
    d.cx = rng.uniform(d.r, n - d.r);
    d.cy = rng.uniform(d.r, n - d.r);
    Rect rc;
    const int rw = rng.uniform_int(n / 5, n / 2);
    const int rh = rng.uniform_int(n / 5, n / 2);
    rc.x0 = rng.uniform_int(0, n - rw);
    rc.y0 = rng.uniform_int(0, n - rh);
    rc.x1 = rc.x0 + rw - 1;
    rc.y1 = rc.y0 + rh - 1;
    const bool disk_on_top = idx % 2 == 0;

    Sample s;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%04d", idx);
    s.id = buf;
    s.image = Tensor3(n, n, 3);
    s.labels = LabelMap(n, n, 3);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const bool in_disk =
            (x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy) <= d.r * d.r;
        const bool in_rect = x >= rc.x0 && x <= rc.x1 && y >= rc.y0 && y <= rc.y1;
        int cls = 0;
        if (disk_on_top) {
          cls = in_disk ? 1 : (in_rect ? 2 : 0);
        } else {
          cls = in_rect ? 2 : (in_disk ? 1 : 0);
        }
        s.labels.at(y, x) = cls;
        for (int c = 0; c < 3; ++c) {
          const double v = kColors[cls][c] + rng.uniform(-params.noise, params.noise);
          s.image.at(y, x, c) = std::clamp(v, 0.02, 0.98);
        }
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_shapes_dataset(const ShapesParams& params, const std::string& images_dir,
                          const std::string& labels_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(images_dir);
  fs::create_directories(labels_dir);
  for (const Sample& s : make_shapes_samples(params)) {
    write_image_pnm(s.image, (fs::path(images_dir) / (s.id + ".ppm")).string());
    write_labels_pgm(s.labels, (fs::path(labels_dir) / (s.id + ".pgm")).string());
  }
}

ToyConvSegmenter make_conv_net_a(const std::string& id, int in_channels,
                                 int num_classes, Rng& rng) {
  const ToyConvSegmenter::LayerSpec specs[] = {
      {in_channels, 8, 5},
      {8, num_classes, 3},
  };
  return ToyConvSegmenter::random(id, specs, rng);
}

ToyConvSegmenter make_conv_net_b(const std::string& id, int in_channels,
                                 int num_classes, Rng& rng) {
  const ToyConvSegmenter::LayerSpec specs[] = {
      {in_channels, 6, 3},
      {6, 8, 3},
      {8, num_classes, 1},
  };
  return ToyConvSegmenter::random(id, specs, rng);
}

double train_conv_segmenter(ToyConvSegmenter& model, const std::vector<Sample>& samples,
                            const TrainParams& params) {
  if (samples.empty()) throw std::invalid_argument("train: no samples");
  if (params.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(params.lr > 0.0)) throw std::invalid_argument("train: lr must be positive");

  auto& layers = model.layers();
  ConvParamGrads grads;
  ConvParamGrads m, v;  // Adam moments, laid out like the gradients
  m.weights.resize(layers.size());
  m.bias.resize(layers.size());
  v.weights.resize(layers.size());
  v.bias.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    m.weights[i].assign(layers[i].weights.size(), 0.0);
    m.bias[i].assign(layers[i].bias.size(), 0.0);
    v.weights[i].assign(layers[i].weights.size(), 0.0);
    v.bias[i].assign(layers[i].bias.size(), 0.0);
  }

  constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
  long long step = 0;
  auto adam = [&](std::vector<double>& p, const std::vector<double>& g,
                  std::vector<double>& mo, std::vector<double>& vo) {
    const double c1 = 1.0 - std::pow(kB1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kB2, static_cast<double>(step));
    for (std::size_t i = 0; i < p.size(); ++i) {
      mo[i] = kB1 * mo[i] + (1.0 - kB1) * g[i];
      vo[i] = kB2 * vo[i] + (1.0 - kB2) * g[i] * g[i];
      p[i] -= params.lr * (mo[i] / c1) / (std::sqrt(vo[i] / c2) + kEps);
    }
  };

  Rng rng(params.seed);
  std::vector<int> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    }
    double loss_sum = 0.0;
    for (int idx : order) {
      for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        std::fill(grads.weights[l].begin(), grads.weights[l].end(), 0.0);
        std::fill(grads.bias[l].begin(), grads.bias[l].end(), 0.0);
      }
      loss_sum += model.loss_and_param_grads(samples[idx].image, samples[idx].labels, grads);
      ++step;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        adam(layers[l].weights, grads.weights[l], m.weights[l], v.weights[l]);
        adam(layers[l].bias, grads.bias[l], m.bias[l], v.bias[l]);
      }
    }
    last_epoch_loss = loss_sum / static_cast<double>(samples.size());
  }
  return last_epoch_loss;
}

double dataset_miou(const ModelOracle& oracle, const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("dataset_miou: no samples");
  ConfusionMatrix cm(oracle.num_classes());
  for (const Sample& s : samples) {
    cm.accumulate(predict(oracle, s.image), s.labels);
  }
  return miou(cm);
}

}  // namespace segtransfer
