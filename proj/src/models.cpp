#include "segtransfer/models.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "segtransfer/io.hpp"

namespace segtransfer {

namespace {

// out(y,x,co) = bias(co) + sum_{ky,kx,ci} in(y+ky-r, x+kx-r, ci) * w(ky,kx,ci,co)
Tensor3 conv_forward(const Tensor3& in, const ConvLayer& layer) {
  const int h = in.height, w = in.width;
  const int k = layer.kernel, r = k / 2;
  const int ci_n = layer.in_channels, co_n = layer.out_channels;
  Tensor3 out(h, w, co_n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* acc = &out.at(y, x, 0);
      for (int co = 0; co < co_n; ++co) acc[co] = layer.bias[co];
      for (int ky = 0; ky < k; ++ky) {
        const int yy = y + ky - r;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int xx = x + kx - r;
          if (xx < 0 || xx >= w) continue;
          const double* src =
              in.data.data() + (static_cast<std::size_t>(yy) * w + xx) * ci_n;
          const double* wrow = &layer.weights[((static_cast<std::size_t>(ky) * k + kx) * ci_n) * co_n];
          for (int ci = 0; ci < ci_n; ++ci) {
            const double v = src[ci];
            const double* wp = wrow + static_cast<std::size_t>(ci) * co_n;
            for (int co = 0; co < co_n; ++co) acc[co] += v * wp[co];
          }
        }
      }
    }
  }
  return out;
}

// dIn(yy,xx,ci) += sum_co dOut(y,x,co) * w(ky,kx,ci,co); optionally also
// accumulates weight/bias gradients.
void conv_backward(const Tensor3& in, const ConvLayer& layer, const Tensor3& dout,
                   Tensor3* din, std::vector<double>* dw, std::vector<double>* db) {
  const int h = in.height, w = in.width;
  const int k = layer.kernel, r = k / 2;
  const int ci_n = layer.in_channels, co_n = layer.out_channels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* up =
          dout.data.data() + (static_cast<std::size_t>(y) * w + x) * co_n;
      if (db) {
        for (int co = 0; co < co_n; ++co) (*db)[co] += up[co];
      }
      for (int ky = 0; ky < k; ++ky) {
        const int yy = y + ky - r;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int xx = x + kx - r;
          if (xx < 0 || xx >= w) continue;
          const std::size_t base = ((static_cast<std::size_t>(ky) * k + kx) * ci_n) * co_n;
          for (int ci = 0; ci < ci_n; ++ci) {
            const double* wp = &layer.weights[base + static_cast<std::size_t>(ci) * co_n];
            double acc = 0.0;
            for (int co = 0; co < co_n; ++co) acc += up[co] * wp[co];
            if (din) din->at(yy, xx, ci) += acc;
            if (dw) {
              const double v = in.at(yy, xx, ci);
              double* dwp = dw->data() + base + static_cast<std::size_t>(ci) * co_n;
              for (int co = 0; co < co_n; ++co) dwp[co] += v * up[co];
            }
          }
        }
      }
    }
  }
}

void relu_inplace(Tensor3& t) {
  for (double& v : t.data)
    if (v < 0.0) v = 0.0;
}

}  // namespace

ToyConvSegmenter::ToyConvSegmenter(std::string id, std::vector<ConvLayer> layers)
    : id_(std::move(id)), layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("conv segmenter needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const ConvLayer& l = layers_[i];
    if (l.kernel < 1 || l.kernel % 2 == 0)
      throw std::invalid_argument("conv kernel must be odd and positive");
    if (l.weights.size() != l.weight_count() ||
        l.bias.size() != static_cast<std::size_t>(l.out_channels))
      throw std::invalid_argument("conv layer parameter sizes are inconsistent");
    if (i > 0 && layers_[i - 1].out_channels != l.in_channels)
      throw std::invalid_argument("conv layer channel chain is broken");
  }
}

ToyConvSegmenter ToyConvSegmenter::random(std::string id, std::span<const LayerSpec> specs,
                                          Rng& rng) {
  std::vector<ConvLayer> layers;
  for (const LayerSpec& s : specs) {
    ConvLayer l;
    l.in_channels = s.in_channels;
    l.out_channels = s.out_channels;
    l.kernel = s.kernel;
    l.weights.resize(l.weight_count());
    l.bias.assign(s.out_channels, 0.0);
    const double scale = std::sqrt(2.0 / (static_cast<double>(s.kernel) * s.kernel * s.in_channels));
    for (double& v : l.weights) v = rng.uniform(-scale, scale);
    layers.push_back(std::move(l));
  }
  return ToyConvSegmenter(std::move(id), std::move(layers));
}

std::vector<Tensor3> ToyConvSegmenter::forward_all(const Tensor3& image) const {
  // activations[0] = input; activations[i] = post-ReLU output of layer i-1
  // (no ReLU after the last layer).
  std::vector<Tensor3> acts;
  acts.reserve(layers_.size() + 1);
  acts.push_back(image);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor3 out = conv_forward(acts.back(), layers_[i]);
    if (i + 1 < layers_.size()) relu_inplace(out);
    acts.push_back(std::move(out));
  }
  return acts;
}

Logits ToyConvSegmenter::logits(const Tensor3& image) const {
  if (image.channels != input_channels())
    throw std::invalid_argument("image channel count does not match oracle '" + id_ + "'");
  return forward_all(image).back();
}

Tensor3 ToyConvSegmenter::logits_vjp(const Tensor3& image, const Tensor3& upstream) const {
  if (image.channels != input_channels())
    throw std::invalid_argument("image channel count does not match oracle '" + id_ + "'");
  if (upstream.height != image.height || upstream.width != image.width ||
      upstream.channels != num_classes())
    throw std::invalid_argument("upstream shape must be (H, W, num_classes)");
  const std::vector<Tensor3> acts = forward_all(image);
  Tensor3 grad = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) {
      // ReLU mask of the stored post-activation.
      const Tensor3& act = acts[i + 1];
      for (std::size_t j = 0; j < grad.data.size(); ++j)
        if (act.data[j] <= 0.0) grad.data[j] = 0.0;
    }
    Tensor3 din(acts[i].height, acts[i].width, layers_[i].in_channels);
    conv_backward(acts[i], layers_[i], grad, &din, nullptr, nullptr);
    grad = std::move(din);
  }
  return grad;
}

double ToyConvSegmenter::loss_and_param_grads(const Tensor3& image, const LabelMap& labels,
                                              ConvParamGrads& grads) const {
  validate_labels(labels, image.height, image.width);
  if (grads.weights.size() != layers_.size()) {
    grads.weights.assign(layers_.size(), {});
    grads.bias.assign(layers_.size(), {});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      grads.weights[i].assign(layers_[i].weight_count(), 0.0);
      grads.bias[i].assign(layers_[i].out_channels, 0.0);
    }
  }

  const std::vector<Tensor3> acts = forward_all(image);
  const Tensor3& lg = acts.back();
  const int k = num_classes();

  long long valid = 0;
  for (int v : labels.data)
    if (v != labels.ignore_index) ++valid;
  if (valid == 0) throw std::domain_error("all pixels ignored; loss is undefined");
  const double inv_n = 1.0 / static_cast<double>(valid);

  Tensor3 grad(image.height, image.width, k);
  std::vector<double> probs(k);
  double loss = 0.0;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int label = labels.at(y, x);
      if (label == labels.ignore_index) continue;
      double m = lg.at(y, x, 0);
      for (int i = 1; i < k; ++i) m = std::max(m, lg.at(y, x, i));
      double z = 0.0;
      for (int i = 0; i < k; ++i) {
        probs[i] = std::exp(lg.at(y, x, i) - m);
        z += probs[i];
      }
      loss += (std::log(z) + m - lg.at(y, x, label)) * inv_n;
      for (int i = 0; i < k; ++i)
        grad.at(y, x, i) = (probs[i] / z - (i == label ? 1.0 : 0.0)) * inv_n;
    }
  }

  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size()) {
      const Tensor3& act = acts[i + 1];
      for (std::size_t j = 0; j < grad.data.size(); ++j)
        if (act.data[j] <= 0.0) grad.data[j] = 0.0;
    }
    const bool need_din = i > 0;
    Tensor3 din(acts[i].height, acts[i].width, layers_[i].in_channels);
    conv_backward(acts[i], layers_[i], grad, need_din ? &din : nullptr,
                  &grads.weights[i], &grads.bias[i]);
    grad = std::move(din);
  }
  return loss;
}

ExternalProcessModel::ExternalProcessModel(std::string id, std::string command,
                                           int num_classes, int input_channels,
                                           double fd_step)
    : id_(std::move(id)), command_(std::move(command)), num_classes_(num_classes),
      channels_(input_channels), fd_step_(fd_step) {
  if (command_.empty()) throw std::invalid_argument("external model needs a command");
  if (num_classes_ < 1) throw std::invalid_argument("external model needs >= 1 class");
  if (channels_ < 1) throw std::invalid_argument("external model needs >= 1 channel");
  if (!(std::isfinite(fd_step_) && fd_step_ > 0.0)) {
    throw std::invalid_argument("external model fd_step must be finite and positive");
  }
}

Logits ExternalProcessModel::logits(const Tensor3& image) const {
  namespace fs = std::filesystem;
  if (image.channels != channels_) {
    throw std::invalid_argument("image channel count does not match oracle '" + id_ + "'");
  }
  static std::atomic<unsigned long> counter{0};
  const std::string tag = "segtransfer_" + std::to_string(static_cast<long>(::getpid())) +
                          "_" + std::to_string(counter++);
  const fs::path dir = fs::temp_directory_path();
  const std::string in_path = (dir / (tag + "_in.t3")).string();
  const std::string out_path = (dir / (tag + "_out.t3")).string();
  write_tensor_raw(image, in_path);
  const std::string cmdline = command_ + " \"" + in_path + "\" \"" + out_path + "\"";
  const int rc = std::system(cmdline.c_str());
  if (rc != 0) {
    fs::remove(in_path);
    throw std::runtime_error("external model command failed with status " +
                             std::to_string(rc));
  }
  Logits out = read_tensor_raw(out_path);
  fs::remove(in_path);
  fs::remove(out_path);
  if (out.height != image.height || out.width != image.width ||
      out.channels != num_classes_) {
    throw std::runtime_error("external model returned logits of the wrong shape");
  }
  return out;
}

Tensor3 ExternalProcessModel::logits_vjp(const Tensor3& image, const Tensor3& upstream) const {
  if (upstream.height != image.height || upstream.width != image.width ||
      upstream.channels != num_classes_) {
    throw std::invalid_argument("upstream shape must be (H, W, num_classes)");
  }
  Tensor3 grad(image.height, image.width, image.channels);
  Tensor3 probe = image;
  for (std::size_t i = 0; i < probe.data.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + fd_step_;
    const Logits plus = logits(probe);
    probe.data[i] = orig - fd_step_;
    const Logits minus = logits(probe);
    probe.data[i] = orig;
    double s = 0.0;
    for (std::size_t j = 0; j < plus.data.size(); ++j) {
      s += upstream.data[j] * (plus.data[j] - minus.data[j]);
    }
    grad.data[i] = s / (2.0 * fd_step_);
  }
  return grad;
}

nlohmann::json model_to_json(const ModelOracle& oracle) {
  if (const auto* lin = dynamic_cast<const ToyLinearSegmenter*>(&oracle)) {
    nlohmann::json j;
    j["kind"] = "toy-linear";
    j["channels"] = lin->input_channels();
    j["num_classes"] = lin->num_classes();
    std::vector<double> w, b;
    for (int c = 0; c < lin->input_channels(); ++c)
      for (int k = 0; k < lin->num_classes(); ++k) w.push_back(lin->weight(c, k));
    for (int k = 0; k < lin->num_classes(); ++k) b.push_back(lin->bias(k));
    j["weights"] = w;
    j["biases"] = b;
    return j;
  }
  if (const auto* conv = dynamic_cast<const ToyConvSegmenter*>(&oracle)) {
    nlohmann::json j;
    j["kind"] = "toy-conv";
    nlohmann::json layers = nlohmann::json::array();
    for (const ConvLayer& l : conv->layers()) {
      layers.push_back({{"in", l.in_channels},
                        {"out", l.out_channels},
                        {"kernel", l.kernel},
                        {"weights", l.weights},
                        {"bias", l.bias}});
    }
    j["layers"] = std::move(layers);
    return j;
  }
  if (const auto* ext = dynamic_cast<const ExternalProcessModel*>(&oracle)) {
    return {{"kind", "external"},
            {"command", ext->command()},
            {"num_classes", ext->num_classes()},
            {"channels", ext->input_channels()},
            {"fd_step", ext->fd_step()}};
  }
  throw std::invalid_argument("model kind is not serializable");
}

std::unique_ptr<ModelOracle> model_from_json(const std::string& id, const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "toy-linear") {
    return std::make_unique<ToyLinearSegmenter>(
        id, j.at("channels").get<int>(), j.at("num_classes").get<int>(),
        j.at("weights").get<std::vector<double>>(),
        j.at("biases").get<std::vector<double>>());
  }
  if (kind == "toy-conv") {
    std::vector<ConvLayer> layers;
    for (const nlohmann::json& lj : j.at("layers")) {
      ConvLayer l;
      l.in_channels = lj.at("in").get<int>();
      l.out_channels = lj.at("out").get<int>();
      l.kernel = lj.at("kernel").get<int>();
      l.weights = lj.at("weights").get<std::vector<double>>();
      l.bias = lj.at("bias").get<std::vector<double>>();
      layers.push_back(std::move(l));
    }
    return std::make_unique<ToyConvSegmenter>(id, std::move(layers));
  }
  if (kind == "external") {
    return std::make_unique<ExternalProcessModel>(
        id, j.at("command").get<std::string>(), j.at("num_classes").get<int>(),
        j.at("channels").get<int>(), j.value("fd_step", 1e-4));
  }
  throw std::invalid_argument("unknown model kind '" + kind + "'");
}

std::unique_ptr<ModelOracle> load_model_file(const std::string& id, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  nlohmann::json j;
  in >> j;
  return model_from_json(id, j);
}

void save_model_file(const ModelOracle& oracle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << model_to_json(oracle).dump(2) << "\n";
}

}  // namespace segtransfer
