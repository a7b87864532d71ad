#ifndef SEGTRANSFER_MODELS_HPP
#define SEGTRANSFER_MODELS_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segtransfer/oracle.hpp"
#include "segtransfer/tensor.hpp"

namespace segtransfer {

/// One stride-1, zero-padded ("same") convolution. Weight layout is
/// (ky, kx, in, out) row-major so the innermost loop runs over out channels.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;  // odd
  std::vector<double> weights;  // kernel * kernel * in * out
  std::vector<double> bias;     // out

  std::size_t weight_count() const {
    return static_cast<std::size_t>(kernel) * kernel * in_channels * out_channels;
  }
};

struct ConvParamGrads {
  std::vector<std::vector<double>> weights;  // per layer
  std::vector<std::vector<double>> bias;
};

/// Small fully convolutional segmenter: conv -> ReLU -> ... -> conv.
/// Weights are read-only once the model is used as an oracle; the trainer
/// mutates them through layers() before that point.
class ToyConvSegmenter final : public ModelOracle {
 public:
  ToyConvSegmenter(std::string id, std::vector<ConvLayer> layers);

  struct LayerSpec {
    int in_channels;
    int out_channels;
    int kernel;
  };
  /// He-style random initialization.
  static ToyConvSegmenter random(std::string id, std::span<const LayerSpec> specs, Rng& rng);

  const std::string& id() const override { return id_; }
  int num_classes() const override { return layers_.back().out_channels; }
  int input_channels() const override { return layers_.front().in_channels; }
  Logits logits(const Tensor3& image) const override;
  Tensor3 logits_vjp(const Tensor3& image, const Tensor3& upstream) const override;

  std::vector<ConvLayer>& layers() { return layers_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  /// Mean CE over non-ignored pixels plus parameter gradients; used by the
  /// fixture trainer only.
  double loss_and_param_grads(const Tensor3& image, const LabelMap& labels,
                              ConvParamGrads& grads) const;

 private:
  std::vector<Tensor3> forward_all(const Tensor3& image) const;

  std::string id_;
  std::vector<ConvLayer> layers_;
};

/// Out-of-process model. Each logits() call writes the image to a temporary
/// T3 file, runs `command <in> <out>`, and reads the logits back. Gradients
/// come from central differences on the returned logits, so this adapter is
/// only practical for small inputs.
class ExternalProcessModel final : public ModelOracle {
 public:
  ExternalProcessModel(std::string id, std::string command, int num_classes,
                       int input_channels, double fd_step = 1e-4);

  const std::string& id() const override { return id_; }
  int num_classes() const override { return num_classes_; }
  int input_channels() const override { return channels_; }
  Logits logits(const Tensor3& image) const override;
  Tensor3 logits_vjp(const Tensor3& image, const Tensor3& upstream) const override;
  bool concurrent_safe() const override { return false; }

  const std::string& command() const { return command_; }
  double fd_step() const { return fd_step_; }

 private:
  std::string id_;
  std::string command_;
  int num_classes_;
  int channels_;
  double fd_step_;
};

/// Serialized model document: {"kind": "toy-linear"|"toy-conv"|"external", ...}.
nlohmann::json model_to_json(const ModelOracle& oracle);
std::unique_ptr<ModelOracle> model_from_json(const std::string& id, const nlohmann::json& j);
std::unique_ptr<ModelOracle> load_model_file(const std::string& id, const std::string& path);
void save_model_file(const ModelOracle& oracle, const std::string& path);

}  // namespace segtransfer

#endif  // SEGTRANSFER_MODELS_HPP
