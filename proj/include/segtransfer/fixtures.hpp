#ifndef SEGTRANSFER_FIXTURES_HPP
#define SEGTRANSFER_FIXTURES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "segtransfer/harness.hpp"
#include "segtransfer/models.hpp"

namespace segtransfer {

/// Synthetic 3-class scenes: textured background, one disk, one axis-aligned
/// rectangle, separated by color. Class colors sit close together so that a
/// small L-inf budget can push pixels across the decision boundaries, while
/// the per-pixel noise stays small enough for clean models to do well.
struct ShapesParams {
  int count = 200;
  int size = 64;
  double noise = 0.02;  // per-channel uniform color jitter
  std::uint64_t seed = 7;
};

std::vector<Sample> make_shapes_samples(const ShapesParams& params);

/// Renders the same samples to images_dir/*.ppm and labels_dir/*.pgm
/// (8-bit quantized).
void write_shapes_dataset(const ShapesParams& params, const std::string& images_dir,
                          const std::string& labels_dir);

/// Two deliberately different small architectures over the same task.
ToyConvSegmenter make_conv_net_a(const std::string& id, int in_channels,
                                 int num_classes, Rng& rng);
ToyConvSegmenter make_conv_net_b(const std::string& id, int in_channels,
                                 int num_classes, Rng& rng);

struct TrainParams {
  int epochs = 30;
  double lr = 0.005;  // Adam step size
  std::uint64_t seed = 3;
};

/// Adam over per-image gradients, shuffled each epoch. Returns the mean
/// training loss of the final epoch.
double train_conv_segmenter(ToyConvSegmenter& model, const std::vector<Sample>& samples,
                            const TrainParams& params);

/// Global mean IoU of the model over the samples.
double dataset_miou(const ModelOracle& oracle, const std::vector<Sample>& samples);

}  // namespace segtransfer

#endif  // SEGTRANSFER_FIXTURES_HPP
