#ifndef SEGTRANSFER_TENSOR_HPP
#define SEGTRANSFER_TENSOR_HPP

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace segtransfer {

/// Dense row-major (height, width, channels) array of doubles. Used for
/// images in [0,1], gradients, and logits alike.
struct Tensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int ch) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  double at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor3& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

/// Per-pixel integer class indices paired with an image. Values are in
/// [0, num_classes) or equal to ignore_index.
struct LabelMap {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  int ignore_index = 255;
  std::vector<int> data;

  LabelMap() = default;
  LabelMap(int h, int w, int classes, int ignore = 255, int fill = 0)
      : height(h), width(w), num_classes(classes), ignore_index(ignore),
        data(static_cast<std::size_t>(h) * w, fill) {}

  int& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  int at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
};

using Logits = Tensor3;  // channels == num_classes

/// Throws std::invalid_argument unless t is a well-formed image: positive
/// extents and every element finite in [0,1].
void validate_image(const Tensor3& t);

/// Throws std::invalid_argument unless labels pair with an H x W image and
/// every entry is a valid class or the ignore index.
void validate_labels(const LabelMap& labels, int h, int w);

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double linf_norm(const Tensor3& t);
double l1_norm(const Tensor3& t);
double max_abs_diff(const Tensor3& a, const Tensor3& b);

/// Deterministic uniform generator. The engine-to-double mapping is pinned
/// here (not delegated to std distributions) so that identical seeds produce
/// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Inclusive range.
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit seed for one image within an experiment: a hash of the
/// experiment seed and the image id, so worker scheduling cannot change it.
std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view image_id);

}  // namespace segtransfer

#endif  // SEGTRANSFER_TENSOR_HPP
