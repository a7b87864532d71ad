#include "segtransfer/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace segtransfer {

void validate_image(const Tensor3& t) {
  if (t.height < 1 || t.width < 1 || t.channels < 1)
    throw std::invalid_argument("image must have positive extents");
  if (t.data.size() != static_cast<std::size_t>(t.height) * t.width * t.channels)
    throw std::invalid_argument("image storage does not match its shape");
  for (double v : t.data) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw std::invalid_argument("image values must be finite and within [0,1]");
  }
}

void validate_labels(const LabelMap& labels, int h, int w) {
  if (labels.height != h || labels.width != w)
    throw std::invalid_argument("label map shape does not match image");
  if (labels.num_classes < 1)
    throw std::invalid_argument("label map needs at least one class");
  for (int v : labels.data) {
    if (v == labels.ignore_index) continue;
    if (v < 0 || v >= labels.num_classes)
      throw std::invalid_argument("label value outside [0, num_classes) and not ignore_index");
  }
}

double linf_norm(const Tensor3& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::abs(v));
  return m;
}

double l1_norm(const Tensor3& t) {
  double s = 0.0;
  for (double v : t.data) s += std::abs(v);
  return s;
}

double max_abs_diff(const Tensor3& a, const Tensor3& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view image_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : image_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(base_seed ^ splitmix64(h));
}

}  // namespace segtransfer
