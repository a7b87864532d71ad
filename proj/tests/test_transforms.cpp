#include <doctest.h>

#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "segtransfer/transforms.hpp"

using namespace segtransfer;

namespace {

Tensor3 random_tensor(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor3 t(h, w, c);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor3& a, const Tensor3& b) {
  REQUIRE(a.data.size() == b.data.size());
  return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0);
}

}  // namespace

TEST_CASE("gaussian kernel closed forms") {
  SUBCASE("size one is the identity kernel") {
    const GaussianKernel k = make_gaussian_kernel(1, 0.5);
    REQUIRE(k.values.size() == 1);
    CHECK(k.values[0] == 1.0);
  }

  SUBCASE("size three, sigma one half") {
    const GaussianKernel k = make_gaussian_kernel(3, 0.5);
    // unnormalized weights exp(-(dy^2+dx^2)/(2*0.25)): center 1, edge e^-2, corner e^-4
    const double e2 = std::exp(-2.0), e4 = std::exp(-4.0);
    const double z = 1.0 + 4.0 * e2 + 4.0 * e4;
    CHECK(k.at(1, 1) == doctest::Approx(1.0 / z).epsilon(1e-12));
    CHECK(k.at(0, 1) == doctest::Approx(e2 / z).epsilon(1e-12));
    CHECK(k.at(0, 0) == doctest::Approx(e4 / z).epsilon(1e-12));
    CHECK(k.at(2, 1) == k.at(0, 1));
    CHECK(k.at(1, 0) == k.at(1, 2));
  }

  SUBCASE("huge sigma tends to uniform") {
    const GaussianKernel k = make_gaussian_kernel(5, 1e6);
    for (double v : k.values) CHECK(v == doctest::Approx(1.0 / 25.0).epsilon(1e-9));
  }

  SUBCASE("always sums to one") {
    for (int size : {1, 3, 5, 9}) {
      const GaussianKernel k = make_gaussian_kernel(size, 1.33);
      const double sum = std::accumulate(k.values.begin(), k.values.end(), 0.0);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("rejects even sizes and non-positive sigma") {
    CHECK_THROWS_AS(make_gaussian_kernel(2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_gaussian_kernel(0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_gaussian_kernel(3, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_gaussian_kernel(3, -1.0), std::invalid_argument);
  }
}

TEST_CASE("bilinear resize to the same shape is the identity") {
  Rng rng(3);
  const Tensor3 img = random_tensor(7, 5, 3, rng);
  const Tensor3 out = bilinear_resize(img, 7, 5);
  CHECK(max_abs_diff(out, img) == 0.0);
}

TEST_CASE("bilinear 2x2 to 1x1 averages the four corners") {
  Tensor3 img(2, 2, 1);
  img.at(0, 0, 0) = 1.0;
  img.at(0, 1, 0) = 2.0;
  img.at(1, 0, 0) = 3.0;
  img.at(1, 1, 0) = 4.0;
  const Tensor3 out = bilinear_resize(img, 1, 1);
  CHECK(out.at(0, 0, 0) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("bilinear resize adjoint satisfies the dot-product identity") {
  // <R x, g> == <x, R^T g> pins the adjoint to the forward map exactly
  Rng rng(5);
  for (auto [ih, iw, oh, ow] : {std::array<int, 4>{6, 7, 4, 3},
                                std::array<int, 4>{3, 3, 8, 5},
                                std::array<int, 4>{5, 4, 5, 4}}) {
    const Tensor3 x = random_tensor(ih, iw, 2, rng, -1.0, 1.0);
    Tensor3 g = random_tensor(oh, ow, 2, rng, -1.0, 1.0);
    const Tensor3 rx = bilinear_resize(x, oh, ow);
    const Tensor3 rtg = bilinear_resize_adjoint(g, ih, iw);
    CHECK(dot(rx, g) == doctest::Approx(dot(x, rtg)).epsilon(1e-10));
  }
}

TEST_CASE("nearest resize by half picks the odd-index samples") {
  LabelMap labels(8, 8, 64);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) labels.at(y, x) = y * 8 + x;
  }
  const LabelMap out = nearest_resize(labels, 4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      // source coordinate 2i + 0.5 rounds to sample 2i + 1
      CHECK(out.at(y, x) == (2 * y + 1) * 8 + (2 * x + 1));
    }
  }
}

TEST_CASE("nearest resize carries the ignore index through") {
  LabelMap labels(4, 4, 3);
  for (int& v : labels.data) v = labels.ignore_index;
  const LabelMap out = nearest_resize(labels, 2, 2);
  CHECK(out.ignore_index == labels.ignore_index);
  for (int v : out.data) CHECK(v == labels.ignore_index);
}

TEST_CASE("diverse input with zero probability passes inputs through") {
  Rng rng(11);
  const Tensor3 img = random_tensor(6, 6, 3, rng);
  LabelMap labels(6, 6, 3, 255, 1);
  const DiverseInputResult r = diverse_input(img, labels, {0.0, 0.9}, rng);
  CHECK_FALSE(r.applied);
  CHECK(max_abs_diff(r.image, img) == 0.0);
  CHECK(r.labels.data == labels.data);
}

TEST_CASE("diverse input with scale one is resize-free padding at offset zero") {
  Rng rng(13);
  const Tensor3 img = random_tensor(5, 5, 3, rng);
  LabelMap labels(5, 5, 3, 255, 2);
  const DiverseInputResult r = diverse_input(img, labels, {1.0, 1.0}, rng);
  CHECK(r.applied);
  CHECK(r.resized_h == 5);
  CHECK(r.resized_w == 5);
  CHECK(r.offset_y == 0);
  CHECK(r.offset_x == 0);
  CHECK(max_abs_diff(r.image, img) == 0.0);
  CHECK(r.labels.data == labels.data);
}

TEST_CASE("diverse input keeps shapes and pads with zeros and ignores") {
  Rng rng(17);
  const Tensor3 img = random_tensor(16, 12, 3, rng, 0.25, 1.0);
  LabelMap labels(16, 12, 3, 255, 1);
  int applied_count = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const DiverseInputResult r = diverse_input(img, labels, {0.7, 0.6}, rng);
    CHECK(r.image.same_shape(img));
    CHECK(r.labels.height == labels.height);
    CHECK(r.labels.width == labels.width);
    if (!r.applied) continue;
    ++applied_count;
    CHECK(r.resized_h >= 9);  // ceil-ish of 16 * 0.6
    CHECK(r.resized_h <= 16);
    CHECK(r.offset_y + r.resized_h <= 16);
    CHECK(r.offset_x + r.resized_w <= 12);

    int ignored = 0;
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 12; ++x) {
        const bool inside = y >= r.offset_y && y < r.offset_y + r.resized_h &&
                            x >= r.offset_x && x < r.offset_x + r.resized_w;
        if (!inside) {
          CHECK(r.image.at(y, x, 0) == 0.0);
          CHECK(r.image.at(y, x, 1) == 0.0);
          CHECK(r.image.at(y, x, 2) == 0.0);
          CHECK(r.labels.at(y, x) == labels.ignore_index);
        }
        if (r.labels.at(y, x) == labels.ignore_index) ++ignored;
      }
    }
    CHECK(ignored == 16 * 12 - r.resized_h * r.resized_w);
  }
  CHECK(applied_count > 20);  // p = 0.7 over 50 trials
}

TEST_CASE("diverse input is reproducible from the seed") {
  Rng rng_a(99);
  Rng rng_b(99);
  const Tensor3 img = random_tensor(10, 10, 3, rng_a);
  Tensor3 img_b = img;
  LabelMap labels(10, 10, 3, 255, 0);
  for (int i = 0; i < 60; ++i) labels.data[i] = i % 3;

  Rng use_a(4242);
  Rng use_b(4242);
  for (int trial = 0; trial < 10; ++trial) {
    const DiverseInputResult a = diverse_input(img, labels, {0.5, 0.8}, use_a);
    const DiverseInputResult b = diverse_input(img_b, labels, {0.5, 0.8}, use_b);
    CHECK(a.applied == b.applied);
    CHECK(max_abs_diff(a.image, b.image) == 0.0);
    CHECK(a.labels.data == b.labels.data);
  }
}

TEST_CASE("diverse input gradient mapping is the adjoint of the applied transform") {
  Rng rng(21);
  const Tensor3 img = random_tensor(9, 11, 2, rng);
  LabelMap labels(9, 11, 3, 255, 1);

  Rng draw(7);
  DiverseInputResult r = diverse_input(img, labels, {1.0, 0.6}, draw);
  REQUIRE(r.applied);

  // the forward map x -> transformed image is linear in x, so verify
  // <T x, g> == <x, T^T g> against a replay on a fresh input
  const Tensor3 x = random_tensor(9, 11, 2, rng, -1.0, 1.0);
  Tensor3 tx(9, 11, 2);
  {
    const Tensor3 xr = bilinear_resize(x, r.resized_h, r.resized_w);
    for (int y = 0; y < r.resized_h; ++y) {
      for (int xx = 0; xx < r.resized_w; ++xx) {
        for (int c = 0; c < 2; ++c) {
          tx.at(r.offset_y + y, r.offset_x + xx, c) = xr.at(y, xx, c);
        }
      }
    }
  }
  const Tensor3 g = random_tensor(9, 11, 2, rng, -1.0, 1.0);
  const Tensor3 back = diverse_input_grad_to_input(g, r);
  CHECK(dot(tx, g) == doctest::Approx(dot(x, back)).epsilon(1e-10));
}

TEST_CASE("gradient mapping passes through when the transform did not fire") {
  Rng rng(23);
  const Tensor3 img = random_tensor(4, 4, 1, rng);
  LabelMap labels(4, 4, 2, 255, 0);
  Rng draw(1);
  const DiverseInputResult r = diverse_input(img, labels, {0.0, 0.9}, draw);
  REQUIRE_FALSE(r.applied);
  const Tensor3 g = random_tensor(4, 4, 1, rng, -1.0, 1.0);
  CHECK(max_abs_diff(diverse_input_grad_to_input(g, r), g) == 0.0);
}

TEST_CASE("convolving with the identity kernel changes nothing") {
  Rng rng(31);
  const Tensor3 g = random_tensor(6, 5, 3, rng, -2.0, 2.0);
  const GaussianKernel k = make_gaussian_kernel(1, 1.0);
  CHECK(max_abs_diff(convolve_gradient(g, k), g) == 0.0);
}

TEST_CASE("convolving an impulse reproduces the kernel") {
  Tensor3 g(7, 7, 1);
  g.at(3, 3, 0) = 1.0;
  const GaussianKernel k = make_gaussian_kernel(3, 0.8);
  const Tensor3 out = convolve_gradient(g, k);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      CHECK(out.at(3 + dy, 3 + dx, 0) == doctest::Approx(k.at(1 + dy, 1 + dx)).epsilon(1e-12));
    }
  }
  CHECK(out.at(0, 0, 0) == 0.0);
  CHECK(out.at(3, 5, 0) == 0.0);
}

TEST_CASE("convolution is linear and bounded by the input maximum") {
  Rng rng(37);
  const Tensor3 a = random_tensor(8, 8, 2, rng, -1.0, 1.0);
  const Tensor3 b = random_tensor(8, 8, 2, rng, -1.0, 1.0);
  const GaussianKernel k = make_gaussian_kernel(5, 1.5);

  Tensor3 combo(8, 8, 2);
  for (std::size_t i = 0; i < combo.data.size(); ++i) {
    combo.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
  }
  const Tensor3 ca = convolve_gradient(a, k);
  const Tensor3 cb = convolve_gradient(b, k);
  const Tensor3 cc = convolve_gradient(combo, k);
  for (std::size_t i = 0; i < cc.data.size(); ++i) {
    CHECK(cc.data[i] == doctest::Approx(2.0 * ca.data[i] - 0.5 * cb.data[i]).epsilon(1e-10));
  }

  // kernel sums to one, so the smoothed field cannot exceed the input range
  CHECK(linf_norm(ca) <= linf_norm(a) + 1e-12);
}

TEST_CASE("interior convolution of a constant field is exact, edges shrink") {
  Tensor3 g(5, 5, 1, 1.0);
  const GaussianKernel k = make_gaussian_kernel(3, 1.0);
  const Tensor3 out = convolve_gradient(g, k);
  CHECK(out.at(2, 2, 0) == doctest::Approx(1.0).epsilon(1e-12));
  // zero padding leaks in at the border
  CHECK(out.at(0, 0, 0) < 1.0);
}
