#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "segtransfer/attacks.hpp"
#include "segtransfer/oracle.hpp"
#include "segtransfer/transforms.hpp"

using namespace segtransfer;

namespace {

struct ToyInstance {
  ToyLinearSegmenter model;
  Tensor3 image;
  LabelMap labels;
};

// Random per-pixel linear classifier plus an image labeled by the model
// itself, so every attack starts from mostly-correct predictions.
ToyInstance make_toy(std::uint64_t seed, int h = 5, int w = 6) {
  Rng rng(seed);
  std::vector<double> weights(9);
  std::vector<double> biases(3);
  for (double& v : weights) v = rng.uniform(-2.0, 2.0);
  for (double& v : biases) v = rng.uniform(-0.5, 0.5);
  ToyLinearSegmenter model("toy", 3, 3, std::move(weights), std::move(biases));
  Tensor3 image(h, w, 3);
  for (double& v : image.data) v = rng.uniform(0.1, 0.9);
  LabelMap labels = predict(model, image);
  labels.at(0, 0) = labels.ignore_index;
  return ToyInstance{std::move(model), std::move(image), std::move(labels)};
}

bool identical(const Tensor3& a, const Tensor3& b) { return a.data == b.data; }

}  // namespace

TEST_CASE("project clamps into the intersection of the ball and the range") {
  Rng rng(1);
  Tensor3 clean(4, 4, 2);
  Tensor3 x(4, 4, 2);
  for (double& v : clean.data) v = rng.uniform01();
  for (double& v : x.data) v = rng.uniform(-0.5, 1.5);
  const double eps = 0.1;
  const Tensor3 out = project(x, clean, eps);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double lo = std::max(0.0, clean.data[i] - eps);
    const double hi = std::min(1.0, clean.data[i] + eps);
    CHECK(out.data[i] == std::clamp(x.data[i], lo, hi));
  }
  // projecting a feasible point changes nothing
  CHECK(identical(project(out, clean, eps), out));
  CHECK_THROWS_AS(project(x, Tensor3(3, 4, 2), eps), std::invalid_argument);
  CHECK_THROWS_AS(project(x, clean, -0.1), std::invalid_argument);
}

TEST_CASE("single-step attack equals the iterative one at full step size") {
  for (std::uint64_t seed : {10ULL, 11ULL, 12ULL}) {
    ToyInstance t = make_toy(seed);
    AttackConfig base;
    base.epsilon = 0.06;

    Rng r1(seed);
    const AdvResult fgsm = attack_fgsm(t.model, t.image, t.labels, base, r1);

    AttackConfig one = base;
    one.iterations = 1;
    one.alpha = base.epsilon;
    one.random_init = false;
    Rng r2(seed);
    const AdvResult pgd = attack_pgd(t.model, t.image, t.labels, one, r2);

    CHECK(identical(fgsm.adv_image, pgd.adv_image));
  }
}

TEST_CASE("momentum zero collapses the accelerated attack to the plain one") {
  for (std::uint64_t seed : {20ULL, 21ULL, 22ULL}) {
    ToyInstance t = make_toy(seed);
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    cfg.iterations = 6;

    Rng r1(seed);
    const AdvResult pgd = attack_pgd(t.model, t.image, t.labels, cfg, r1);

    AttackConfig nocfg = cfg;
    nocfg.momentum = 0.0;
    Rng r2(seed);
    const AdvResult ni = attack_ni(t.model, t.image, t.labels, nocfg, r2);

    CHECK(identical(pgd.adv_image, ni.adv_image));
  }
}

TEST_CASE("zero transform probability collapses the diverse attack to the plain one") {
  for (std::uint64_t seed : {30ULL, 31ULL}) {
    ToyInstance t = make_toy(seed);
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    cfg.iterations = 5;

    Rng r1(seed);
    const AdvResult pgd = attack_pgd(t.model, t.image, t.labels, cfg, r1);

    AttackConfig dicfg = cfg;
    dicfg.di_probability = 0.0;
    Rng r2(seed);
    const AdvResult di = attack_di(t.model, t.image, t.labels, dicfg, r2);

    CHECK(identical(pgd.adv_image, di.adv_image));
  }
}

TEST_CASE("a one-tap smoothing kernel collapses the smoothed attack to the plain one") {
  for (std::uint64_t seed : {40ULL, 41ULL}) {
    ToyInstance t = make_toy(seed);
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    cfg.iterations = 5;

    Rng r1(seed);
    const AdvResult pgd = attack_pgd(t.model, t.image, t.labels, cfg, r1);

    AttackConfig ticfg = cfg;
    ticfg.kernel_size = 1;
    Rng r2(seed);
    const AdvResult ti = attack_ti(t.model, t.image, t.labels, ticfg, r2);

    CHECK(identical(pgd.adv_image, ti.adv_image));
  }
}

TEST_CASE("a fixed half-half split weight collapses the weighted attack to the plain one") {
  for (std::uint64_t seed : {50ULL, 51ULL}) {
    ToyInstance t = make_toy(seed);
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    cfg.iterations = 5;

    Rng r1(seed);
    const AdvResult pgd = attack_pgd(t.model, t.image, t.labels, cfg, r1);

    AttackConfig segcfg = cfg;
    segcfg.segpgd_lambda = 0.5;
    Rng r2(seed);
    const AdvResult seg = attack_segpgd(t.model, t.image, t.labels, segcfg, r2);

    CHECK(max_abs_diff(pgd.adv_image, seg.adv_image) <= 1e-12);
  }
}

TEST_CASE("the combined attack collapses to its pieces when each piece is disabled") {
  ToyInstance t = make_toy(60);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.iterations = 5;

  SUBCASE("everything off reduces to the plain iterative attack") {
    AttackConfig off = cfg;
    off.momentum = 0.0;
    off.di_probability = 0.0;
    off.kernel_size = 1;
    Rng r1(61);
    const AdvResult ens = attack_ensemble(t.model, t.image, t.labels, off, r1);
    Rng r2(61);
    const AdvResult pgd = attack_pgd(t.model, t.image, t.labels, cfg, r2);
    CHECK(identical(ens.adv_image, pgd.adv_image));
  }

  SUBCASE("identity transform and one-tap kernel reduce to the momentum attack") {
    AttackConfig ident = cfg;
    ident.di_probability = 1.0;  // always fires
    ident.di_scale_min = 1.0;    // but at scale one, which is the identity
    ident.kernel_size = 1;
    Rng r1(62);
    const AdvResult ens = attack_ensemble(t.model, t.image, t.labels, ident, r1);
    Rng r2(62);
    const AdvResult ni = attack_ni(t.model, t.image, t.labels, cfg, r2);
    CHECK(identical(ens.adv_image, ni.adv_image));
  }
}

TEST_CASE("every attack respects the budget, the range, and its seed") {
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.iterations = 5;
  for (const std::string& name : attack_names()) {
    CAPTURE(name);
    for (std::uint64_t seed : {70ULL, 71ULL, 72ULL}) {
      ToyInstance t = make_toy(seed);
      Rng r1(seed);
      const AdvResult a = run_attack(name, t.model, t.image, t.labels, cfg, r1);
      CHECK(linf_norm(a.perturbation) <= cfg.epsilon + 1e-6);
      for (double v : a.adv_image.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(a.adv_image.same_shape(t.image));
      CHECK(a.attack_name == name);
      for (std::size_t i = 0; i < a.perturbation.data.size(); ++i) {
        CHECK(a.perturbation.data[i] == a.adv_image.data[i] - t.image.data[i]);
      }
      Rng r2(seed);
      const AdvResult b = run_attack(name, t.model, t.image, t.labels, cfg, r2);
      CHECK(identical(a.adv_image, b.adv_image));
    }
  }
}

TEST_CASE("a zero budget returns the clean image bit for bit") {
  ToyInstance t = make_toy(80);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  cfg.iterations = 3;
  for (const std::string& name : attack_names()) {
    CAPTURE(name);
    Rng rng(80);
    const AdvResult a = run_attack(name, t.model, t.image, t.labels, cfg, rng);
    if (name == "dag") continue;  // dag's budget is dag_gamma; projection handles epsilon
    CHECK(identical(a.adv_image, t.image));
    CHECK(linf_norm(a.perturbation) == 0.0);
  }
  // dag with the final projection enabled lands on the clean image too
  Rng rng(80);
  const AdvResult dag = run_attack("dag", t.model, t.image, t.labels, cfg, rng);
  CHECK(identical(dag.adv_image, t.image));
}

TEST_CASE("trace length follows the iteration count") {
  ToyInstance t = make_toy(90);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.iterations = 7;
  Rng r1(90);
  CHECK(attack_fgsm(t.model, t.image, t.labels, cfg, r1).trace.size() == 1);
  Rng r2(90);
  const AdvResult pgd = attack_pgd(t.model, t.image, t.labels, cfg, r2);
  CHECK(pgd.trace.size() == 7);
  CHECK(pgd.iterations_used == 7);
  for (const TraceEntry& e : pgd.trace) CHECK(e.active_pixels == -1);
  Rng r3(90);
  const AdvResult ni = attack_ni(t.model, t.image, t.labels, cfg, r3);
  CHECK(ni.trace.size() == 7);
}

TEST_CASE("iterative attack matches a from-scratch reimplementation") {
  ToyInstance t = make_toy(100);
  AttackConfig cfg;
  cfg.epsilon = 0.04;
  cfg.alpha = 0.01;
  cfg.iterations = 6;

  Rng lib(123);
  const AdvResult got = attack_pgd(t.model, t.image, t.labels, cfg, lib);

  // independent loop built only from the oracle and projection primitives
  Rng mine(123);
  Tensor3 x = t.image;
  for (double& v : x.data) v = std::clamp(v + mine.uniform(-cfg.epsilon, cfg.epsilon), 0.0, 1.0);
  for (int it = 0; it < cfg.iterations; ++it) {
    const Tensor3 g = loss_and_input_grad(t.model, x, t.labels).grad;
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += 0.01 * sign_of(g.data[i]);
    x = project(x, t.image, cfg.epsilon);
  }
  CHECK(identical(got.adv_image, x));
}

TEST_CASE("momentum attack matches a from-scratch reimplementation") {
  ToyInstance t = make_toy(110);
  AttackConfig cfg;
  cfg.epsilon = 0.04;
  cfg.iterations = 5;
  cfg.momentum = 0.9;

  Rng lib(321);
  const AdvResult got = attack_ni(t.model, t.image, t.labels, cfg, lib);

  const double step = cfg.epsilon / 4.0;
  Rng mine(321);
  Tensor3 x = t.image;
  for (double& v : x.data) v = std::clamp(v + mine.uniform(-cfg.epsilon, cfg.epsilon), 0.0, 1.0);
  Tensor3 g(x.height, x.width, x.channels);
  for (int it = 0; it < cfg.iterations; ++it) {
    Tensor3 look = x;
    for (std::size_t i = 0; i < look.data.size(); ++i) {
      look.data[i] = std::clamp(look.data[i] + step * cfg.momentum * g.data[i], 0.0, 1.0);
    }
    const Tensor3 grad = loss_and_input_grad(t.model, look, t.labels).grad;
    const double l1 = l1_norm(grad);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      g.data[i] = cfg.momentum * g.data[i] + (l1 > 0.0 ? grad.data[i] / l1 : 0.0);
    }
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += step * sign_of(g.data[i]);
    x = project(x, t.image, cfg.epsilon);
  }
  CHECK(identical(got.adv_image, x));
}

TEST_CASE("weighted attack puts zero weight on wrong pixels at the first step") {
  // labels chosen so every pixel starts misclassified: with the schedule's
  // first-step split weight of zero the gradient vanishes and nothing moves
  ToyInstance t = make_toy(120);
  LabelMap wrong = predict(t.model, t.image);
  for (int& v : wrong.data) v = (v + 1) % 3;

  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.iterations = 1;
  cfg.random_init = false;
  Rng rng(120);
  const AdvResult a = attack_segpgd(t.model, t.image, wrong, cfg, rng);
  CHECK(identical(a.adv_image, t.image));

  // while an all-correct start at the same step weights every pixel fully
  Rng r2(120);
  const AdvResult b = attack_segpgd(t.model, t.image, t.labels, cfg, r2);
  Rng r3(120);
  AttackConfig plain = cfg;
  const AdvResult c = attack_pgd(t.model, t.image, t.labels, plain, r3);
  CHECK(identical(b.adv_image, c.adv_image));
}

TEST_CASE("weighted attack matches a from-scratch schedule reimplementation") {
  ToyInstance t = make_toy(130);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.iterations = 4;

  Rng lib(7);
  const AdvResult got = attack_segpgd(t.model, t.image, t.labels, cfg, lib);

  Rng mine(7);
  Tensor3 x = t.image;
  for (double& v : x.data) v = std::clamp(v + mine.uniform(-cfg.epsilon, cfg.epsilon), 0.0, 1.0);
  const double step = cfg.epsilon / 4.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double lambda = static_cast<double>(it) / (2.0 * cfg.iterations);
    const LabelMap pred = predict(t.model, x);
    std::vector<double> w(t.labels.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (t.labels.data[i] == t.labels.ignore_index) continue;
      w[i] = pred.data[i] == t.labels.data[i] ? 1.0 - lambda : lambda;
    }
    const Tensor3 g = loss_and_input_grad(t.model, x, t.labels, w).grad;
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += step * sign_of(g.data[i]);
    x = project(x, t.image, cfg.epsilon);
  }
  CHECK(identical(got.adv_image, x));
}

TEST_CASE("smoothed attack matches convolving the gradient by hand") {
  ToyInstance t = make_toy(140);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.iterations = 4;
  cfg.kernel_size = 3;

  Rng lib(9);
  const AdvResult got = attack_ti(t.model, t.image, t.labels, cfg, lib);

  const GaussianKernel k = make_gaussian_kernel(3, 1.0);  // sigma defaults to size / 3
  Rng mine(9);
  Tensor3 x = t.image;
  for (double& v : x.data) v = std::clamp(v + mine.uniform(-cfg.epsilon, cfg.epsilon), 0.0, 1.0);
  const double step = cfg.epsilon / 4.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const Tensor3 g = convolve_gradient(loss_and_input_grad(t.model, x, t.labels).grad, k);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += step * sign_of(g.data[i]);
    x = project(x, t.image, cfg.epsilon);
  }
  CHECK(identical(got.adv_image, x));
}

TEST_CASE("active-set attack flips every pixel on a separable instance") {
  // one clearly dominant channel per class: each pixel is independent, so
  // the active set must drain completely
  ToyLinearSegmenter model("sep", 3, 3, {4, 0, 0, 0, 4, 0, 0, 0, 4}, {0, 0, 0});
  Tensor3 image(4, 4, 3, 0.2);
  LabelMap labels(4, 4, 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const int cls = (y + x) % 3;
      image.at(y, x, cls) = 0.8;
      labels.at(y, x) = cls;
    }
  }
  REQUIRE(predict(model, image).data == labels.data);

  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.iterations = 200;
  cfg.dag_gamma = 0.02;
  cfg.dag_project_final = false;
  Rng rng(1);
  const AdvResult a = attack_dag(model, image, labels, cfg, rng);

  CHECK_FALSE(a.dag_stalled);
  CHECK(a.iterations_used < 200);
  CHECK_FALSE(a.unprojected_adv.has_value());
  const LabelMap adv_pred = predict(model, a.adv_image);
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    CHECK(adv_pred.data[i] != labels.data[i]);
  }
  // the drained set leaves the final trace entry with a small active count
  REQUIRE_FALSE(a.trace.empty());
  CHECK(a.trace.front().active_pixels == 16);
  CHECK(a.trace.back().active_pixels >= 1);
}

TEST_CASE("active-set attack steps have the configured magnitude") {
  ToyInstance t = make_toy(150);
  AttackConfig cfg;
  cfg.epsilon = 0.5;  // wide ball so the single step is visible unprojected
  cfg.iterations = 1;
  cfg.dag_gamma = 0.02;
  cfg.dag_project_final = false;
  Rng rng(150);
  const AdvResult a = attack_dag(t.model, t.image, t.labels, cfg, rng);
  REQUIRE(a.iterations_used == 1);
  // interior pixels, so no range clipping: the step peak is exactly gamma
  CHECK(linf_norm(a.perturbation) == doctest::Approx(cfg.dag_gamma).epsilon(1e-12));
}

TEST_CASE("active-set attack stalls honestly when the gradient vanishes") {
  // constant logits: every pixel ties to class 0 and the selection gradient
  // is identically zero, so the attack must report the stall
  ToyLinearSegmenter flat("flat", 2, 3, {0, 0, 0, 0, 0, 0}, {0, 0, 0});
  Tensor3 image(3, 3, 2, 0.5);
  LabelMap labels(3, 3, 3, 255, 0);
  AttackConfig cfg;
  cfg.iterations = 10;
  Rng rng(1);
  const AdvResult a = attack_dag(flat, image, labels, cfg, rng);
  CHECK(a.dag_stalled);
  CHECK(a.iterations_used == 0);
  CHECK(max_abs_diff(a.adv_image, image) == 0.0);
}

TEST_CASE("active-set attack ignores the seed") {
  ToyInstance t = make_toy(160);
  AttackConfig cfg;
  cfg.iterations = 20;
  Rng r1(1);
  Rng r2(999);
  const AdvResult a = attack_dag(t.model, t.image, t.labels, cfg, r1);
  const AdvResult b = attack_dag(t.model, t.image, t.labels, cfg, r2);
  CHECK(identical(a.adv_image, b.adv_image));
}

TEST_CASE("final projection keeps the raw iterate on the side") {
  ToyInstance t = make_toy(170);
  AttackConfig cfg;
  cfg.epsilon = 0.01;
  cfg.iterations = 50;
  cfg.dag_gamma = 0.02;  // bigger than epsilon, so projection must bite
  Rng rng(170);
  const AdvResult a = attack_dag(t.model, t.image, t.labels, cfg, rng);
  REQUIRE(a.unprojected_adv.has_value());
  CHECK(linf_norm(a.perturbation) <= cfg.epsilon + 1e-12);
  CHECK(identical(a.adv_image, project(*a.unprojected_adv, t.image, cfg.epsilon)));
}

TEST_CASE("config validation names every violated constraint at once") {
  AttackConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  cfg.epsilon = 1.0;
  cfg.iterations = 0;
  cfg.kernel_size = 4;
  try {
    cfg.validate();
    FAIL("expected a validation error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epsilon") != std::string::npos);
    CHECK(msg.find("iterations") != std::string::npos);
    CHECK(msg.find("kernel_size") != std::string::npos);
  }

  AttackConfig bad;
  bad.di_probability = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AttackConfig{};
  bad.di_scale_min = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AttackConfig{};
  bad.momentum = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AttackConfig{};
  bad.dag_gamma = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AttackConfig{};
  bad.segpgd_lambda = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AttackConfig{};
  bad.alpha = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AttackConfig{};
  bad.kernel_sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("default step sizes derive from the budget and the kernel") {
  AttackConfig cfg;
  cfg.epsilon = 0.2;
  CHECK(cfg.step_size() == doctest::Approx(0.05));
  cfg.alpha = 0.01;
  CHECK(cfg.step_size() == 0.01);
  cfg.kernel_size = 9;
  CHECK(cfg.sigma() == doctest::Approx(3.0));
  cfg.kernel_sigma = 1.5;
  CHECK(cfg.sigma() == 1.5);
}

TEST_CASE("the registry lists all eight attacks by name") {
  const std::vector<std::string> names = attack_names();
  const std::vector<std::string> want = {"dag",  "di",  "ensemble", "fgsm",
                                         "ni",   "pgd", "segpgd",   "ti"};
  CHECK(names == want);

  ToyInstance t = make_toy(180);
  AttackConfig cfg;
  Rng rng(1);
  CHECK_THROWS_AS(run_attack("nope", t.model, t.image, t.labels, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("attacks reject mismatched inputs") {
  ToyInstance t = make_toy(190);
  AttackConfig cfg;
  Rng rng(1);

  Tensor3 bad_channels(5, 6, 1, 0.5);
  CHECK_THROWS_AS(attack_pgd(t.model, bad_channels, t.labels, cfg, rng),
                  std::invalid_argument);

  LabelMap bad_classes(5, 6, 7, 255, 0);
  CHECK_THROWS_AS(attack_pgd(t.model, t.image, bad_classes, cfg, rng),
                  std::invalid_argument);

  Tensor3 out_of_range = t.image;
  out_of_range.at(0, 0, 0) = 1.5;
  CHECK_THROWS_AS(attack_pgd(t.model, out_of_range, t.labels, cfg, rng),
                  std::invalid_argument);
}
