#include "segtransfer/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace segtransfer {

namespace {

std::string join_errors(const std::vector<std::string>& errs) {
  std::string out;
  for (const auto& e : errs) {
    if (!out.empty()) out += "; ";
    out += e;
  }
  return out;
}

Tensor3 clip01(Tensor3 x) {
  for (double& v : x.data) v = std::clamp(v, 0.0, 1.0);
  return x;
}

// Uniform start in the epsilon ball, clamped back into the image range.
Tensor3 random_start(const Tensor3& image, double epsilon, Rng& rng) {
  Tensor3 out = image;
  for (double& v : out.data) {
    v = std::clamp(v + rng.uniform(-epsilon, epsilon), 0.0, 1.0);
  }
  return out;
}

struct StepGrad {
  Tensor3 grad;  // w.r.t. the current iterate, already mapped through transforms
  double loss = 0.0;
};

void check_inputs(const ModelOracle& oracle, const Tensor3& image, const LabelMap& labels,
                  const AttackConfig& config) {
  config.validate();
  validate_image(image);
  validate_labels(labels, image.height, image.width);
  if (labels.num_classes != oracle.num_classes()) {
    throw std::invalid_argument("attack: label class count does not match the model");
  }
  if (image.channels != oracle.input_channels()) {
    throw std::invalid_argument("attack: image channel count does not match the model");
  }
}

// Iterated signed-gradient loop shared by the non-momentum attacks. `grad_fn`
// receives the current iterate and the zero-based iteration index.
template <typename GradFn>
AdvResult run_signed(const char* name, const ModelOracle& oracle, const Tensor3& image,
                     const LabelMap& labels, const AttackConfig& config, Rng& rng,
                     int iterations, double step, bool use_random_init, GradFn grad_fn) {
  check_inputs(oracle, image, labels, config);
  AdvResult res;
  res.attack_name = name;
  res.config = config;
  Tensor3 x = use_random_init ? random_start(image, config.epsilon, rng) : image;
  for (int t = 0; t < iterations; ++t) {
    StepGrad sg = grad_fn(x, t);
    res.trace.push_back(TraceEntry{sg.loss, -1});
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      x.data[i] += step * sign_of(sg.grad.data[i]);
    }
    x = project(x, image, config.epsilon);
  }
  res.iterations_used = iterations;
  res.perturbation = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    res.perturbation.data[i] -= image.data[i];
  }
  res.adv_image = std::move(x);
  return res;
}

// Nesterov-accelerated momentum loop shared by ni and ensemble. `grad_fn`
// receives the lookahead point (already clamped to [0, 1]).
template <typename GradFn>
AdvResult run_momentum(const char* name, const ModelOracle& oracle, const Tensor3& image,
                       const LabelMap& labels, const AttackConfig& config, Rng& rng,
                       GradFn grad_fn) {
  check_inputs(oracle, image, labels, config);
  AdvResult res;
  res.attack_name = name;
  res.config = config;
  const double step = config.step_size();
  const double mu = config.momentum;
  Tensor3 x = config.random_init ? random_start(image, config.epsilon, rng) : image;
  Tensor3 g(image.height, image.width, image.channels);
  for (int t = 0; t < config.iterations; ++t) {
    Tensor3 lookahead = x;
    for (std::size_t i = 0; i < lookahead.data.size(); ++i) {
      lookahead.data[i] += step * mu * g.data[i];
    }
    lookahead = clip01(std::move(lookahead));
    StepGrad sg = grad_fn(lookahead, t);
    res.trace.push_back(TraceEntry{sg.loss, -1});
    const double l1 = l1_norm(sg.grad);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      g.data[i] = mu * g.data[i] + (l1 > 0.0 ? sg.grad.data[i] / l1 : 0.0);
    }
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      x.data[i] += step * sign_of(g.data[i]);
    }
    x = project(x, image, config.epsilon);
  }
  res.iterations_used = config.iterations;
  res.perturbation = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    res.perturbation.data[i] -= image.data[i];
  }
  res.adv_image = std::move(x);
  return res;
}

bool has_valid_pixel(const LabelMap& labels) {
  for (int v : labels.data) {
    if (v != labels.ignore_index) return true;
  }
  return false;
}

// Gradient through the random resize-and-pad transform. Returns a zero
// gradient when the transform sampled no labeled pixels.
StepGrad diverse_grad(const ModelOracle& oracle, const Tensor3& x, const LabelMap& labels,
                      const AttackConfig& config, Rng& rng) {
  DiverseInputParams params{config.di_probability, config.di_scale_min};
  DiverseInputResult tr = diverse_input(x, labels, params, rng);
  if (!has_valid_pixel(tr.labels)) {
    return StepGrad{Tensor3(x.height, x.width, x.channels), 0.0};
  }
  LossGrad lg = loss_and_input_grad(oracle, tr.image, tr.labels);
  return StepGrad{diverse_input_grad_to_input(lg.grad, tr), lg.loss};
}

}  // namespace

void AttackConfig::validate() const {
  std::vector<std::string> errs;
  if (!(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon < 1.0)) {
    errs.push_back("epsilon must lie in [0, 1)");
  }
  if (alpha && !(std::isfinite(*alpha) && *alpha >= 0.0)) {
    errs.push_back("alpha must be finite and non-negative");
  }
  if (iterations < 1) {
    errs.push_back("iterations must be at least 1");
  }
  if (!(std::isfinite(momentum) && momentum >= 0.0)) {
    errs.push_back("momentum must be finite and non-negative");
  }
  if (!(di_probability >= 0.0 && di_probability <= 1.0)) {
    errs.push_back("di_probability must lie in [0, 1]");
  }
  if (!(di_scale_min > 0.0 && di_scale_min <= 1.0)) {
    errs.push_back("di_scale_min must lie in (0, 1]");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    errs.push_back("kernel_size must be odd and positive");
  }
  if (kernel_sigma && !(std::isfinite(*kernel_sigma) && *kernel_sigma > 0.0)) {
    errs.push_back("kernel_sigma must be finite and positive");
  }
  if (!(std::isfinite(dag_gamma) && dag_gamma > 0.0)) {
    errs.push_back("dag_gamma must be finite and positive");
  }
  if (segpgd_lambda && !(*segpgd_lambda >= 0.0 && *segpgd_lambda <= 1.0)) {
    errs.push_back("segpgd_lambda must lie in [0, 1]");
  }
  if (!errs.empty()) {
    throw std::invalid_argument("invalid attack config: " + join_errors(errs));
  }
}

Tensor3 project(const Tensor3& x, const Tensor3& x_clean, double epsilon) {
  if (!x.same_shape(x_clean)) {
    throw std::invalid_argument("project: shape mismatch");
  }
  if (!(std::isfinite(epsilon) && epsilon >= 0.0)) {
    throw std::invalid_argument("project: epsilon must be finite and non-negative");
  }
  Tensor3 out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double lo = std::max(0.0, x_clean.data[i] - epsilon);
    const double hi = std::min(1.0, x_clean.data[i] + epsilon);
    out.data[i] = std::clamp(out.data[i], lo, hi);
  }
  return out;
}

AdvResult attack_fgsm(const ModelOracle& oracle, const Tensor3& image,
                      const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  return run_signed("fgsm", oracle, image, labels, config, rng,
                    /*iterations=*/1, /*step=*/config.epsilon, /*use_random_init=*/false,
                    [&](const Tensor3& x, int) {
                      LossGrad lg = loss_and_input_grad(oracle, x, labels);
                      return StepGrad{std::move(lg.grad), lg.loss};
                    });
}

AdvResult attack_pgd(const ModelOracle& oracle, const Tensor3& image,
                     const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  return run_signed("pgd", oracle, image, labels, config, rng, config.iterations,
                    config.step_size(), config.random_init,
                    [&](const Tensor3& x, int) {
                      LossGrad lg = loss_and_input_grad(oracle, x, labels);
                      return StepGrad{std::move(lg.grad), lg.loss};
                    });
}

AdvResult attack_segpgd(const ModelOracle& oracle, const Tensor3& image,
                        const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  const int total = config.iterations;
  return run_signed(
      "segpgd", oracle, image, labels, config, rng, total, config.step_size(),
      config.random_init, [&](const Tensor3& x, int t) {
        // Correctly classified pixels get weight 1 - lambda, the rest lambda.
        const double lambda =
            config.segpgd_lambda ? *config.segpgd_lambda
                                 : static_cast<double>(t) / (2.0 * total);
        LabelMap pred = predict(oracle, x);
        std::vector<double> weights(static_cast<std::size_t>(x.height) * x.width, 0.0);
        for (int i = 0; i < x.height; ++i) {
          for (int j = 0; j < x.width; ++j) {
            const int truth = labels.at(i, j);
            if (truth == labels.ignore_index) continue;
            weights[static_cast<std::size_t>(i) * x.width + j] =
                pred.at(i, j) == truth ? 1.0 - lambda : lambda;
          }
        }
        LossGrad lg = loss_and_input_grad(oracle, x, labels, weights);
        return StepGrad{std::move(lg.grad), lg.loss};
      });
}

AdvResult attack_ni(const ModelOracle& oracle, const Tensor3& image,
                    const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  return run_momentum("ni", oracle, image, labels, config, rng,
                      [&](const Tensor3& x_nes, int) {
                        LossGrad lg = loss_and_input_grad(oracle, x_nes, labels);
                        return StepGrad{std::move(lg.grad), lg.loss};
                      });
}

AdvResult attack_di(const ModelOracle& oracle, const Tensor3& image,
                    const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  return run_signed("di", oracle, image, labels, config, rng, config.iterations,
                    config.step_size(), config.random_init,
                    [&](const Tensor3& x, int) {
                      return diverse_grad(oracle, x, labels, config, rng);
                    });
}

AdvResult attack_ti(const ModelOracle& oracle, const Tensor3& image,
                    const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  const GaussianKernel kernel = make_gaussian_kernel(config.kernel_size, config.sigma());
  return run_signed("ti", oracle, image, labels, config, rng, config.iterations,
                    config.step_size(), config.random_init,
                    [&](const Tensor3& x, int) {
                      LossGrad lg = loss_and_input_grad(oracle, x, labels);
                      return StepGrad{convolve_gradient(lg.grad, kernel), lg.loss};
                    });
}

AdvResult attack_ensemble(const ModelOracle& oracle, const Tensor3& image,
                          const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  const GaussianKernel kernel = make_gaussian_kernel(config.kernel_size, config.sigma());
  return run_momentum("ensemble", oracle, image, labels, config, rng,
                      [&](const Tensor3& x_nes, int) {
                        StepGrad sg = diverse_grad(oracle, x_nes, labels, config, rng);
                        sg.grad = convolve_gradient(sg.grad, kernel);
                        return sg;
                      });
}

AdvResult attack_dag(const ModelOracle& oracle, const Tensor3& image,
                     const LabelMap& labels, const AttackConfig& config, Rng& rng) {
  (void)rng;  // deterministic given inputs; rng kept for signature uniformity
  check_inputs(oracle, image, labels, config);
  if (oracle.num_classes() < 2) {
    throw std::invalid_argument("dag: needs at least two classes");
  }
  AdvResult res;
  res.attack_name = "dag";
  res.config = config;

  // Fixed adversarial target per pixel, guaranteed to differ from the truth.
  LabelMap adv_target = labels;
  for (std::size_t i = 0; i < adv_target.data.size(); ++i) {
    if (adv_target.data[i] != labels.ignore_index) {
      adv_target.data[i] = (adv_target.data[i] + 1) % labels.num_classes;
    }
  }

  Tensor3 x = image;
  const int num_classes = oracle.num_classes();
  int steps = 0;
  bool success = false;
  while (true) {
    const Logits logits = oracle.logits(x);
    // One pass over the logits yields the active set and the mean loss.
    std::vector<LogitSelection> selection;
    long long active = 0;
    long long valid = 0;
    double loss_sum = 0.0;
    for (int i = 0; i < x.height; ++i) {
      for (int j = 0; j < x.width; ++j) {
        const int truth = labels.at(i, j);
        if (truth == labels.ignore_index) continue;
        ++valid;
        int best = 0;
        double best_v = logits.at(i, j, 0);
        double max_v = best_v;
        for (int c = 1; c < num_classes; ++c) {
          const double v = logits.at(i, j, c);
          if (v > best_v) {
            best_v = v;
            best = c;
          }
          max_v = std::max(max_v, v);
        }
        double z = 0.0;
        for (int c = 0; c < num_classes; ++c) z += std::exp(logits.at(i, j, c) - max_v);
        loss_sum += std::log(z) - (logits.at(i, j, truth) - max_v);
        if (best == truth) {
          ++active;
          selection.push_back(LogitSelection{i, j, adv_target.at(i, j), 1.0});
          selection.push_back(LogitSelection{i, j, truth, -1.0});
        }
      }
    }
    if (valid == 0) {
      throw std::domain_error("dag: no labeled pixels");
    }
    if (active == 0) {
      success = true;
      break;
    }
    if (steps >= config.iterations) break;

    Tensor3 r = logit_selection_grad(oracle, x, selection);
    const double peak = linf_norm(r);
    if (peak == 0.0) break;  // gradient vanished with pixels still correct
    const double scale = config.dag_gamma / peak;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      x.data[i] = std::clamp(x.data[i] + scale * r.data[i], 0.0, 1.0);
    }
    ++steps;
    res.trace.push_back(TraceEntry{loss_sum / static_cast<double>(valid), active});
  }

  res.iterations_used = steps;
  res.dag_stalled = !success;
  if (config.dag_project_final) {
    res.unprojected_adv = x;
    res.adv_image = project(x, image, config.epsilon);
  } else {
    res.adv_image = std::move(x);
  }
  res.perturbation = res.adv_image;
  for (std::size_t i = 0; i < res.perturbation.data.size(); ++i) {
    res.perturbation.data[i] -= image.data[i];
  }
  return res;
}

const std::map<std::string, AttackFn>& attack_registry() {
  static const std::map<std::string, AttackFn> reg = {
      {"dag", &attack_dag},       {"di", &attack_di}, {"ensemble", &attack_ensemble},
      {"fgsm", &attack_fgsm},     {"ni", &attack_ni}, {"pgd", &attack_pgd},
      {"segpgd", &attack_segpgd}, {"ti", &attack_ti},
  };
  return reg;
}

std::vector<std::string> attack_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : attack_registry()) names.push_back(name);
  return names;
}

AdvResult run_attack(const std::string& name, const ModelOracle& oracle,
                     const Tensor3& image, const LabelMap& labels,
                     const AttackConfig& config, Rng& rng) {
  const auto& reg = attack_registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    throw std::invalid_argument("unknown attack: " + name);
  }
  return it->second(oracle, image, labels, config, rng);
}

}  // namespace segtransfer
