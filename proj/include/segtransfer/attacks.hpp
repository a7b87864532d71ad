#ifndef SEGTRANSFER_ATTACKS_HPP
#define SEGTRANSFER_ATTACKS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segtransfer/oracle.hpp"
#include "segtransfer/tensor.hpp"
#include "segtransfer/transforms.hpp"

namespace segtransfer {

struct AttackConfig {
  double epsilon = 0.03;              // L-inf budget, in [0, 1)
  std::optional<double> alpha;        // per-step size; unset means epsilon / 4
  int iterations = 10;
  double momentum = 1.0;              // decay factor for ni / ensemble
  bool random_init = true;            // uniform start in the epsilon ball
  double di_probability = 0.7;
  double di_scale_min = 0.9;
  int kernel_size = 7;                // translation-invariance kernel, odd
  std::optional<double> kernel_sigma;   // unset means kernel_size / 3
  double dag_gamma = 2.0 / 255.0;     // per-step L-inf magnitude for dag
  bool dag_project_final = true;      // project dag output into the epsilon ball
  std::optional<double> segpgd_lambda;  // fixed split weight; unset means t / (2T)

  double step_size() const { return alpha ? *alpha : epsilon / 4.0; }
  double sigma() const { return kernel_sigma ? *kernel_sigma : kernel_size / 3.0; }

  // Throws std::invalid_argument listing every violated constraint.
  void validate() const;
};

struct TraceEntry {
  double loss = 0.0;
  long long active_pixels = -1;  // dag only; -1 where not applicable
};

struct AdvResult {
  Tensor3 adv_image;
  Tensor3 perturbation;  // adv_image - clean input
  std::vector<TraceEntry> trace;
  int iterations_used = 0;
  std::string attack_name;
  AttackConfig config;
  bool dag_stalled = false;  // dag ended with pixels still correctly classified
  std::optional<Tensor3> unprojected_adv;  // dag pre-projection state, if projected
};

/// Elementwise clamp of x into [x_clean - epsilon, x_clean + epsilon] and [0, 1].
Tensor3 project(const Tensor3& x, const Tensor3& x_clean, double epsilon);

AdvResult attack_fgsm(const ModelOracle& oracle, const Tensor3& image,
                      const LabelMap& labels, const AttackConfig& config, Rng& rng);
AdvResult attack_pgd(const ModelOracle& oracle, const Tensor3& image,
                     const LabelMap& labels, const AttackConfig& config, Rng& rng);
AdvResult attack_segpgd(const ModelOracle& oracle, const Tensor3& image,
                        const LabelMap& labels, const AttackConfig& config, Rng& rng);
AdvResult attack_dag(const ModelOracle& oracle, const Tensor3& image,
                     const LabelMap& labels, const AttackConfig& config, Rng& rng);
AdvResult attack_ni(const ModelOracle& oracle, const Tensor3& image,
                    const LabelMap& labels, const AttackConfig& config, Rng& rng);
AdvResult attack_di(const ModelOracle& oracle, const Tensor3& image,
                    const LabelMap& labels, const AttackConfig& config, Rng& rng);
AdvResult attack_ti(const ModelOracle& oracle, const Tensor3& image,
                    const LabelMap& labels, const AttackConfig& config, Rng& rng);
AdvResult attack_ensemble(const ModelOracle& oracle, const Tensor3& image,
                          const LabelMap& labels, const AttackConfig& config, Rng& rng);

using AttackFn = AdvResult (*)(const ModelOracle&, const Tensor3&, const LabelMap&,
                               const AttackConfig&, Rng&);

/// Name -> function, ordered by name. Names: dag, di, ensemble, fgsm, ni,
/// pgd, segpgd, ti.
const std::map<std::string, AttackFn>& attack_registry();

std::vector<std::string> attack_names();

/// Looks up `name` in the registry; throws std::invalid_argument if unknown.
AdvResult run_attack(const std::string& name, const ModelOracle& oracle,
                     const Tensor3& image, const LabelMap& labels,
                     const AttackConfig& config, Rng& rng);

}  // namespace segtransfer

#endif  // SEGTRANSFER_ATTACKS_HPP
