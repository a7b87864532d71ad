#ifndef SEGTRANSFER_HARNESS_HPP
#define SEGTRANSFER_HARNESS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "segtransfer/attacks.hpp"
#include "segtransfer/oracle.hpp"
#include "segtransfer/tensor.hpp"

namespace segtransfer {

struct Sample {
  std::string id;  // file stem
  Tensor3 image;
  LabelMap labels;
};

struct DatasetSpec {
  std::string images_dir;
  std::string labels_dir;
  int num_classes = 0;
  int ignore_index = 255;
  int limit = 0;  // 0 keeps everything, otherwise the first `limit` ids
};

/// Pairs images_dir/*.ppm|*.pgm with labels_dir/<stem>.pgm, sorted by stem.
/// Throws std::runtime_error for an unreadable directory or a missing label
/// file, and when no pair is found at all.
std::vector<Sample> load_dataset(const DatasetSpec& spec);

struct ModelSpec {
  std::string id;
  std::string path;  // JSON model document; its "kind" selects the adapter
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<ModelSpec> models;
  std::vector<std::string> sources;  // model ids used to craft perturbations
  std::vector<std::string> targets;  // model ids evaluated on them
  std::vector<std::string> attacks;
  AttackConfig attack;
  std::uint64_t seed = 1;
  int workers = 0;  // 0 = one per hardware thread; SEGTRANSFER_WORKERS wins
  std::string output_dir = ".";
};

/// Parses and cross-checks a config document. Collects every violation and
/// throws a single std::invalid_argument listing all of them.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// One (source, attack, target) cell of the transfer matrix. psnr and ssim
/// describe the perturbed images themselves, so they repeat across targets.
struct ResultRow {
  std::string source;
  std::string attack;
  double psnr = 0.0;
  double ssim = 0.0;
  std::string target;
  double miou = 0.0;
  double sr = 0.0;
};

struct ExperimentResults {
  int schema_version = 1;
  std::uint64_t seed = 0;
  int dataset_size = 0;
  AttackConfig attack;
  std::map<std::string, double> clean_miou;  // per target id
  std::vector<ResultRow> rows;               // source-major, then attack, then target
  std::vector<std::string> warnings;
};

/// Number of worker threads to use: SEGTRANSFER_WORKERS when set (must parse
/// as a positive integer), otherwise `configured` when positive, otherwise
/// the hardware thread count.
int resolve_workers(int configured);

/// Runs every (source, attack) pair over the dataset, evaluates every target
/// on the perturbed images, and fills the result matrix. `progress`, when
/// given, receives one human-readable line per finished (source, attack) row.
ExperimentResults run_transfer_experiment(
    const ExperimentConfig& config,
    const std::function<void(const std::string&)>& progress = nullptr);

/// Writes results.json and results.csv into `dir`. The CSV columns are
/// source,attack,psnr,ssim,target,miou,sr in row order.
void persist_results(const ExperimentResults& results, const std::string& dir);

ExperimentResults load_results(const std::string& json_path);

std::string results_to_csv(const ExperimentResults& results);
nlohmann::json results_to_json(const ExperimentResults& results);

/// Fixed-format metric rendering shared by the CSV writer and the console
/// tables, so the two never disagree.
std::string format_metric(double v);

}  // namespace segtransfer

#endif  // SEGTRANSFER_HARNESS_HPP
