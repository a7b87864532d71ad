#include "segtransfer/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>

#include "segtransfer/io.hpp"
#include "segtransfer/metrics.hpp"
#include "segtransfer/models.hpp"

namespace segtransfer {

namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

nlohmann::json attack_config_to_json(const AttackConfig& a) {
  nlohmann::json j = {{"epsilon", a.epsilon},
                      {"iterations", a.iterations},
                      {"momentum", a.momentum},
                      {"random_init", a.random_init},
                      {"di_probability", a.di_probability},
                      {"di_scale_min", a.di_scale_min},
                      {"kernel_size", a.kernel_size},
                      {"dag_gamma", a.dag_gamma},
                      {"dag_project_final", a.dag_project_final}};
  if (a.alpha) j["alpha"] = *a.alpha;
  if (a.kernel_sigma) j["kernel_sigma"] = *a.kernel_sigma;
  if (a.segpgd_lambda) j["segpgd_lambda"] = *a.segpgd_lambda;
  return j;
}

// Reads one attack-config field if present; type errors become violations.
template <typename T, typename Setter>
void read_field(const nlohmann::json& j, const char* key, std::vector<std::string>& errs,
                Setter setter) {
  if (!j.contains(key)) return;
  try {
    setter(j.at(key).get<T>());
  } catch (const nlohmann::json::exception&) {
    errs.push_back(std::string("attack.") + key + " has the wrong type");
  }
}

AttackConfig attack_config_from_json(const nlohmann::json& j,
                                     std::vector<std::string>& errs) {
  AttackConfig a;
  if (!j.is_object()) {
    errs.push_back("attack must be an object");
    return a;
  }
  static const std::set<std::string> known = {
      "epsilon",        "alpha",        "iterations",   "momentum",
      "random_init",    "di_probability", "di_scale_min", "kernel_size",
      "kernel_sigma",   "dag_gamma",    "dag_project_final", "segpgd_lambda"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      errs.push_back("attack: unknown key '" + item.key() + "'");
    }
  }
  read_field<double>(j, "epsilon", errs, [&](double v) { a.epsilon = v; });
  read_field<double>(j, "alpha", errs, [&](double v) { a.alpha = v; });
  read_field<int>(j, "iterations", errs, [&](int v) { a.iterations = v; });
  read_field<double>(j, "momentum", errs, [&](double v) { a.momentum = v; });
  read_field<bool>(j, "random_init", errs, [&](bool v) { a.random_init = v; });
  read_field<double>(j, "di_probability", errs, [&](double v) { a.di_probability = v; });
  read_field<double>(j, "di_scale_min", errs, [&](double v) { a.di_scale_min = v; });
  read_field<int>(j, "kernel_size", errs, [&](int v) { a.kernel_size = v; });
  read_field<double>(j, "kernel_sigma", errs, [&](double v) { a.kernel_sigma = v; });
  read_field<double>(j, "dag_gamma", errs, [&](double v) { a.dag_gamma = v; });
  read_field<bool>(j, "dag_project_final", errs, [&](bool v) { a.dag_project_final = v; });
  read_field<double>(j, "segpgd_lambda", errs, [&](double v) { a.segpgd_lambda = v; });
  return a;
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key,
                                     std::vector<std::string>& errs) {
  std::vector<std::string> out;
  if (!j.contains(key)) {
    errs.push_back(std::string(key) + " is required");
    return out;
  }
  const nlohmann::json& arr = j.at(key);
  if (!arr.is_array() || arr.empty()) {
    errs.push_back(std::string(key) + " must be a non-empty array of strings");
    return out;
  }
  for (const auto& v : arr) {
    if (!v.is_string()) {
      errs.push_back(std::string(key) + " must contain only strings");
      return {};
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

void check_unique(const std::vector<std::string>& xs, const char* what,
                  std::vector<std::string>& errs) {
  std::set<std::string> seen;
  for (const auto& x : xs) {
    if (!seen.insert(x).second) errs.push_back(std::string(what) + " repeats '" + x + "'");
  }
}

}  // namespace

std::vector<Sample> load_dataset(const DatasetSpec& spec) {
  if (spec.num_classes < 2) {
    throw std::invalid_argument("dataset: num_classes must be at least 2");
  }
  if (spec.limit < 0) {
    throw std::invalid_argument("dataset: limit must be non-negative");
  }
  if (!fs::is_directory(spec.images_dir)) {
    throw std::runtime_error("dataset: not a directory: " + spec.images_dir);
  }
  if (!fs::is_directory(spec.labels_dir)) {
    throw std::runtime_error("dataset: not a directory: " + spec.labels_dir);
  }

  std::map<std::string, fs::path> by_stem;  // sorted by stem
  for (const auto& entry : fs::directory_iterator(spec.images_dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() != ".ppm" && p.extension() != ".pgm") continue;
    const std::string stem = p.stem().string();
    if (!by_stem.emplace(stem, p).second) {
      throw std::runtime_error("dataset: duplicate image stem '" + stem + "'");
    }
  }
  if (by_stem.empty()) {
    throw std::runtime_error("dataset: no .ppm or .pgm images in " + spec.images_dir);
  }

  std::vector<Sample> samples;
  for (const auto& [stem, path] : by_stem) {
    if (spec.limit > 0 && static_cast<int>(samples.size()) >= spec.limit) break;
    const fs::path label_path = fs::path(spec.labels_dir) / (stem + ".pgm");
    if (!fs::exists(label_path)) {
      throw std::runtime_error("dataset: missing label file for image '" + stem + "'");
    }
    Sample s;
    s.id = stem;
    s.image = read_image_pnm(path.string());
    s.labels = read_labels_pgm(label_path.string(), spec.num_classes, spec.ignore_index);
    if (s.labels.height != s.image.height || s.labels.width != s.image.width) {
      throw std::runtime_error("dataset: image and label sizes differ for '" + stem + "'");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  std::vector<std::string> errs;
  ExperimentConfig c;
  if (!j.is_object()) {
    throw std::invalid_argument("invalid experiment config: document must be an object");
  }

  static const std::set<std::string> known_top = {"dataset", "models",  "sources",
                                                  "targets", "attacks", "attack",
                                                  "seed",    "workers", "output_dir"};
  for (const auto& item : j.items()) {
    if (!known_top.count(item.key())) errs.push_back("unknown key '" + item.key() + "'");
  }

  if (!j.contains("dataset") || !j.at("dataset").is_object()) {
    errs.push_back("dataset must be an object");
  } else {
    const nlohmann::json& d = j.at("dataset");
    static const std::set<std::string> known_ds = {"images_dir", "labels_dir", "num_classes",
                                                   "ignore_index", "limit"};
    for (const auto& item : d.items()) {
      if (!known_ds.count(item.key()))
        errs.push_back("dataset: unknown key '" + item.key() + "'");
    }
    try {
      c.dataset.images_dir = d.at("images_dir").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      errs.push_back("dataset.images_dir must be a string");
    }
    try {
      c.dataset.labels_dir = d.at("labels_dir").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      errs.push_back("dataset.labels_dir must be a string");
    }
    try {
      c.dataset.num_classes = d.at("num_classes").get<int>();
      if (c.dataset.num_classes < 2) errs.push_back("dataset.num_classes must be at least 2");
    } catch (const nlohmann::json::exception&) {
      errs.push_back("dataset.num_classes must be an integer");
    }
    try {
      c.dataset.ignore_index = d.value("ignore_index", 255);
      if (c.dataset.ignore_index >= 0 && c.dataset.ignore_index < c.dataset.num_classes) {
        errs.push_back("dataset.ignore_index collides with a class index");
      }
    } catch (const nlohmann::json::exception&) {
      errs.push_back("dataset.ignore_index must be an integer");
    }
    try {
      c.dataset.limit = d.value("limit", 0);
      if (c.dataset.limit < 0) errs.push_back("dataset.limit must be non-negative");
    } catch (const nlohmann::json::exception&) {
      errs.push_back("dataset.limit must be an integer");
    }
  }

  std::set<std::string> model_ids;
  if (!j.contains("models") || !j.at("models").is_array() || j.at("models").empty()) {
    errs.push_back("models must be a non-empty array");
  } else {
    for (const auto& mj : j.at("models")) {
      ModelSpec m;
      if (!mj.is_object()) {
        errs.push_back("models entries must be objects");
        continue;
      }
      try {
        m.id = mj.at("id").get<std::string>();
        m.path = mj.at("path").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        errs.push_back("models entries need string 'id' and 'path'");
        continue;
      }
      if (m.id.empty() || m.path.empty()) {
        errs.push_back("models entries need non-empty 'id' and 'path'");
        continue;
      }
      if (!model_ids.insert(m.id).second) {
        errs.push_back("models repeats id '" + m.id + "'");
      }
      c.models.push_back(std::move(m));
    }
  }

  c.sources = string_list(j, "sources", errs);
  c.targets = string_list(j, "targets", errs);
  c.attacks = string_list(j, "attacks", errs);
  check_unique(c.sources, "sources", errs);
  check_unique(c.targets, "targets", errs);
  check_unique(c.attacks, "attacks", errs);
  for (const auto& s : c.sources) {
    if (!model_ids.count(s)) errs.push_back("sources names unknown model '" + s + "'");
  }
  for (const auto& t : c.targets) {
    if (!model_ids.count(t)) errs.push_back("targets names unknown model '" + t + "'");
  }
  {
    const auto& known = attack_registry();
    for (const auto& a : c.attacks) {
      if (!known.count(a)) errs.push_back("attacks names unknown attack '" + a + "'");
    }
  }

  if (j.contains("attack")) {
    c.attack = attack_config_from_json(j.at("attack"), errs);
  }
  try {
    c.attack.validate();
  } catch (const std::invalid_argument& e) {
    errs.push_back(e.what());
  }

  try {
    c.seed = j.value("seed", std::uint64_t{1});
  } catch (const nlohmann::json::exception&) {
    errs.push_back("seed must be a non-negative integer");
  }
  try {
    c.workers = j.value("workers", 0);
    if (c.workers < 0) errs.push_back("workers must be non-negative");
  } catch (const nlohmann::json::exception&) {
    errs.push_back("workers must be an integer");
  }
  try {
    c.output_dir = j.value("output_dir", std::string("."));
  } catch (const nlohmann::json::exception&) {
    errs.push_back("output_dir must be a string");
  }

  if (!errs.empty()) {
    throw std::invalid_argument("invalid experiment config: " + join(errs, "; "));
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid experiment config: " + std::string(e.what()));
  }
  return parse_experiment_config(j);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& config) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : config.models) {
    models.push_back({{"id", m.id}, {"path", m.path}});
  }
  return {{"dataset",
           {{"images_dir", config.dataset.images_dir},
            {"labels_dir", config.dataset.labels_dir},
            {"num_classes", config.dataset.num_classes},
            {"ignore_index", config.dataset.ignore_index},
            {"limit", config.dataset.limit}}},
          {"models", std::move(models)},
          {"sources", config.sources},
          {"targets", config.targets},
          {"attacks", config.attacks},
          {"attack", attack_config_to_json(config.attack)},
          {"seed", config.seed},
          {"workers", config.workers},
          {"output_dir", config.output_dir}};
}

int resolve_workers(int configured) {
  if (const char* env = std::getenv("SEGTRANSFER_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw std::invalid_argument("SEGTRANSFER_WORKERS must be a positive integer");
    }
    return static_cast<int>(v);
  }
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

struct LoadedModels {
  std::map<std::string, std::shared_ptr<const ModelOracle>> by_id;

  const ModelOracle& get(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("model id not loaded: " + id);
    return *it->second;
  }
};

// Attacks every sample with per-image derived seeds. Failed samples come back
// empty with the error message in `errors`.
void attack_all(const ModelOracle& source, const std::string& attack,
                const std::vector<Sample>& samples, const AttackConfig& cfg,
                std::uint64_t seed, int workers, std::vector<std::optional<Tensor3>>& adv,
                std::vector<std::string>& errors) {
  adv.assign(samples.size(), std::nullopt);
  errors.assign(samples.size(), std::string());
  const int n = static_cast<int>(samples.size());
  int threads = std::min(workers, n);
  if (!source.concurrent_safe()) threads = 1;
  auto work = [&](int first) {
    for (int i = first; i < n; i += threads) {
      Rng rng(derive_seed(seed, samples[i].id));
      try {
        adv[i] = run_attack(attack, source, samples[i].image, samples[i].labels, cfg, rng)
                     .adv_image;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (threads <= 1) {
    work(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
  for (auto& th : pool) th.join();
}

}  // namespace

ExperimentResults run_transfer_experiment(
    const ExperimentConfig& config,
    const std::function<void(const std::string&)>& progress) {
  {
    std::vector<std::string> errs;
    if (config.sources.empty()) errs.push_back("sources is empty");
    if (config.targets.empty()) errs.push_back("targets is empty");
    if (config.attacks.empty()) errs.push_back("attacks is empty");
    const auto& known = attack_registry();
    for (const auto& a : config.attacks) {
      if (!known.count(a)) errs.push_back("unknown attack '" + a + "'");
    }
    try {
      config.attack.validate();
    } catch (const std::invalid_argument& e) {
      errs.push_back(e.what());
    }
    if (!errs.empty()) {
      throw std::invalid_argument("invalid experiment config: " + join(errs, "; "));
    }
  }

  const std::vector<Sample> samples = load_dataset(config.dataset);
  const int workers = resolve_workers(config.workers);

  LoadedModels models;
  for (const auto& spec : config.models) {
    models.by_id[spec.id] = load_model_file(spec.id, spec.path);
  }

  ExperimentResults res;
  res.seed = config.seed;
  res.dataset_size = static_cast<int>(samples.size());
  res.attack = config.attack;

  for (const auto& target : config.targets) {
    const ModelOracle& m = models.get(target);
    ConfusionMatrix cm(config.dataset.num_classes);
    for (const Sample& s : samples) {
      cm.accumulate(predict(m, s.image), s.labels);
    }
    res.clean_miou[target] = miou(cm);
  }

  for (const auto& source : config.sources) {
    const ModelOracle& src_model = models.get(source);
    for (const auto& attack : config.attacks) {
      std::vector<std::optional<Tensor3>> adv;
      std::vector<std::string> errors;
      attack_all(src_model, attack, samples, config.attack, config.seed, workers, adv,
                 errors);

      std::vector<int> included;
      for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        if (adv[i]) {
          included.push_back(i);
        } else {
          res.warnings.push_back("attack '" + attack + "' via '" + source +
                                 "' failed on image '" + samples[i].id +
                                 "': " + errors[i]);
        }
      }
      if (included.empty()) {
        res.warnings.push_back("attack '" + attack + "' via '" + source +
                               "' produced no usable images; row skipped");
        continue;
      }

      double psnr_sum = 0.0;
      double ssim_sum = 0.0;
      for (int i : included) {
        psnr_sum += psnr(samples[i].image, *adv[i]);
        ssim_sum += ssim(samples[i].image, *adv[i]);
      }
      const double psnr_mean = psnr_sum / static_cast<double>(included.size());
      const double ssim_mean = ssim_sum / static_cast<double>(included.size());

      for (const auto& target : config.targets) {
        const ModelOracle& tgt_model = models.get(target);
        ConfusionMatrix cm(config.dataset.num_classes);
        for (int i : included) {
          cm.accumulate(predict(tgt_model, *adv[i]), samples[i].labels);
        }
        ResultRow row;
        row.source = source;
        row.attack = attack;
        row.psnr = psnr_mean;
        row.ssim = ssim_mean;
        row.target = target;
        row.miou = miou(cm);
        row.sr = success_rate(res.clean_miou.at(target), row.miou);
        res.rows.push_back(std::move(row));
      }
      if (progress) {
        progress("finished source=" + source + " attack=" + attack + " (" +
                 std::to_string(included.size()) + "/" +
                 std::to_string(samples.size()) + " images)");
      }
    }
  }
  return res;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string results_to_csv(const ExperimentResults& results) {
  std::string out = "source,attack,psnr,ssim,target,miou,sr\n";
  for (const ResultRow& r : results.rows) {
    out += r.source + "," + r.attack + "," + format_metric(r.psnr) + "," +
           format_metric(r.ssim) + "," + r.target + "," + format_metric(r.miou) + "," +
           format_metric(r.sr) + "\n";
  }
  return out;
}

nlohmann::json results_to_json(const ExperimentResults& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ResultRow& r : results.rows) {
    rows.push_back({{"source", r.source},
                    {"attack", r.attack},
                    {"psnr", r.psnr},
                    {"ssim", r.ssim},
                    {"target", r.target},
                    {"miou", r.miou},
                    {"sr", r.sr}});
  }
  return {{"schema_version", results.schema_version},
          {"seed", results.seed},
          {"dataset_size", results.dataset_size},
          {"attack", attack_config_to_json(results.attack)},
          {"clean_miou", results.clean_miou},
          {"rows", std::move(rows)},
          {"warnings", results.warnings}};
}

void persist_results(const ExperimentResults& results, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "results.json");
    if (!out) throw std::runtime_error("cannot write results.json in " + dir);
    out << results_to_json(results).dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "results.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write results.csv in " + dir);
    out << results_to_csv(results);
  }
}

ExperimentResults load_results(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open results file: " + json_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed results file: " + std::string(e.what()));
  }
  ExperimentResults res;
  try {
    res.schema_version = j.at("schema_version").get<int>();
    if (res.schema_version != 1) {
      throw std::runtime_error("unsupported results schema_version " +
                               std::to_string(res.schema_version));
    }
    res.seed = j.at("seed").get<std::uint64_t>();
    res.dataset_size = j.value("dataset_size", 0);
    std::vector<std::string> errs;
    res.attack = attack_config_from_json(j.at("attack"), errs);
    if (!errs.empty()) {
      throw std::runtime_error("malformed results file: " + join(errs, "; "));
    }
    res.clean_miou = j.at("clean_miou").get<std::map<std::string, double>>();
    for (const auto& rj : j.at("rows")) {
      ResultRow r;
      r.source = rj.at("source").get<std::string>();
      r.attack = rj.at("attack").get<std::string>();
      r.psnr = rj.at("psnr").get<double>();
      r.ssim = rj.at("ssim").get<double>();
      r.target = rj.at("target").get<std::string>();
      r.miou = rj.at("miou").get<double>();
      r.sr = rj.at("sr").get<double>();
      res.rows.push_back(std::move(r));
    }
    res.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed results file: " + std::string(e.what()));
  }
  return res;
}

}  // namespace segtransfer
