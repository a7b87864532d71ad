#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "segtransfer/attacks.hpp"
#include "segtransfer/harness.hpp"
#include "segtransfer/io.hpp"
#include "segtransfer/metrics.hpp"
#include "segtransfer/models.hpp"
#include "segtransfer/report.hpp"

namespace fs = std::filesystem;
using namespace segtransfer;

namespace {

struct AttackFlags {
  std::string model_path;
  std::string image_path;
  std::string labels_path;
  std::string attack = "pgd";
  std::string output_path;
  std::string perturbation_path;
  int ignore_index = 255;
  std::uint64_t seed = 1;
  AttackConfig config;
  double alpha = -1.0;         // sentinel: negative means unset
  double kernel_sigma = -1.0;
  double segpgd_lambda = -1.0;
  bool dag_unbounded = false;
};

void run_attack_command(const AttackFlags& f) {
  AttackConfig cfg = f.config;
  if (f.alpha >= 0.0) cfg.alpha = f.alpha;
  if (f.kernel_sigma >= 0.0) cfg.kernel_sigma = f.kernel_sigma;
  if (f.segpgd_lambda >= 0.0) cfg.segpgd_lambda = f.segpgd_lambda;
  cfg.dag_project_final = !f.dag_unbounded;
  cfg.validate();

  const std::string id = fs::path(f.model_path).stem().string();
  const auto model = load_model_file(id, f.model_path);
  const Tensor3 image = read_image_pnm(f.image_path);
  const LabelMap labels =
      read_labels_pgm(f.labels_path, model->num_classes(), f.ignore_index);

  Rng rng(f.seed);
  const AdvResult res = run_attack(f.attack, *model, image, labels, cfg, rng);

  for (std::size_t t = 0; t < res.trace.size(); ++t) {
    std::cout << "iter " << t << ": loss=" << format_metric(res.trace[t].loss);
    if (res.trace[t].active_pixels >= 0) {
      std::cout << " active=" << res.trace[t].active_pixels;
    }
    std::cout << "\n";
  }
  std::cout << "attack=" << res.attack_name << " iterations=" << res.iterations_used
            << " linf=" << format_metric(linf_norm(res.perturbation))
            << " psnr=" << format_metric(psnr(image, res.adv_image));
  if (image.height >= 11 && image.width >= 11) {
    std::cout << " ssim=" << format_metric(ssim(image, res.adv_image));
  }
  if (res.attack_name == "dag") {
    std::cout << (res.dag_stalled ? " dag=stalled" : " dag=converged");
  }
  std::cout << "\n";

  write_image_pnm(res.adv_image, f.output_path);
  std::cout << "wrote " << f.output_path << "\n";
  if (!f.perturbation_path.empty()) {
    write_tensor_raw(res.perturbation, f.perturbation_path);
    std::cout << "wrote " << f.perturbation_path << "\n";
  }
}

struct EvaluateFlags {
  std::string model_path;
  std::string images_dir;
  std::string labels_dir;
  int ignore_index = 255;
  int limit = 0;
};

void run_evaluate_command(const EvaluateFlags& f) {
  const std::string id = fs::path(f.model_path).stem().string();
  const auto model = load_model_file(id, f.model_path);
  DatasetSpec spec;
  spec.images_dir = f.images_dir;
  spec.labels_dir = f.labels_dir;
  spec.num_classes = model->num_classes();
  spec.ignore_index = f.ignore_index;
  spec.limit = f.limit;
  const auto samples = load_dataset(spec);

  ConfusionMatrix cm(model->num_classes());
  for (const Sample& s : samples) {
    cm.accumulate(predict(*model, s.image), s.labels);
  }
  const auto ious = per_class_iou(cm);
  for (std::size_t c = 0; c < ious.size(); ++c) {
    std::cout << "class " << c << ": iou="
              << (std::isnan(ious[c]) ? "undefined" : format_metric(ious[c])) << "\n";
  }
  std::cout << "images=" << samples.size() << " miou=" << format_metric(miou(cm)) << "\n";
}

struct TransferFlags {
  std::string config_path;
  std::string output_dir;  // empty: use the config's
};

void run_transfer_command(const TransferFlags& f) {
  ExperimentConfig config = load_experiment_config(f.config_path);
  if (!f.output_dir.empty()) config.output_dir = f.output_dir;
  const ExperimentResults results = run_transfer_experiment(
      config, [](const std::string& line) { std::cout << line << "\n"; });
  persist_results(results, config.output_dir);
  std::cout << "\n" << render_results_table(results);
  std::cout << "\nwrote " << (fs::path(config.output_dir) / "results.json").string()
            << " and " << (fs::path(config.output_dir) / "results.csv").string() << "\n";
}

struct ReportFlags {
  std::string results_path;
  std::string output_dir;
};

void run_report_command(const ReportFlags& f) {
  const ExperimentResults results = load_results(f.results_path);
  const std::string dir = f.output_dir.empty()
                              ? fs::path(f.results_path).parent_path().string()
                              : f.output_dir;
  const std::string out = dir.empty() ? "." : dir;
  std::cout << render_results_table(results);
  write_report_charts(results, out);
  for (const char* name : {"sr_range.svg", "miou_bars.svg", "ssim_ranking.svg"}) {
    std::cout << "wrote " << (fs::path(out) / name).string() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transferable adversarial attacks against segmentation models"};
  app.require_subcommand(1);

  AttackFlags af;
  CLI::App* attack = app.add_subcommand("attack", "Perturb one image against one model");
  attack->add_option("--model", af.model_path, "Model JSON document")->required();
  attack->add_option("--image", af.image_path, "Input image (.ppm or .pgm)")->required();
  attack->add_option("--labels", af.labels_path, "Ground-truth labels (.pgm)")->required();
  attack->add_option("--attack", af.attack, "Attack name")
      ->check(CLI::IsMember(attack_names()));
  attack->add_option("--output", af.output_path, "Where to write the perturbed image")
      ->required();
  attack->add_option("--perturbation", af.perturbation_path,
                     "Optional T3 dump of the raw perturbation");
  attack->add_option("--epsilon", af.config.epsilon, "L-inf budget");
  attack->add_option("--alpha", af.alpha, "Step size (default epsilon/4)");
  attack->add_option("--iterations", af.config.iterations, "Iteration count");
  attack->add_option("--momentum", af.config.momentum, "Momentum decay (ni, ensemble)");
  attack->add_flag("--random-init,!--no-random-init", af.config.random_init,
                   "Random start inside the budget");
  attack->add_option("--di-probability", af.config.di_probability,
                     "Input-diversity transform probability");
  attack->add_option("--di-scale-min", af.config.di_scale_min,
                     "Input-diversity smallest scale");
  attack->add_option("--kernel-size", af.config.kernel_size,
                     "Gradient-smoothing kernel size (odd)");
  attack->add_option("--kernel-sigma", af.kernel_sigma,
                     "Kernel sigma (default kernel_size/3)");
  attack->add_option("--dag-gamma", af.config.dag_gamma, "Per-step magnitude for dag");
  attack->add_flag("--dag-unbounded", af.dag_unbounded,
                   "Skip the final projection of dag into the budget");
  attack->add_option("--segpgd-lambda", af.segpgd_lambda,
                     "Fixed split weight (default: schedule t/(2T))");
  attack->add_option("--ignore-index", af.ignore_index, "Label value to skip");
  attack->add_option("--seed", af.seed, "Random seed");
  attack->callback([&] { run_attack_command(af); });

  EvaluateFlags ef;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Clean mIoU of a model on a dataset");
  evaluate->add_option("--model", ef.model_path, "Model JSON document")->required();
  evaluate->add_option("--images", ef.images_dir, "Image directory")->required();
  evaluate->add_option("--labels", ef.labels_dir, "Label directory")->required();
  evaluate->add_option("--ignore-index", ef.ignore_index, "Label value to skip");
  evaluate->add_option("--limit", ef.limit, "Use only the first N images");
  evaluate->callback([&] { run_evaluate_command(ef); });

  TransferFlags tf;
  CLI::App* transfer =
      app.add_subcommand("transfer", "Run a source-to-target transfer experiment");
  transfer->add_option("--config", tf.config_path, "Experiment JSON document")->required();
  transfer->add_option("--output-dir", tf.output_dir, "Override the config output_dir");
  transfer->callback([&] { run_transfer_command(tf); });

  ReportFlags rf;
  CLI::App* report = app.add_subcommand("report", "Summarize results.json and draw charts");
  report->add_option("--results", rf.results_path, "Path to results.json")->required();
  report->add_option("--output-dir", rf.output_dir,
                     "Chart directory (default: beside the results)");
  report->callback([&] { run_report_command(rf); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
