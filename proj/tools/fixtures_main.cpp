// Companion tool: generates the synthetic shapes dataset, trains the small
// conv segmenters on it, and serves as a stand-in external model process.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "segtransfer/fixtures.hpp"
#include "segtransfer/harness.hpp"
#include "segtransfer/io.hpp"
#include "segtransfer/models.hpp"

using namespace segtransfer;

int main(int argc, char** argv) {
  CLI::App app{"Dataset and model fixtures for the attack harness"};
  app.require_subcommand(1);

  ShapesParams sp;
  std::string images_dir, labels_dir;
  CLI::App* shapes = app.add_subcommand("shapes", "Generate the synthetic shapes dataset");
  shapes->add_option("--images", images_dir, "Output image directory")->required();
  shapes->add_option("--labels", labels_dir, "Output label directory")->required();
  shapes->add_option("--count", sp.count, "Number of images");
  shapes->add_option("--size", sp.size, "Image side length");
  shapes->add_option("--noise", sp.noise, "Per-channel color jitter");
  shapes->add_option("--seed", sp.seed, "Random seed");
  shapes->callback([&] {
    write_shapes_dataset(sp, images_dir, labels_dir);
    std::cout << "wrote " << sp.count << " images to " << images_dir << "\n";
  });

  std::string arch = "a", model_id = "model", model_out;
  std::string train_images, train_labels;
  int limit = 0;
  std::uint64_t init_seed = 11;
  TrainParams tp;
  CLI::App* train = app.add_subcommand("train", "Train a small conv segmenter");
  train->add_option("--images", train_images, "Training image directory")->required();
  train->add_option("--labels", train_labels, "Training label directory")->required();
  train->add_option("--arch", arch, "Architecture")->check(CLI::IsMember({"a", "b"}));
  train->add_option("--id", model_id, "Model id");
  train->add_option("--out", model_out, "Output model JSON path")->required();
  train->add_option("--limit", limit, "Use only the first N images");
  train->add_option("--epochs", tp.epochs, "Training epochs");
  train->add_option("--lr", tp.lr, "Adam step size");
  train->add_option("--seed", tp.seed, "Shuffling seed");
  train->add_option("--init-seed", init_seed, "Weight initialization seed");
  train->callback([&] {
    DatasetSpec spec;
    spec.images_dir = train_images;
    spec.labels_dir = train_labels;
    spec.num_classes = 3;
    spec.limit = limit;
    const auto samples = load_dataset(spec);
    Rng rng(init_seed);
    ToyConvSegmenter model = arch == "a" ? make_conv_net_a(model_id, 3, 3, rng)
                                         : make_conv_net_b(model_id, 3, 3, rng);
    const double loss = train_conv_segmenter(model, samples, tp);
    save_model_file(model, model_out);
    std::cout << "trained " << model_id << " on " << samples.size()
              << " images, final loss " << format_metric(loss) << ", miou "
              << format_metric(dataset_miou(model, samples)) << "\n";
    std::cout << "wrote " << model_out << "\n";
  });

  std::string stub_model, stub_in, stub_out;
  CLI::App* stub = app.add_subcommand(
      "eval-stub", "Read a T3 image, emit T3 logits (external-model protocol)");
  stub->add_option("model", stub_model, "Model JSON document")->required();
  stub->add_option("input", stub_in, "Input T3 tensor")->required();
  stub->add_option("output", stub_out, "Output T3 tensor")->required();
  stub->callback([&] {
    const auto model = load_model_file("stub", stub_model);
    write_tensor_raw(model->logits(read_tensor_raw(stub_in)), stub_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
