// Writes a synthetic grayscale IDX dataset (one smoothed random template per
// class plus pixel noise); the desk-scale stand-in benchmark.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sleepnet/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic IDX image classification dataset"};
  std::string out_dir = "data";
  sleepnet::SynthSpec spec;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--classes", spec.classes, "number of classes");
  app.add_option("--image-size", spec.image_size, "square image side length");
  app.add_option("--train-per-class", spec.train_per_class, "training examples per class");
  app.add_option("--test-per-class", spec.test_per_class, "test examples per class");
  app.add_option("--noise", spec.noise, "pixel noise sigma in [0,1] units");
  app.add_option("--brightness", spec.brightness, "per-sample brightness shift bound");
  app.add_option("--style-dims", spec.style_dims, "number of shared style patterns");
  app.add_option("--style", spec.style, "per-sample style coefficient bound");
  app.add_option("--late-blend", spec.late_blend, "blend of late-class templates toward a hub");
  app.add_option("--seed", spec.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto data = sleepnet::make_synthetic(spec);
    sleepnet::write_idx_root(data, out_dir);
    std::cout << "wrote " << data.train.size() << " train / " << data.test.size()
              << " test examples (" << spec.classes << " classes, " << spec.image_size << "x"
              << spec.image_size << ") to " << out_dir << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
