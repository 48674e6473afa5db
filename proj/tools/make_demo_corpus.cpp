// SPDX-License-Identifier: Apache-2.0
// Writes a small separable image+text corpus and a matching run configuration.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sidetune/data/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic document corpus"};
  std::string dir;
  sidetune::SyntheticCorpusSpec spec;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--classes", spec.classes, "Number of classes")->check(CLI::Range(2, 64));
  app.add_option("--per-class", spec.per_class, "Documents per class")->check(CLI::Range(4, 100000));
  app.add_option("--seed", spec.seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto root = std::filesystem::absolute(dir);
    const auto corpus = sidetune::write_synthetic_corpus(root, spec);
    std::ofstream(root / "demo.cfg") << sidetune::synthetic_run_config(corpus, spec, root / "run");
    std::cout << "corpus: " << root.string() << "\nconfig: " << (root / "demo.cfg").string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
