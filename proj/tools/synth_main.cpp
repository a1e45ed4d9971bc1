#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kgq/synth.hpp"

// Emits the synthetic benchmark KG used by the examples in the README and by
// the acceptance suite.
int main(int argc, char** argv) {
  CLI::App app{"write a synthetic knowledge graph (train/valid/test TSVs)"};
  kgq::SynthConfig cfg;
  std::string out = "synth_kg";
  app.add_option("--entities", cfg.n_entities, "number of entities")->capture_default_str();
  app.add_option("--valid-frac", cfg.valid_frac, "fraction of edges held out for validation")
      ->capture_default_str();
  app.add_option("--test-frac", cfg.test_frac, "fraction of edges held out for test")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
  app.add_option("--out", out, "output directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    kgq::write_synth_kg(cfg, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cout << "wrote train/valid/test TSVs to " << out << '\n';
  return 0;
}
