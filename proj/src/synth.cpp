#include "kgq/synth.hpp"

#include <fstream>
#include <random>

namespace kgq {

std::vector<SynthRelation> default_synth_relations() {
  // Eight base relations (reciprocals are added by the loader): single-offset
  // permutations, small multi-offset fan-outs, and a residue-class relation.
  return {
      {"next", {1}},
      {"skip3", {3}},
      {"jump43", {43}},
      {"flip", {100}},
      {"pair5", {5, 195}},
      {"pair9", {9, 191}},
      {"tri", {7, 91, 150}},
      {"block20", {20, 40, 60, 80, 100, 120, 140, 160, 180}},
  };
}

void write_synth_kg(const SynthConfig& cfg, const std::filesystem::path& dir,
                    const std::vector<SynthRelation>& relations) {
  std::filesystem::create_directories(dir);
  std::ofstream train(dir / "train.txt"), valid(dir / "valid.txt"), test(dir / "test.txt");
  if (!train || !valid || !test) throw Error("cannot write synth KG into " + dir.string());

  auto name_of = [&](int j) {
    std::string s = std::to_string(j);
    return "e" + std::string(3 - std::min<std::size_t>(3, s.size()), '0') + s;
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const SynthRelation& rel : relations) {
    for (int j = 0; j < cfg.n_entities; ++j) {
      for (int d : rel.offsets) {
        const int o = (j + d) % cfg.n_entities;
        const double u = unif(rng);
        std::ofstream& out =
            u < cfg.valid_frac ? valid : (u < cfg.valid_frac + cfg.test_frac ? test : train);
        out << name_of(j) << '\t' << rel.name << '\t' << name_of(o) << '\n';
      }
    }
  }
}

KnowledgeGraph make_synth_kg(const SynthConfig& cfg, const std::filesystem::path& dir) {
  write_synth_kg(cfg, dir);
  return load_kg(dir / "train.txt", dir / "valid.txt", dir / "test.txt");
}

}  // namespace kgq
