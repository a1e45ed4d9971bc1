#ifndef KGQ_SYNTH_HPP
#define KGQ_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kgq/kg.hpp"

namespace kgq {

// Synthetic benchmark graphs over Z_n: each relation connects j to j+d (mod n)
// for every offset d in its set, so relations compose cleanly (chains of
// offsets), intersect meaningfully, and a moderate-rank factorization can fit
// them essentially perfectly. Edges are split i.i.d. into train/valid/test.
struct SynthConfig {
  int n_entities = 200;
  double valid_frac = 0.05;
  double test_frac = 0.05;
  std::uint64_t seed = 0;
};

struct SynthRelation {
  std::string name;
  std::vector<int> offsets;
};

std::vector<SynthRelation> default_synth_relations();

// Writes train.txt/valid.txt/test.txt TSVs into dir.
void write_synth_kg(const SynthConfig& cfg, const std::filesystem::path& dir,
                    const std::vector<SynthRelation>& relations = default_synth_relations());

// Convenience: write then load.
KnowledgeGraph make_synth_kg(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace kgq

#endif
