#ifndef KGQ_TESTS_SUPPORT_HPP
#define KGQ_TESTS_SUPPORT_HPP

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgq/kg.hpp"
#include "kgq/model.hpp"
#include "kgq/query.hpp"

namespace kgq::test {

// Self-cleaning unique temp directory.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("kgq_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

// Loads a KG from triple lines given as "s r o" (spaces become tabs).
inline KnowledgeGraph kg_from_lines(const std::vector<std::string>& train,
                                    const std::vector<std::string>& valid = {},
                                    const std::vector<std::string>& test = {}) {
  TempDir dir("kg");
  auto tabify = [](std::vector<std::string> lines) {
    for (auto& l : lines) {
      for (auto& c : l) {
        if (c == ' ') c = '\t';
      }
    }
    return lines;
  };
  write_lines(dir.path / "train.txt", tabify(train));
  write_lines(dir.path / "valid.txt", tabify(valid));
  write_lines(dir.path / "test.txt", tabify(test));
  return load_kg(dir.path / "train.txt", dir.path / "valid.txt", dir.path / "test.txt");
}

// Random embeddings; scores are arbitrary but deterministic, which is all the
// beam/ranking oracles need.
inline EmbeddingModel random_model(int n_entities, int n_relations, int rank,
                                   std::uint64_t seed, Scorer scorer = Scorer::ComplEx,
                                   double scale = 1.0) {
  EmbeddingModel m;
  m.scorer = scorer;
  m.rank = rank;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  m.entity_table.resize(n_entities, rank);
  m.relation_table.resize(n_relations, rank);
  for (Eigen::Index i = 0; i < m.entity_table.size(); ++i) {
    m.entity_table.data()[i] = scale * gauss(rng);
  }
  for (Eigen::Index i = 0; i < m.relation_table.size(); ++i) {
    m.relation_table.data()[i] = scale * gauss(rng);
  }
  return m;
}

}  // namespace kgq::test

#endif
