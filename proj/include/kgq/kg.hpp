#ifndef KGQ_KG_HPP
#define KGQ_KG_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgq {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Entity and relation vocabularies with dense 0-based ids assigned in first
// occurrence order. Every base relation with id i has a reciprocal relation
// with id i + num_base_relations, named "inv_" + name.
struct Vocab {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;  // base relations, then reciprocals
  std::unordered_map<std::string, EntityId> entity_ids;
  std::unordered_map<std::string, RelationId> relation_ids;
  std::size_t num_base_relations = 0;

  std::size_t num_entities() const { return entity_names.size(); }
  std::size_t num_relations() const { return relation_names.size(); }

  bool is_reciprocal(RelationId p) const { return p >= num_base_relations; }
  RelationId reciprocal(RelationId p) const {
    return is_reciprocal(p) ? p - static_cast<RelationId>(num_base_relations)
                            : p + static_cast<RelationId>(num_base_relations);
  }

  EntityId entity(const std::string& name) const;
  RelationId relation(const std::string& name) const;
  EntityId add_entity(const std::string& name);
  RelationId add_base_relation(const std::string& name);
  // Appends the inv_* names once all base relations are known.
  void finalize_reciprocals();
};

struct Triple {
  EntityId s = 0;
  RelationId p = 0;
  EntityId o = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Which split union a lookup runs against.
enum class Graph { Train, TrainValid, Full };

struct KnowledgeGraph {
  Vocab vocab;
  // Each split stores reciprocal triples alongside the base ones.
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;

  const std::vector<Triple>& split(Graph g, int index) const;

  // Sorted object list for (s,p) over the selected split union; empty when
  // there is no match. Also exposed per entity as an outgoing edge list.
  const std::vector<EntityId>& objects(Graph g, EntityId s, RelationId p) const;
  const std::vector<std::pair<RelationId, EntityId>>& out_edges(Graph g, EntityId s) const;
  bool has_triple(Graph g, EntityId s, RelationId p, EntityId o) const;

  // Builds the adjacency indices; called by the loaders.
  void build_index();

 private:
  struct Index {
    std::unordered_map<std::uint64_t, std::vector<EntityId>> by_sp;
    std::vector<std::vector<std::pair<RelationId, EntityId>>> by_s;
  };
  Index index_[3];
};

// answers(kg, g, s, p) = { o : <s,p,o> in the split union g }.
std::vector<EntityId> answers(const KnowledgeGraph& kg, Graph g, EntityId s, RelationId p);

// Loads three TSV files of `subject<TAB>relation<TAB>object` lines, builds the
// union vocab, dedups each split and materializes reciprocal triples. Throws
// Error on malformed lines (with file and line number) or an empty train split.
KnowledgeGraph load_kg(const std::filesystem::path& train_path,
                       const std::filesystem::path& valid_path,
                       const std::filesystem::path& test_path);

// Variant for id-mapped releases: entity2id.txt / relation2id.txt hold
// `name<TAB>id` lines (an optional leading count line is skipped) and the
// split files hold `s p o` integer ids.
KnowledgeGraph load_kg_id_mapped(const std::filesystem::path& dir,
                                 const std::filesystem::path& train_path,
                                 const std::filesystem::path& valid_path,
                                 const std::filesystem::path& test_path);

// Writes base triples (reciprocals are regenerated on load) so that
// load_kg(save_kg(kg)) reproduces ids and triple sets exactly.
void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& dir);

// JSON vocab dump with a format-version header.
void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace kgq

#endif
