#include "kgq/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace kgq {

namespace {

constexpr int kVocabFormatVersion = 1;

std::uint64_t sp_key(EntityId s, RelationId p) {
  return (static_cast<std::uint64_t>(s) << 32) | p;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string chomp(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  return line;
}

struct RawTriple {
  std::string s, p, o;
};

std::vector<RawTriple> read_tsv_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triple file: " + path.string());
  std::vector<RawTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw Error(path.string() + ":" + std::to_string(lineno) +
                  ": expected 3 tab-separated fields");
    }
    out.push_back({fields[0], fields[1], fields[2]});
  }
  return out;
}

// Dedups, appends reciprocals and sorts nothing: first-occurrence triple order
// is kept so save/load round-trips are exact.
std::vector<Triple> encode_split(const std::vector<RawTriple>& raw, Vocab& vocab,
                                 bool grow_vocab) {
  std::vector<Triple> base;
  std::set<Triple> seen;
  for (const auto& rt : raw) {
    Triple t;
    if (grow_vocab) {
      t.s = vocab.add_entity(rt.s);
      t.p = vocab.add_base_relation(rt.p);
      t.o = vocab.add_entity(rt.o);
    } else {
      t.s = vocab.entity(rt.s);
      t.p = vocab.relation(rt.p);
      t.o = vocab.entity(rt.o);
    }
    if (seen.insert(t).second) base.push_back(t);
  }
  return base;
}

void append_reciprocals(std::vector<Triple>& triples, const Vocab& vocab) {
  const std::size_t n = triples.size();
  triples.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Triple& t = triples[i];
    triples.push_back({t.o, vocab.reciprocal(t.p), t.s});
  }
}

}  // namespace

EntityId Vocab::entity(const std::string& name) const {
  auto it = entity_ids.find(name);
  if (it == entity_ids.end()) throw Error("unknown entity name: " + name);
  return it->second;
}

RelationId Vocab::relation(const std::string& name) const {
  auto it = relation_ids.find(name);
  if (it == relation_ids.end()) throw Error("unknown relation name: " + name);
  return it->second;
}

EntityId Vocab::add_entity(const std::string& name) {
  auto it = entity_ids.find(name);
  if (it != entity_ids.end()) return it->second;
  EntityId id = static_cast<EntityId>(entity_names.size());
  entity_names.push_back(name);
  entity_ids.emplace(name, id);
  return id;
}

RelationId Vocab::add_base_relation(const std::string& name) {
  auto it = relation_ids.find(name);
  if (it != relation_ids.end()) return it->second;
  RelationId id = static_cast<RelationId>(relation_names.size());
  relation_names.push_back(name);
  relation_ids.emplace(name, id);
  return id;
}

void Vocab::finalize_reciprocals() {
  num_base_relations = relation_names.size();
  for (std::size_t i = 0; i < num_base_relations; ++i) {
    std::string name = "inv_" + relation_names[i];
    RelationId id = static_cast<RelationId>(relation_names.size());
    relation_names.push_back(name);
    relation_ids.emplace(std::move(name), id);
  }
}

const std::vector<Triple>& KnowledgeGraph::split(Graph g, int index) const {
  (void)g;
  switch (index) {
    case 0: return train;
    case 1: return valid;
    default: return test;
  }
}

void KnowledgeGraph::build_index() {
  const std::vector<Triple>* splits[3] = {&train, &valid, &test};
  for (int g = 0; g < 3; ++g) {
    Index& idx = index_[g];
    idx.by_sp.clear();
    idx.by_s.assign(vocab.num_entities(), {});
    for (int s = 0; s <= g; ++s) {
      for (const Triple& t : *splits[s]) {
        idx.by_sp[sp_key(t.s, t.p)].push_back(t.o);
        idx.by_s[t.s].emplace_back(t.p, t.o);
      }
    }
    for (auto& [key, objs] : idx.by_sp) {
      std::sort(objs.begin(), objs.end());
      objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
    }
    for (auto& edges : idx.by_s) {
      std::sort(edges.begin(), edges.end());
      edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    }
  }
}

const std::vector<EntityId>& KnowledgeGraph::objects(Graph g, EntityId s, RelationId p) const {
  static const std::vector<EntityId> kEmpty;
  const Index& idx = index_[static_cast<int>(g)];
  auto it = idx.by_sp.find(sp_key(s, p));
  return it == idx.by_sp.end() ? kEmpty : it->second;
}

const std::vector<std::pair<RelationId, EntityId>>& KnowledgeGraph::out_edges(Graph g,
                                                                              EntityId s) const {
  static const std::vector<std::pair<RelationId, EntityId>> kEmpty;
  const Index& idx = index_[static_cast<int>(g)];
  if (s >= idx.by_s.size()) return kEmpty;
  return idx.by_s[s];
}

bool KnowledgeGraph::has_triple(Graph g, EntityId s, RelationId p, EntityId o) const {
  const auto& objs = objects(g, s, p);
  return std::binary_search(objs.begin(), objs.end(), o);
}

std::vector<EntityId> answers(const KnowledgeGraph& kg, Graph g, EntityId s, RelationId p) {
  if (s >= kg.vocab.num_entities()) throw Error("entity id out of range");
  if (p >= kg.vocab.num_relations()) throw Error("relation id out of range");
  return kg.objects(g, s, p);
}

KnowledgeGraph load_kg(const std::filesystem::path& train_path,
                       const std::filesystem::path& valid_path,
                       const std::filesystem::path& test_path) {
  auto raw_train = read_tsv_triples(train_path);
  auto raw_valid = read_tsv_triples(valid_path);
  auto raw_test = read_tsv_triples(test_path);
  if (raw_train.empty()) throw Error("empty split: " + train_path.string());

  KnowledgeGraph kg;
  // Vocab is the union of all splits, ids in first-occurrence order
  // (train lines first, then valid, then test).
  kg.train = encode_split(raw_train, kg.vocab, /*grow_vocab=*/true);
  kg.valid = encode_split(raw_valid, kg.vocab, /*grow_vocab=*/true);
  kg.test = encode_split(raw_test, kg.vocab, /*grow_vocab=*/true);
  kg.vocab.finalize_reciprocals();
  append_reciprocals(kg.train, kg.vocab);
  append_reciprocals(kg.valid, kg.vocab);
  append_reciprocals(kg.test, kg.vocab);
  kg.build_index();
  return kg;
}

namespace {

void read_id_map(const std::filesystem::path& path,
                 std::vector<std::pair<std::string, std::size_t>>& out) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open id map: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name;
    std::size_t id;
    if (!(ss >> name)) continue;
    if (!(ss >> id)) {
      // A bare count line is allowed once at the top.
      if (lineno == 1) continue;
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected `name id`");
    }
    out.emplace_back(name, id);
  }
}

std::vector<Triple> read_id_triples(const std::filesystem::path& path, std::size_t n_entities,
                                    std::size_t n_relations) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triple file: " + path.string());
  std::vector<Triple> out;
  std::set<Triple> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = chomp(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    unsigned long long s, p, o;
    if (!(ss >> s >> p >> o)) {
      if (lineno == 1) continue;  // optional count header
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected `s p o` ids");
    }
    if (s >= n_entities || o >= n_entities || p >= n_relations) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": id out of range");
    }
    Triple t{static_cast<EntityId>(s), static_cast<RelationId>(p), static_cast<EntityId>(o)};
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

}  // namespace

KnowledgeGraph load_kg_id_mapped(const std::filesystem::path& dir,
                                 const std::filesystem::path& train_path,
                                 const std::filesystem::path& valid_path,
                                 const std::filesystem::path& test_path) {
  std::vector<std::pair<std::string, std::size_t>> ents, rels;
  read_id_map(dir / "entity2id.txt", ents);
  read_id_map(dir / "relation2id.txt", rels);

  KnowledgeGraph kg;
  kg.vocab.entity_names.resize(ents.size());
  for (auto& [name, id] : ents) {
    if (id >= ents.size()) throw Error("entity2id.txt: id out of range for " + name);
    kg.vocab.entity_names[id] = name;
    kg.vocab.entity_ids.emplace(name, static_cast<EntityId>(id));
  }
  kg.vocab.relation_names.resize(rels.size());
  for (auto& [name, id] : rels) {
    if (id >= rels.size()) throw Error("relation2id.txt: id out of range for " + name);
    kg.vocab.relation_names[id] = name;
    kg.vocab.relation_ids.emplace(name, static_cast<RelationId>(id));
  }
  kg.vocab.finalize_reciprocals();

  std::size_t ne = kg.vocab.num_entities();
  std::size_t nr = kg.vocab.num_base_relations;
  kg.train = read_id_triples(train_path, ne, nr);
  if (kg.train.empty()) throw Error("empty split: " + train_path.string());
  kg.valid = read_id_triples(valid_path, ne, nr);
  kg.test = read_id_triples(test_path, ne, nr);
  append_reciprocals(kg.train, kg.vocab);
  append_reciprocals(kg.valid, kg.vocab);
  append_reciprocals(kg.test, kg.vocab);
  kg.build_index();
  return kg;
}

void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<Triple>* splits[3] = {&kg.train, &kg.valid, &kg.test};
  const char* names[3] = {"train.txt", "valid.txt", "test.txt"};
  for (int i = 0; i < 3; ++i) {
    std::ofstream out(dir / names[i]);
    if (!out) throw Error("cannot write " + (dir / names[i]).string());
    for (const Triple& t : *splits[i]) {
      if (kg.vocab.is_reciprocal(t.p)) continue;
      out << kg.vocab.entity_names[t.s] << '\t' << kg.vocab.relation_names[t.p] << '\t'
          << kg.vocab.entity_names[t.o] << '\n';
    }
  }
  save_vocab(kg.vocab, dir / "vocab.json");
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format_version"] = kVocabFormatVersion;
  j["entities"] = vocab.entity_names;
  j["base_relations"] = std::vector<std::string>(
      vocab.relation_names.begin(), vocab.relation_names.begin() + vocab.num_base_relations);
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocab: " + path.string());
  out << j.dump(2) << '\n';
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocab: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("vocab " + path.string() + ": " + e.what());
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != kVocabFormatVersion) {
    throw Error("vocab " + path.string() + ": unsupported format version");
  }
  Vocab vocab;
  for (const auto& name : j.at("entities")) vocab.add_entity(name.get<std::string>());
  for (const auto& name : j.at("base_relations")) vocab.add_base_relation(name.get<std::string>());
  vocab.finalize_reciprocals();
  return vocab;
}

}  // namespace kgq
