#include "kgq/answer_beam.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace kgq {

namespace {

// Calibrated object-score vectors are shared across states through a per-query
// memo keyed by (relation, subject entity): distinct expansions from the same
// node reuse one matrix-vector product.
class ScoreMemo {
 public:
  ScoreMemo(const EmbeddingModel& m) : model_(m) {}

  const Eigen::VectorXd& get(RelationId p, EntityId s) {
    auto key = (static_cast<std::uint64_t>(p) << 32) | s;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Eigen::VectorXd scores = calibrate(model_, score_all_objects(model_, p, model_.entity(s)));
    return cache_.emplace(key, std::move(scores)).first->second;
  }

 private:
  const EmbeddingModel& model_;
  std::map<std::uint64_t, Eigen::VectorXd> cache_;
};

std::vector<Eigen::Index> top_b_indices(const Eigen::VectorXd& scores, int b) {
  std::vector<Eigen::Index> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto keep = std::min<std::size_t>(b, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(),
                    [&](Eigen::Index a, Eigen::Index c) {
                      if (scores(a) != scores(c)) return scores(a) > scores(c);
                      return a < c;
                    });
  idx.resize(keep);
  return idx;
}

EntityId subject_entity(const Atom& atom, const BeamState& state) {
  if (atom.subject.is_anchor()) return atom.subject.id;
  const EntityId* e = state.lookup(atom.subject.id);
  if (!e) {
    throw Error("internal error: beam visited atom with unresolved subject variable");
  }
  return *e;
}

struct DisjunctResult {
  Eigen::VectorXd scores;
  std::vector<BeamState> states;
  std::vector<std::int32_t> winner;  // per entity, index into states
};

DisjunctResult answer_conjunct(const EmbeddingModel& m, const Conjunction& conj,
                               const BeamConfig& cfg, ScoreMemo& memo) {
  const auto n_entities = m.num_entities();
  std::vector<Atom> ordered = topo_order(conj);

  std::vector<Atom> target_atoms;
  std::vector<Atom> inner_atoms;
  for (const Atom& a : ordered) {
    (a.object.id == kTargetVar ? target_atoms : inner_atoms).push_back(a);
  }

  std::vector<BeamState> states(1);
  std::set<VarId> resolved;

  for (const Atom& atom : inner_atoms) {
    const bool expand = resolved.insert(atom.object.id).second;
    std::vector<BeamState> next;
    if (expand) next.reserve(states.size() * cfg.width);

    for (const BeamState& state : states) {
      const Eigen::VectorXd& scores = memo.get(atom.p, subject_entity(atom, state));
      if (expand) {
        for (Eigen::Index e : top_b_indices(scores, cfg.width)) {
          BeamState child = state;
          child.bind(atom.object.id, static_cast<EntityId>(e));
          child.score = tnorm(cfg.tnorm, child.score, scores(e));
          if (cfg.keep_traces) {
            child.trace.push_back({atom, static_cast<EntityId>(e), scores(e)});
          }
          next.push_back(std::move(child));
        }
      } else {
        BeamState updated = state;
        const EntityId e = *updated.lookup(atom.object.id);
        updated.score = tnorm(cfg.tnorm, updated.score, scores(e));
        if (cfg.keep_traces) updated.trace.push_back({atom, e, scores(e)});
        next.push_back(std::move(updated));
      }
    }

    if (next.size() > cfg.max_states) {
      std::stable_sort(next.begin(), next.end(),
                       [](const BeamState& a, const BeamState& b) { return a.score > b.score; });
      next.resize(cfg.max_states);
    }
    states = std::move(next);
  }

  // Target sweep: every entity is scored against every surviving state and
  // keeps the best one.
  DisjunctResult result;
  result.scores = Eigen::VectorXd::Constant(n_entities, -1.0);
  result.winner.assign(n_entities, -1);
  for (std::size_t si = 0; si < states.size(); ++si) {
    const BeamState& state = states[si];
    Eigen::VectorXd folded = Eigen::VectorXd::Constant(n_entities, state.score);
    for (const Atom& atom : target_atoms) {
      const Eigen::VectorXd& scores = memo.get(atom.p, subject_entity(atom, state));
      for (Eigen::Index e = 0; e < n_entities; ++e) {
        folded(e) = tnorm(cfg.tnorm, folded(e), scores(e));
      }
    }
    for (Eigen::Index e = 0; e < n_entities; ++e) {
      if (folded(e) > result.scores(e)) {
        result.scores(e) = folded(e);
        result.winner[e] = static_cast<std::int32_t>(si);
      }
    }
  }
  result.states = std::move(states);
  return result;
}

}  // namespace

AnswerRanking answer_beam(const EmbeddingModel& m, const DnfQuery& q, const BeamConfig& cfg) {
  if (cfg.width < 1) throw Error("beam width must be >= 1");
  if (q.disjuncts.empty()) throw Error("answer_beam: query has no disjuncts");
  const auto n_entities = m.num_entities();

  ScoreMemo memo(m);
  std::vector<DisjunctResult> parts;
  parts.reserve(q.disjuncts.size());
  for (const Conjunction& conj : q.disjuncts) {
    parts.push_back(answer_conjunct(m, conj, cfg, memo));
  }

  AnswerRanking out;
  out.scores = parts[0].scores;
  std::vector<int> best_disjunct(n_entities, 0);
  Eigen::VectorXd best_part = parts[0].scores;
  for (std::size_t d = 1; d < parts.size(); ++d) {
    for (Eigen::Index e = 0; e < n_entities; ++e) {
      out.scores(e) = tconorm(cfg.tnorm, out.scores(e), parts[d].scores(e));
      if (parts[d].scores(e) > best_part(e)) {
        best_part(e) = parts[d].scores(e);
        best_disjunct[e] = static_cast<int>(d);
      }
    }
  }

  if (cfg.keep_traces) {
    out.best_state.resize(n_entities);
    out.best_disjunct = best_disjunct;
    for (Eigen::Index e = 0; e < n_entities; ++e) {
      const DisjunctResult& part = parts[best_disjunct[e]];
      BeamState state = part.states[part.winner[e]];
      // Complete the trace with the target atoms evaluated at this entity.
      for (const Atom& atom : topo_order(q.disjuncts[best_disjunct[e]])) {
        if (atom.object.id != kTargetVar) continue;
        const Eigen::VectorXd& scores = memo.get(atom.p, subject_entity(atom, state));
        state.trace.push_back({atom, static_cast<EntityId>(e), scores(e)});
      }
      state.bind(kTargetVar, static_cast<EntityId>(e));
      state.score = part.scores(e);
      out.best_state[e] = std::move(state);
    }
  }
  return out;
}

ExplanationTable explain(const AnswerRanking& ranking, int top_n,
                         const std::optional<std::vector<EntityId>>& gold) {
  if (!ranking.has_traces()) {
    throw Error("explain: ranking was produced without traces (use the beam answerer)");
  }
  ExplanationTable table;
  table.has_gold = gold.has_value();
  if (top_n < 0) top_n = 0;

  std::set<VarId> bound;
  for (const BeamState& s : ranking.best_state) {
    for (const auto& [v, e] : s.substitution) {
      if (v != kTargetVar) bound.insert(v);
    }
  }
  table.bound_vars.assign(bound.begin(), bound.end());

  const std::vector<EntityId> order = ranked_entities(ranking.scores);
  const auto n = std::min<std::size_t>(top_n, order.size());
  for (std::size_t i = 0; i < n; ++i) {
    const EntityId e = order[i];
    const BeamState& state = ranking.best_state[e];
    ExplanationRow row;
    row.entity = e;
    row.rank = static_cast<int>(i) + 1;
    row.score = ranking.scores(e);
    if (gold) {
      row.correct = std::find(gold->begin(), gold->end(), e) != gold->end();
    }
    for (const auto& [v, ent] : state.substitution) {
      if (v != kTargetVar) row.assignments.emplace_back(v, ent);
    }
    row.atom_scores = state.trace;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string explanation_to_text(const ExplanationTable& table, const DnfQuery& q,
                                const Vocab& vocab) {
  auto var_name = [&](VarId v) {
    return v < q.var_names.size() ? q.var_names[v] : "V" + std::to_string(v);
  };

  std::vector<std::string> headers;
  for (VarId v : table.bound_vars) headers.push_back(var_name(v));
  headers.push_back(var_name(kTargetVar));
  headers.push_back("Rank");
  headers.push_back("Score");
  if (table.has_gold) headers.push_back("Correct");
  headers.push_back("Atoms");

  std::vector<std::vector<std::string>> cells;
  for (const ExplanationRow& row : table.rows) {
    std::vector<std::string> line;
    for (VarId v : table.bound_vars) {
      std::string val = "-";
      for (const auto& [var, ent] : row.assignments) {
        if (var == v) val = vocab.entity_names[ent];
      }
      line.push_back(val);
    }
    line.push_back(vocab.entity_names[row.entity]);
    line.push_back(std::to_string(row.rank));
    std::ostringstream sc;
    sc.precision(4);
    sc << std::fixed << row.score;
    line.push_back(sc.str());
    if (table.has_gold) line.push_back(row.correct ? "yes" : "no");
    std::string atoms;
    for (std::size_t i = 0; i < row.atom_scores.size(); ++i) {
      const TraceStep& step = row.atom_scores[i];
      std::ostringstream a;
      a.precision(3);
      a << std::fixed << print_atom(step.atom, q.var_names, vocab) << "=" << step.score;
      if (i) atoms += "  ";
      atoms += a.str();
    }
    line.push_back(atoms);
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    width[c] = headers[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size()) out << std::string(width[c] - line[c].size() + 2, ' ');
    }
    out << '\n';
  };
  emit(headers);
  std::vector<std::string> rule;
  for (std::size_t w : width) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& line : cells) emit(line);
  return out.str();
}

nlohmann::json explanation_to_json(const ExplanationTable& table, const DnfQuery& q,
                                   const Vocab& vocab) {
  auto var_name = [&](VarId v) {
    return v < q.var_names.size() ? q.var_names[v] : "V" + std::to_string(v);
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const ExplanationRow& row : table.rows) {
    nlohmann::json j;
    j["answer"] = vocab.entity_names[row.entity];
    j["rank"] = row.rank;
    j["score"] = row.score;
    if (table.has_gold) j["correct"] = row.correct;
    nlohmann::json assigns = nlohmann::json::object();
    for (const auto& [v, e] : row.assignments) {
      assigns[var_name(v)] = vocab.entity_names[e];
    }
    j["assignments"] = assigns;
    nlohmann::json atoms = nlohmann::json::array();
    for (const TraceStep& step : row.atom_scores) {
      atoms.push_back({{"atom", print_atom(step.atom, q.var_names, vocab)},
                       {"entity", vocab.entity_names[step.entity]},
                       {"score", step.score}});
    }
    j["atoms"] = atoms;
    rows.push_back(std::move(j));
  }
  return nlohmann::json{{"rows", rows}};
}

}  // namespace kgq
