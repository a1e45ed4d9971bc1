#include "kgq/answer_continuous.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace kgq {

namespace {

const Eigen::VectorXd& term_embedding(const EmbeddingModel& m, const VarEmbeddings& embs,
                                      const Term& t, Eigen::VectorXd& anchor_buf) {
  if (t.is_anchor()) {
    anchor_buf = m.entity_table.row(t.id);
    return anchor_buf;
  }
  auto it = embs.find(t.id);
  if (it == embs.end()) {
    throw Error("co_objective: missing embedding for variable id " + std::to_string(t.id));
  }
  return it->second;
}

struct ConjunctEval {
  std::vector<double> atom_scores;      // calibrated, in atom order
  std::vector<double> fold;             // running t-norm fold
  double value = 0.0;
};

ConjunctEval eval_conjunct(const EmbeddingModel& m, const Conjunction& c,
                           const VarEmbeddings& embs, TNormKind kind) {
  ConjunctEval ev;
  Eigen::VectorXd buf_s, buf_o;
  for (const Atom& a : c.atoms) {
    const Eigen::VectorXd& s = term_embedding(m, embs, a.subject, buf_s);
    const Eigen::VectorXd& o = term_embedding(m, embs, a.object, buf_o);
    ev.atom_scores.push_back(logistic_scalar(m, raw_score(m, a.p, s, o)));
  }
  ev.fold.resize(ev.atom_scores.size());
  ev.fold[0] = ev.atom_scores[0];
  for (std::size_t i = 1; i < ev.atom_scores.size(); ++i) {
    ev.fold[i] = tnorm(kind, ev.fold[i - 1], ev.atom_scores[i]);
  }
  ev.value = ev.fold.back();
  return ev;
}

}  // namespace

double co_objective(const EmbeddingModel& m, const DnfQuery& q, const VarEmbeddings& embs,
                    TNormKind kind) {
  if (q.disjuncts.empty()) throw Error("co_objective: query has no disjuncts");
  double acc = 0.0;
  for (std::size_t j = 0; j < q.disjuncts.size(); ++j) {
    const double dj = eval_conjunct(m, q.disjuncts[j], embs, kind).value;
    acc = j == 0 ? dj : tconorm(kind, acc, dj);
  }
  return acc;
}

double co_objective_grad(const EmbeddingModel& m, const DnfQuery& q, const VarEmbeddings& embs,
                         TNormKind kind, VarEmbeddings* grads) {
  if (q.disjuncts.empty()) throw Error("co_objective: query has no disjuncts");
  grads->clear();
  for (const auto& [v, e] : embs) (*grads)[v] = Eigen::VectorXd::Zero(m.rank);

  // Forward.
  std::vector<ConjunctEval> evals;
  evals.reserve(q.disjuncts.size());
  for (const Conjunction& c : q.disjuncts) evals.push_back(eval_conjunct(m, c, embs, kind));

  std::vector<double> disj_fold(evals.size());
  disj_fold[0] = evals[0].value;
  for (std::size_t j = 1; j < evals.size(); ++j) {
    disj_fold[j] = tconorm(kind, disj_fold[j - 1], evals[j].value);
  }

  // Backward through the t-conorm fold.
  std::vector<double> d_disj(evals.size(), 0.0);
  double carry = 1.0;  // d objective / d disj_fold[j]
  for (std::size_t j = evals.size(); j-- > 1;) {
    BinaryGrad g = tconorm_grad(kind, disj_fold[j - 1], evals[j].value);
    d_disj[j] = carry * g.dy;
    carry *= g.dx;
  }
  d_disj[0] = carry;

  // Backward through each conjunct's t-norm fold and its atoms.
  Eigen::VectorXd buf_s, buf_o;
  for (std::size_t j = 0; j < evals.size(); ++j) {
    const Conjunction& c = q.disjuncts[j];
    const ConjunctEval& ev = evals[j];
    std::vector<double> d_atom(ev.atom_scores.size(), 0.0);
    double c_carry = d_disj[j];
    for (std::size_t i = ev.atom_scores.size(); i-- > 1;) {
      BinaryGrad g = tnorm_grad(kind, ev.fold[i - 1], ev.atom_scores[i]);
      d_atom[i] = c_carry * g.dy;
      c_carry *= g.dx;
    }
    d_atom[0] = c_carry;

    for (std::size_t i = 0; i < c.atoms.size(); ++i) {
      if (d_atom[i] == 0.0) continue;
      const Atom& a = c.atoms[i];
      // d score / d raw for the logistic squashing.
      const double s_cal = ev.atom_scores[i];
      const double d_raw = d_atom[i] * s_cal * (1.0 - s_cal) / m.calibration.temperature;
      const Eigen::VectorXd& s = term_embedding(m, embs, a.subject, buf_s);
      const Eigen::VectorXd& o = term_embedding(m, embs, a.object, buf_o);
      if (a.subject.is_var()) {
        (*grads)[a.subject.id] += d_raw * subject_grad(m, a.p, o);
      }
      (*grads)[a.object.id] += d_raw * combine_subject(m, a.p, s);
    }
  }
  return disj_fold.back();
}

namespace {

std::vector<VarId> optimizable_vars(const Conjunction& c) {
  std::vector<VarId> vars = conjunction_vars(c);
  // Target included: it takes part in the joint maximization even though it
  // is swept over all entities afterwards.
  return vars;
}

struct AdamState {
  VarEmbeddings m1, m2;
  int t = 0;
};

void adam_ascend(const AdamParams& p, AdamState& st, VarEmbeddings& embs,
                 const VarEmbeddings& grads) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(p.beta1, st.t);
  const double bc2 = 1.0 - std::pow(p.beta2, st.t);
  for (auto& [v, emb] : embs) {
    const Eigen::VectorXd& g = grads.at(v);
    Eigen::VectorXd& m1 = st.m1[v];
    Eigen::VectorXd& m2 = st.m2[v];
    if (m1.size() == 0) m1 = Eigen::VectorXd::Zero(emb.size());
    if (m2.size() == 0) m2 = Eigen::VectorXd::Zero(emb.size());
    m1 = p.beta1 * m1 + (1.0 - p.beta1) * g;
    m2 = (p.beta2 * m2.array() + (1.0 - p.beta2) * g.array().square()).matrix();
    emb.array() += p.lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + p.eps);
  }
}

}  // namespace

AnswerRanking answer_continuous(const EmbeddingModel& m, const DnfQuery& q,
                                const ContinuousConfig& cfg, ContinuousDiag* diag) {
  if (q.disjuncts.empty()) throw Error("answer_continuous: query has no disjuncts");
  const auto n_entities = m.num_entities();
  // Variable init matches the entity-table scale.
  const double init_scale =
      std::sqrt(m.entity_table.array().square().mean() + 1e-30);

  AnswerRanking out;
  for (std::size_t j = 0; j < q.disjuncts.size(); ++j) {
    const Conjunction& conj = q.disjuncts[j];
    const std::vector<VarId> vars = optimizable_vars(conj);
    const bool has_bound = std::any_of(vars.begin(), vars.end(),
                                       [](VarId v) { return v != kTargetVar; });

    DnfQuery sub;
    sub.var_names = q.var_names;
    sub.disjuncts = {conj};

    VarEmbeddings best_embs;
    double best_obj = -1.0;
    const int restarts = std::max(1, cfg.num_restarts);
    for (int r = 0; r < (has_bound ? restarts : 1); ++r) {
      std::mt19937_64 rng(cfg.init_seed + 0x1000003ull * j + r);
      std::normal_distribution<double> gauss(0.0, 1.0);
      VarEmbeddings embs;
      for (VarId v : vars) {
        Eigen::VectorXd e(m.rank);
        for (int i = 0; i < m.rank; ++i) e(i) = init_scale * gauss(rng);
        embs[v] = std::move(e);
      }

      std::vector<double> history;
      if (has_bound && cfg.max_iters > 0) {
        AdamState adam;
        VarEmbeddings grads;
        std::vector<double> best_so_far;
        for (int it = 0; it < cfg.max_iters; ++it) {
          const double obj = co_objective_grad(m, sub, embs, cfg.tnorm, &grads);
          if (!std::isfinite(obj)) {
            throw Error("answer_continuous: non-finite objective at iteration " +
                        std::to_string(it));
          }
          history.push_back(obj);
          best_so_far.push_back(best_so_far.empty() ? obj
                                                    : std::max(best_so_far.back(), obj));
          if (static_cast<int>(best_so_far.size()) > cfg.convergence_window &&
              best_so_far.back() - best_so_far[best_so_far.size() - 1 -
                                               cfg.convergence_window] <
                  cfg.convergence_tol) {
            break;
          }
          adam_ascend(cfg.adam, adam, embs, grads);
        }
      }
      if (diag) diag->objective_history.push_back(history);

      const double final_obj = co_objective(m, sub, embs, cfg.tnorm);
      if (final_obj > best_obj) {
        best_obj = final_obj;
        best_embs = embs;
      }
    }

    // Target sweep: atoms touching the target score all entities at once,
    // other atoms contribute their fixed scalar; fold in atom order.
    Eigen::VectorXd dscores;
    bool first_atom = true;
    Eigen::VectorXd buf_s, buf_o;
    for (const Atom& a : conj.atoms) {
      Eigen::VectorXd atom_vec;
      if (a.object.id == kTargetVar) {
        const Eigen::VectorXd& s = term_embedding(m, best_embs, a.subject, buf_s);
        const Eigen::VectorXd raw = score_all_objects(m, a.p, s);
        atom_vec = raw.unaryExpr([&](double x) { return logistic_scalar(m, x); });
      } else {
        const Eigen::VectorXd& s = term_embedding(m, best_embs, a.subject, buf_s);
        const Eigen::VectorXd& o = term_embedding(m, best_embs, a.object, buf_o);
        const double sc = logistic_scalar(m, raw_score(m, a.p, s, o));
        atom_vec = Eigen::VectorXd::Constant(n_entities, sc);
      }
      if (first_atom) {
        dscores = atom_vec;
        first_atom = false;
      } else {
        for (Eigen::Index e = 0; e < n_entities; ++e) {
          dscores(e) = tnorm(cfg.tnorm, dscores(e), atom_vec(e));
        }
      }
    }

    if (j == 0) {
      out.scores = dscores;
    } else {
      for (Eigen::Index e = 0; e < n_entities; ++e) {
        out.scores(e) = tconorm(cfg.tnorm, out.scores(e), dscores(e));
      }
    }
  }
  return out;
}

}  // namespace kgq
