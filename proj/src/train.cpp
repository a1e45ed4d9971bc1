#include "kgq/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace kgq {

namespace {

// Chain rule from d loss / d combine_subject(s, w) back to the s and w rows.
void backprop_combine(const EmbeddingModel& m, const Eigen::VectorXd& s_emb,
                      const Eigen::VectorXd& w, const Eigen::VectorXd& g, Eigen::VectorXd& d_s,
                      Eigen::VectorXd& d_w) {
  if (m.scorer == Scorer::DistMult) {
    d_s = g.cwiseProduct(w);
    d_w = g.cwiseProduct(s_emb);
    return;
  }
  const int h = m.rank / 2;
  auto gr = g.head(h).array(), gi = g.tail(h).array();
  auto sr = s_emb.head(h).array(), si = s_emb.tail(h).array();
  auto wr = w.head(h).array(), wi = w.tail(h).array();
  d_s.resize(m.rank);
  d_w.resize(m.rank);
  // q_re = sr*wr - si*wi, q_im = sr*wi + si*wr.
  d_s.head(h) = (gr * wr + gi * wi).matrix();
  d_s.tail(h) = (-gr * wi + gi * wr).matrix();
  d_w.head(h) = (gr * sr + gi * si).matrix();
  d_w.tail(h) = (-gr * si + gi * sr).matrix();
}

}  // namespace

LossGrads training_loss(const EmbeddingModel& m, std::span<const Triple> batch,
                        double reg_coeff) {
  if (batch.empty()) throw Error("training_loss: empty batch");
  const auto b = static_cast<double>(batch.size());

  LossGrads out;
  out.d_entities = Eigen::MatrixXd::Zero(m.entity_table.rows(), m.rank);
  out.d_relations = Eigen::MatrixXd::Zero(m.relation_table.rows(), m.rank);

  for (const Triple& t : batch) {
    const Eigen::VectorXd s_emb = m.entity_table.row(t.s);
    const Eigen::VectorXd w = m.relation_table.row(t.p);
    const Eigen::VectorXd q = combine_subject(m, t.p, s_emb);
    Eigen::VectorXd scores = m.entity_table * q;

    const double mx = scores.maxCoeff();
    Eigen::VectorXd probs = (scores.array() - mx).exp();
    const double z = probs.sum();
    probs /= z;
    out.cross_entropy += (std::log(z) + mx - scores(t.o)) / b;

    // d CE / d scores = softmax - onehot(o).
    Eigen::VectorXd g_scores = probs;
    g_scores(t.o) -= 1.0;
    g_scores /= b;

    // scores = E q: gradients flow to every entity row and to q.
    out.d_entities.noalias() += g_scores * q.transpose();
    const Eigen::VectorXd g_q = m.entity_table.transpose() * g_scores;
    Eigen::VectorXd d_s, d_w;
    backprop_combine(m, s_emb, w, g_q, d_s, d_w);
    out.d_entities.row(t.s) += d_s.transpose();
    out.d_relations.row(t.p) += d_w.transpose();

    // N3 on the three factor rows of the positive triple.
    const double scale = reg_coeff / b;
    out.reg += scale * (n3_row_term(m, s_emb) + n3_row_term(m, w) +
                        n3_row_term(m, m.entity_table.row(t.o)));
    out.d_entities.row(t.s) += scale * n3_row_grad(m, s_emb).transpose();
    out.d_relations.row(t.p) += scale * n3_row_grad(m, w).transpose();
    out.d_entities.row(t.o) +=
        scale * n3_row_grad(m, m.entity_table.row(t.o)).transpose();
  }

  out.loss = out.cross_entropy + out.reg;
  return out;
}

double training_loss_value(const EmbeddingModel& m, std::span<const Triple> batch,
                           double reg_coeff) {
  if (batch.empty()) throw Error("training_loss: empty batch");
  const auto b = static_cast<double>(batch.size());
  double ce = 0.0, reg = 0.0;
  for (const Triple& t : batch) {
    const Eigen::VectorXd s_emb = m.entity_table.row(t.s);
    const Eigen::VectorXd scores = score_all_objects(m, t.p, s_emb);
    const double mx = scores.maxCoeff();
    ce += (std::log((scores.array() - mx).exp().sum()) + mx - scores(t.o)) / b;
    reg += reg_coeff / b *
           (n3_row_term(m, s_emb) + n3_row_term(m, m.relation_table.row(t.p)) +
            n3_row_term(m, m.entity_table.row(t.o)));
  }
  return ce + reg;
}

double hits_at_3(const EmbeddingModel& m, const KnowledgeGraph& kg,
                 std::span<const Triple> queries, Graph filter_graph) {
  if (queries.empty()) return -1.0;
  std::size_t hits = 0;
  for (const Triple& t : queries) {
    const Eigen::VectorXd scores = score_all_objects(m, t.p, m.entity_table.row(t.s));
    const auto& known = kg.objects(filter_graph, t.s, t.p);
    const double gold = scores(t.o);
    // Pessimistic ties: equal-scored competitors rank above.
    int rank = 1;
    for (Eigen::Index e = 0; e < scores.size(); ++e) {
      if (static_cast<EntityId>(e) == t.o) continue;
      if (scores(e) < gold) continue;
      if (std::binary_search(known.begin(), known.end(), static_cast<EntityId>(e))) continue;
      ++rank;
      if (rank > 3) break;
    }
    if (rank <= 3) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

EmbeddingModel init_model(const KnowledgeGraph& kg, const TrainConfig& cfg) {
  if (cfg.scorer == Scorer::ComplEx && cfg.rank % 2 != 0) {
    throw Error("ComplEx rank must be even, got " + std::to_string(cfg.rank));
  }
  if (cfg.rank <= 0) throw Error("rank must be positive");
  EmbeddingModel m;
  m.scorer = cfg.scorer;
  m.rank = cfg.rank;
  m.calibration = cfg.calibration;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](Eigen::MatrixXd& table, Eigen::Index rows) {
    table.resize(rows, cfg.rank);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (int j = 0; j < cfg.rank; ++j) table(i, j) = cfg.init_scale * gauss(rng);
    }
  };
  fill(m.entity_table, static_cast<Eigen::Index>(kg.vocab.num_entities()));
  fill(m.relation_table, static_cast<Eigen::Index>(kg.vocab.num_relations()));
  return m;
}

TrainResult train(const KnowledgeGraph& kg, const TrainConfig& cfg) {
  if (kg.train.empty()) throw Error("train: empty train split");
  if (cfg.batch_size <= 0) throw Error("batch_size must be positive");

  TrainResult result;
  result.model = init_model(kg, cfg);
  EmbeddingModel& m = result.model;

  Eigen::MatrixXd acc_e = Eigen::MatrixXd::Zero(m.entity_table.rows(), m.rank);
  Eigen::MatrixXd acc_r = Eigen::MatrixXd::Zero(m.relation_table.rows(), m.rank);

  std::vector<std::size_t> perm(kg.train.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  EmbeddingModel best = m;
  double best_h3 = -1.0;
  int evals_since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    double epoch_ce = 0.0, epoch_reg = 0.0;
    std::size_t n_batches = 0;

    std::vector<Triple> batch;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
      batch.clear();
      const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(kg.train[perm[i]]);

      LossGrads lg = training_loss(m, batch, cfg.reg_coeff);
      if (!std::isfinite(lg.loss)) {
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    " (learning_rate=" + std::to_string(cfg.learning_rate) +
                    ", reg_coeff=" + std::to_string(cfg.reg_coeff) + ")");
      }
      epoch_ce += lg.cross_entropy;
      epoch_reg += lg.reg;
      ++n_batches;

      acc_e.array() += lg.d_entities.array().square();
      acc_r.array() += lg.d_relations.array().square();
      m.entity_table.array() -= cfg.learning_rate * lg.d_entities.array() /
                                (acc_e.array().sqrt() + cfg.adagrad_eps);
      m.relation_table.array() -= cfg.learning_rate * lg.d_relations.array() /
                                  (acc_r.array().sqrt() + cfg.adagrad_eps);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_ce / static_cast<double>(n_batches);
    stats.reg = epoch_reg / static_cast<double>(n_batches);

    const bool eval_now = !kg.valid.empty() && (epoch % cfg.eval_every == 0);
    if (eval_now) {
      stats.valid_h3 = hits_at_3(m, kg, kg.valid, Graph::TrainValid);
      if (stats.valid_h3 > best_h3) {
        best_h3 = stats.valid_h3;
        best = m;
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
    }
    result.log.push_back(stats);

    if (cfg.early_stopping && eval_now && evals_since_best >= cfg.patience) break;
  }

  if (cfg.early_stopping && best_h3 >= 0.0) {
    result.model = best;
    result.best_valid_h3 = best_h3;
  } else if (!kg.valid.empty() && cfg.epochs > 0) {
    result.best_valid_h3 = hits_at_3(result.model, kg, kg.valid, Graph::TrainValid);
  }
  return result;
}

void write_train_log_csv(const std::vector<EpochStats>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write training log: " + path.string());
  out << "epoch,loss,reg,valid_h3\n";
  for (const EpochStats& s : log) {
    out << s.epoch << ',' << s.loss << ',' << s.reg << ',';
    if (s.valid_h3 >= 0.0) out << s.valid_h3;
    out << '\n';
  }
}

}  // namespace kgq
