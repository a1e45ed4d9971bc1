#include "kgq/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace kgq {

const char* to_string(Scorer s) {
  return s == Scorer::ComplEx ? "complex" : "distmult";
}

Scorer scorer_from_string(const std::string& name) {
  if (name == "complex") return Scorer::ComplEx;
  if (name == "distmult") return Scorer::DistMult;
  throw Error("unknown scorer '" + name + "' (expected complex or distmult)");
}

const char* to_string(Calibration c) {
  return c == Calibration::Logistic ? "logistic" : "minmax";
}

Calibration calibration_from_string(const std::string& name) {
  if (name == "logistic") return Calibration::Logistic;
  if (name == "minmax") return Calibration::MinMaxPerCall;
  throw Error("unknown calibration '" + name + "' (expected logistic or minmax)");
}

namespace {

void check_rank(const EmbeddingModel& m, const Eigen::VectorXd& v, const char* what) {
  if (v.size() != m.rank) {
    throw Error(std::string(what) + ": expected dimension " + std::to_string(m.rank) + ", got " +
                std::to_string(v.size()));
  }
}

}  // namespace

Eigen::VectorXd combine_subject(const EmbeddingModel& m, RelationId p,
                                const Eigen::VectorXd& s_emb) {
  check_rank(m, s_emb, "combine_subject");
  const Eigen::VectorXd w = m.relation_table.row(p);
  if (m.scorer == Scorer::DistMult) {
    return s_emb.cwiseProduct(w);
  }
  // ComplEx, (re | im) halves: q = s * w (complex elementwise product). The
  // raw score Re(<s, w, conj(o)>) is then q_re . o_re + q_im . o_im.
  const int h = m.rank / 2;
  Eigen::VectorXd q(m.rank);
  q.head(h) = s_emb.head(h).cwiseProduct(w.head(h)) - s_emb.tail(h).cwiseProduct(w.tail(h));
  q.tail(h) = s_emb.head(h).cwiseProduct(w.tail(h)) + s_emb.tail(h).cwiseProduct(w.head(h));
  return q;
}

Eigen::VectorXd subject_grad(const EmbeddingModel& m, RelationId p,
                             const Eigen::VectorXd& o_emb) {
  check_rank(m, o_emb, "subject_grad");
  const Eigen::VectorXd w = m.relation_table.row(p);
  if (m.scorer == Scorer::DistMult) {
    return w.cwiseProduct(o_emb);
  }
  // d/ds Re(s * c) with c = w * conj(o): (Re c | -Im c).
  const int h = m.rank / 2;
  Eigen::VectorXd g(m.rank);
  g.head(h) = w.head(h).cwiseProduct(o_emb.head(h)) + w.tail(h).cwiseProduct(o_emb.tail(h));
  g.tail(h) = w.head(h).cwiseProduct(o_emb.tail(h)) - w.tail(h).cwiseProduct(o_emb.head(h));
  return g;
}

double raw_score(const EmbeddingModel& m, RelationId p, const Eigen::VectorXd& s_emb,
                 const Eigen::VectorXd& o_emb) {
  check_rank(m, o_emb, "raw_score");
  return combine_subject(m, p, s_emb).dot(o_emb);
}

Eigen::VectorXd score_all_objects(const EmbeddingModel& m, RelationId p,
                                  const Eigen::VectorXd& s_emb) {
  return m.entity_table * combine_subject(m, p, s_emb);
}

Eigen::VectorXd calibrate(const EmbeddingModel& m, const Eigen::VectorXd& raw) {
  if (m.calibration.kind == Calibration::Logistic) {
    const double t = m.calibration.temperature;
    return raw.unaryExpr([t](double x) { return 1.0 / (1.0 + std::exp(-x / t)); });
  }
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  if (hi - lo <= 0.0) return Eigen::VectorXd::Constant(raw.size(), 0.5);
  return (raw.array() - lo) / (hi - lo);
}

double logistic_scalar(const EmbeddingModel& m, double raw) {
  return 1.0 / (1.0 + std::exp(-raw / m.calibration.temperature));
}

double n3_row_term(const EmbeddingModel& m, const Eigen::VectorXd& row) {
  if (m.scorer == Scorer::DistMult) {
    return row.array().abs().cube().sum();
  }
  const int h = m.rank / 2;
  return (row.head(h).array().square() + row.tail(h).array().square()).sqrt().cube().sum();
}

Eigen::VectorXd n3_row_grad(const EmbeddingModel& m, const Eigen::VectorXd& row) {
  if (m.scorer == Scorer::DistMult) {
    return (3.0 * row.array().abs() * row.array()).matrix();
  }
  const int h = m.rank / 2;
  Eigen::ArrayXd mod = (row.head(h).array().square() + row.tail(h).array().square()).sqrt();
  Eigen::VectorXd g(row.size());
  g.head(h) = (3.0 * mod * row.head(h).array()).matrix();
  g.tail(h) = (3.0 * mod * row.tail(h).array()).matrix();
  return g;
}

double n3_penalty(const EmbeddingModel& m, std::span<const Triple> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const Triple& t : batch) {
    total += n3_row_term(m, m.entity_table.row(t.s));
    total += n3_row_term(m, m.relation_table.row(t.p));
    total += n3_row_term(m, m.entity_table.row(t.o));
  }
  return total / static_cast<double>(batch.size());
}

namespace {

constexpr char kMagic[4] = {'K', 'G', 'Q', 'M'};
constexpr std::uint32_t kModelFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated model checkpoint: " + path.string());
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& mat) {
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      write_pod(out, mat(i, j));
    }
  }
}

void read_matrix(std::ifstream& in, Eigen::MatrixXd& mat, const std::filesystem::path& path) {
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      read_pod(in, mat(i, j), path);
    }
  }
}

}  // namespace

void save_model(const EmbeddingModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model checkpoint: " + path.string());
  out.write(kMagic, 4);
  write_pod(out, kModelFormatVersion);
  write_pod(out, static_cast<std::uint8_t>(m.scorer == Scorer::ComplEx ? 0 : 1));
  write_pod(out, static_cast<std::uint8_t>(m.calibration.kind == Calibration::Logistic ? 0 : 1));
  write_pod(out, m.calibration.temperature);
  write_pod(out, static_cast<std::uint32_t>(m.rank));
  write_pod(out, static_cast<std::uint64_t>(m.entity_table.rows()));
  write_pod(out, static_cast<std::uint64_t>(m.relation_table.rows()));
  write_matrix(out, m.entity_table);
  write_matrix(out, m.relation_table);
  if (!out) throw Error("write failed: " + path.string());
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error("not a model checkpoint: " + path.string());
  }
  std::uint32_t version;
  read_pod(in, version, path);
  if (version != kModelFormatVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + ": " +
                path.string());
  }
  std::uint8_t scorer_tag, calib_tag;
  read_pod(in, scorer_tag, path);
  read_pod(in, calib_tag, path);
  EmbeddingModel m;
  if (scorer_tag == 0) {
    m.scorer = Scorer::ComplEx;
  } else if (scorer_tag == 1) {
    m.scorer = Scorer::DistMult;
  } else {
    throw Error("unsupported scorer tag " + std::to_string(scorer_tag) + ": " + path.string());
  }
  if (calib_tag > 1) {
    throw Error("unsupported calibration tag " + std::to_string(calib_tag) + ": " + path.string());
  }
  m.calibration.kind = calib_tag == 0 ? Calibration::Logistic : Calibration::MinMaxPerCall;
  read_pod(in, m.calibration.temperature, path);
  std::uint32_t rank;
  std::uint64_t n_ent, n_rel;
  read_pod(in, rank, path);
  read_pod(in, n_ent, path);
  read_pod(in, n_rel, path);
  m.rank = static_cast<int>(rank);
  m.entity_table.resize(static_cast<Eigen::Index>(n_ent), m.rank);
  m.relation_table.resize(static_cast<Eigen::Index>(n_rel), m.rank);
  read_matrix(in, m.entity_table, path);
  read_matrix(in, m.relation_table, path);
  return m;
}

}  // namespace kgq
