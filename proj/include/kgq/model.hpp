#ifndef KGQ_MODEL_HPP
#define KGQ_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kgq/kg.hpp"

namespace kgq {

enum class Scorer { ComplEx, DistMult };

const char* to_string(Scorer s);
Scorer scorer_from_string(const std::string& name);

enum class Calibration { Logistic, MinMaxPerCall };

const char* to_string(Calibration c);
Calibration calibration_from_string(const std::string& name);

// Maps raw scores into [0,1]: Logistic applies sigma(x / temperature)
// elementwise; MinMaxPerCall rescales each score vector by its own range
// (an all-equal vector maps to 0.5).
struct CalibrationParams {
  Calibration kind = Calibration::Logistic;
  double temperature = 1.0;
};

// Entity/relation embedding tables of `rank` real dimensions each, row-indexed
// by vocab ids. For ComplEx the rank is even and a row stores the complex
// vector as (re_0..re_{k/2-1}, im_0..im_{k/2-1}); this layout is also what the
// checkpoint format records.
struct EmbeddingModel {
  Scorer scorer = Scorer::ComplEx;
  int rank = 0;
  Eigen::MatrixXd entity_table;    // |E| x rank
  Eigen::MatrixXd relation_table;  // |R| x rank
  CalibrationParams calibration;

  Eigen::Index num_entities() const { return entity_table.rows(); }
  Eigen::Index num_relations() const { return relation_table.rows(); }
  Eigen::VectorXd entity(EntityId e) const { return entity_table.row(e); }
  Eigen::VectorXd relation(RelationId p) const { return relation_table.row(p); }
};

// s ⊗ w in the scorer's algebra, so that raw scores against any object are
// plain dot products: raw_score(p, s, o) = combine_subject(p, s) · o.
Eigen::VectorXd combine_subject(const EmbeddingModel& m, RelationId p,
                                const Eigen::VectorXd& s_emb);

// d raw_score / d s_emb for fixed relation and object (the score is bilinear,
// so the gradient does not depend on s_emb).
Eigen::VectorXd subject_grad(const EmbeddingModel& m, RelationId p, const Eigen::VectorXd& o_emb);

// ComplEx: Re(<s, w_p, conj(o)>); DistMult: sum_i s_i w_i o_i.
double raw_score(const EmbeddingModel& m, RelationId p, const Eigen::VectorXd& s_emb,
                 const Eigen::VectorXd& o_emb);

// Raw scores of every entity as the object, in one matrix-vector product.
Eigen::VectorXd score_all_objects(const EmbeddingModel& m, RelationId p,
                                  const Eigen::VectorXd& s_emb);

Eigen::VectorXd calibrate(const EmbeddingModel& m, const Eigen::VectorXd& raw);

// Logistic squashing of a single raw score (valid for Logistic calibration;
// the smooth path used by the gradient-based answerer).
double logistic_scalar(const EmbeddingModel& m, double raw);

// Mean over the batch of sum_factors ||factor||_3^3, where the cube applies to
// complex moduli for ComplEx and absolute values for DistMult.
double n3_penalty(const EmbeddingModel& m, std::span<const Triple> batch);

// d n3_row / d row for one embedding row (per-coordinate 3*|m|*x).
Eigen::VectorXd n3_row_grad(const EmbeddingModel& m, const Eigen::VectorXd& row);
double n3_row_term(const EmbeddingModel& m, const Eigen::VectorXd& row);

// Binary checkpoint with a header recording scorer, rank, table sizes,
// calibration and a format version. Loading a truncated or mismatched file
// throws without returning a partial model.
void save_model(const EmbeddingModel& m, const std::filesystem::path& path);
EmbeddingModel load_model(const std::filesystem::path& path);

}  // namespace kgq

#endif
