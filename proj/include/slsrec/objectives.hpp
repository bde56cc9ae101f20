#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>

#include "slsrec/model.hpp"

namespace slsrec {

struct LossConfig {
  double margin = 0.5;  // triplet margin m
  double lambda = 0.2;  // contrastive weight
  int n_candidates = 5;  // 1 positive + n-1 sampled negatives per training task
  bool eq17_literal = false;

  void validate() const;
};

// Mean item embeddings of the history (sessions 1..k-1) and the current
// session k, padding excluded.
struct SupervisedReps {
  Var long_ref;   // 1 x d
  Var short_ref;  // 1 x d
};

// nullopt when the history holds a single session.
std::optional<SupervisedReps> supervised_reps(const Var& embedding, const SessionizedHistory& history);

// max(||a - p||^2 - ||a - n||^2 + margin, 0)
Var triplet(const Var& a, const Var& p, const Var& n, double margin);

// Sum of four triplets calibrating the learned interests against the
// supervised references. Default third term: f(u^S, U^S, U^L); with
// `literal` set: f(u^S, U^L, U^S).
Var contrastive_loss(const Var& u_long, const Var& u_short, const Var& long_ref, const Var& short_ref, double margin,
                     bool literal = false);

struct ClampStats {
  long clamped = 0;
};

inline constexpr double kScoreClamp = 1e-12;

// Binary cross-entropy averaged over the N scored candidates.
Var main_loss(const Var& scores, const Mat& labels, ClampStats* stats = nullptr);

// sum_u (main_u + lambda * con_u)
Var total_loss(std::span<const Var> main_terms, std::span<const Var> contrastive_terms, double lambda);

// Projects the 2d interests to d for the contrastive terms.
struct ProjectedInterests {
  Var u_long;
  Var u_short;
};
ProjectedInterests project_interests(const Var& u_long_row, const Var& u_short_row, const ModelVars& vars,
                                     const ModelConfig& cfg);

// All four inequalities in squared-distance form:
// d(uL,UL) < d(uL,US), d(UL,uL) < d(UL,uS), d(uS,US) < d(uS,UL), d(US,uS) < d(US,uL).
bool satisfies_constraints(const Eigen::RowVectorXd& u_long, const Eigen::RowVectorXd& u_short,
                           const Eigen::RowVectorXd& long_ref, const Eigen::RowVectorXd& short_ref);

}  // namespace slsrec
