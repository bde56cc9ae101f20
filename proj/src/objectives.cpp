#include "slsrec/objectives.hpp"

#include "slsrec/error.hpp"

namespace slsrec {

void LossConfig::validate() const {
  if (margin < 0) throw ConfigError("margin must be non-negative");
  if (lambda < 0) throw ConfigError("lambda must be non-negative");
  if (n_candidates < 2) throw ConfigError("n_candidates must be at least 2");
}

std::optional<SupervisedReps> supervised_reps(const Var& embedding, const SessionizedHistory& history) {
  const int k = history.session_count();
  if (k < 2) return std::nullopt;
  std::vector<int> past;
  std::vector<int> current;
  const std::size_t split = static_cast<std::size_t>((k - 1) * history.l);
  for (std::size_t i = 0; i < history.items.size(); ++i) {
    if (!history.mask[i]) continue;
    (i < split ? past : current).push_back(history.items[i]);
  }
  if (past.empty() || current.empty()) throw ContractViolation("supervised_reps: empty session in history");
  return SupervisedReps{ad::mean_rows(ad::gather_rows(embedding, std::span<const int>(past))),
                        ad::mean_rows(ad::gather_rows(embedding, std::span<const int>(current)))};
}

Var triplet(const Var& a, const Var& p, const Var& n, double margin) {
  Tape& tape = *a.tape;
  Var m = tape.constant(Mat::Constant(a.rows(), 1, margin));
  return ad::hinge(ad::add(ad::sub(ad::squared_distance(a, p), ad::squared_distance(a, n)), m));
}

Var contrastive_loss(const Var& u_long, const Var& u_short, const Var& long_ref, const Var& short_ref, double margin,
                     bool literal) {
  Var t1 = triplet(u_long, long_ref, short_ref, margin);
  Var t2 = triplet(long_ref, u_long, u_short, margin);
  Var t3 = literal ? triplet(u_short, long_ref, short_ref, margin) : triplet(u_short, short_ref, long_ref, margin);
  Var t4 = triplet(short_ref, u_short, u_long, margin);
  return ad::add(ad::add(t1, t2), ad::add(t3, t4));
}

Var main_loss(const Var& scores, const Mat& labels, ClampStats* stats) {
  if (scores.cols() != 1 || labels.rows() != scores.rows() || labels.cols() != 1) {
    throw ShapeError("main_loss: incompatible shapes " + ad::shape_str(scores.rows(), scores.cols()) + " and " +
                     ad::shape_str(labels.rows(), labels.cols()));
  }
  Tape& tape = *scores.tape;
  const Mat& s = scores.value();
  if (stats) {
    stats->clamped += ((s.array() < kScoreClamp) || (s.array() > 1.0 - kScoreClamp)).count();
  }
  const double n = static_cast<double>(scores.rows());
  Var clamped = ad::clamp(scores, kScoreClamp, 1.0 - kScoreClamp);
  Var ones = tape.constant(Mat::Ones(scores.rows(), 1));
  Var y = tape.constant(labels);
  Var pos = ad::mul(y, ad::log(clamped));
  Var neg = ad::mul(ad::sub(ones, y), ad::log(ad::sub(ones, clamped)));
  return ad::scale(ad::sum(ad::add(pos, neg)), -1.0 / n);
}

Var total_loss(std::span<const Var> main_terms, std::span<const Var> contrastive_terms, double lambda) {
  if (main_terms.empty()) throw ContractViolation("total_loss: empty batch");
  Var total = main_terms[0];
  for (std::size_t i = 1; i < main_terms.size(); ++i) total = ad::add(total, main_terms[i]);
  for (const Var& c : contrastive_terms) total = ad::add(total, ad::scale(c, lambda));
  return total;
}

ProjectedInterests project_interests(const Var& u_long_row, const Var& u_short_row, const ModelVars& vars,
                                     const ModelConfig& cfg) {
  if (cfg.contrast_projection == ContrastProjection::kLearnedLinear) {
    return {ad::matmul(u_long_row, *vars.proj_long), ad::matmul(u_short_row, *vars.proj_short)};
  }
  Tape& tape = *u_long_row.tape;
  Mat first_half = Mat::Zero(2 * cfg.d, cfg.d);
  first_half.topRows(cfg.d).setIdentity();
  Var sel = tape.constant(std::move(first_half));
  return {ad::matmul(u_long_row, sel), ad::matmul(u_short_row, sel)};
}

bool satisfies_constraints(const Eigen::RowVectorXd& u_long, const Eigen::RowVectorXd& u_short,
                           const Eigen::RowVectorXd& long_ref, const Eigen::RowVectorXd& short_ref) {
  auto d2 = [](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) { return (a - b).squaredNorm(); };
  return d2(u_long, long_ref) < d2(u_long, short_ref) && d2(long_ref, u_long) < d2(long_ref, u_short) &&
         d2(u_short, short_ref) < d2(u_short, long_ref) && d2(short_ref, u_short) < d2(short_ref, u_long);
}

}  // namespace slsrec
