#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "slsrec/autodiff.hpp"
#include "slsrec/data.hpp"
#include "slsrec/param_store.hpp"

namespace slsrec {

using Mat = ad::Matrix<double>;
using Var = ad::Var<double>;
using Tape = ad::Tape<double>;
using ParamStore = ad::ParamStore<double>;

enum class ContrastProjection { kFirstHalf, kLearnedLinear };

struct ModelConfig {
  int d = 16;
  int item_count = 0;  // V, padding row included
  bool share_pool_weights = false;
  ContrastProjection contrast_projection = ContrastProjection::kFirstHalf;
  // Ablations.
  bool no_cate = false;   // u^S = [u_s; u_s]
  bool no_long = false;   // u^L = 0
  bool no_short = false;  // u^S = 0

  void validate() const;
};

// Embedding and weight matrices uniform in [-1/sqrt(d), 1/sqrt(d)], biases
// zero, padding embedding row zero.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

struct AttentionVars {
  Var w1;  // d x d
  Var b1;  // 1 x d
  Var w2;  // d x 1
};

struct GruVars {
  Var w_z, u_z, b_z;
  Var w_r, u_r, b_r;
  Var w_h, u_h, b_h;
};

struct MlpVars {
  Var w1, b1, w2, b2;
};

// Every parameter bound as a leaf on one tape.
struct ModelVars {
  Var embedding;
  AttentionVars attention;
  GruVars gru;
  Var pool_w;
  Var waam_w;
  Var fuse_wq;  // 5d x 1
  Var fuse_bq;  // 1 x 1
  MlpVars mlp;
  std::optional<Var> proj_long;   // 2d x d, learned_linear only
  std::optional<Var> proj_short;  // 2d x d
};

ModelVars bind(Tape& tape, ParamStore& params, const ModelConfig& cfg);
// Read-only binding for evaluation; safe to share `params` across threads.
ModelVars bind_frozen(Tape& tape, const ParamStore& params, const ModelConfig& cfg);

// Additive attention over the unmasked rows of one session: weights are
// masked-softmax(tanh(rows W1 + b1) w2); returns the 1 x d weighted sum.
Var attention_encode(const Var& rows, std::span<const std::uint8_t> mask, const AttentionVars& att);

// Same encoder applied to k sessions stored as (k*l) x d rows; returns k x d.
Var attention_encode_sessions(const Var& rows, std::span<const std::uint8_t> mask, int l, const AttentionVars& att);

// Modal category among unmasked slots. Ties go to the last item's category
// when it is tied, otherwise to the tied category seen most recently.
int dominant_category(std::span<const int> categories, std::span<const std::uint8_t> mask);
int dominant_category(std::span<const int> categories);

struct ShortTermInterest {
  Var u_s;      // 1 x d
  Var u_c;      // 1 x d
  Var u_short;  // 1 x 2d
  int category = 0;
};

// rows: l x d embeddings of the current session.
ShortTermInterest short_term_interest(const Var& rows, std::span<const int> categories,
                                      std::span<const std::uint8_t> mask, const AttentionVars& att,
                                      bool no_cate = false);

// Zero initial state; returns the hidden state after each of the m steps.
Var gru_forward(const Var& inputs, const GruVars& gru);

// reps m x d, targets n x d: per target, softmax_i(reps_i W v_T) weighted sum.
Var attention_pool(const Var& reps, const Var& targets, const Var& w);

struct LongTermInterest {
  Var u_h;          // n x d
  Var u_h_evolved;  // n x d
  Var u_long;       // n x 2d
};

// history: (k-1) x d session representations, evolved: their GRU outputs.
LongTermInterest long_term_interest(const Var& history, const Var& evolved, const Var& targets, const Var& pool_w,
                                    const Var& waam_w);

struct Fusion {
  Var alpha;    // n x 1
  Var u_fused;  // n x 2d
};

// u_short may be a single row shared by every target.
Fusion adaptive_fuse(const Var& u_long, const Var& u_short, const Var& targets, const Var& wq, const Var& bq);

// sigmoid(relu([u_fused, v_T] W1 + b1) W2 + b2), n x 1.
Var predict_score(const Var& u_fused, const Var& targets, const MlpVars& mlp);

// Everything that depends only on the history; shared by all candidates.
struct HistoryEncoding {
  int k = 0;
  bool cold_start = false;
  std::optional<Var> history_reps;  // (k-1) x d = h_1..h_{k-1}
  std::optional<Var> evolved;       // (k-1) x d = h'_1..h'_{k-1}
  ShortTermInterest short_term;
  Var u_short;  // 1 x 2d after ablations
};

HistoryEncoding encode_history(Tape& tape, const ModelVars& vars, const ModelConfig& cfg,
                               const SessionizedHistory& history);

struct CandidateScores {
  Var targets;  // n x d candidate embeddings
  std::optional<LongTermInterest> long_term;
  Var u_long;  // n x 2d after ablations / cold start
  Fusion fusion;
  Var scores;  // n x 1
};

CandidateScores score_candidates(Tape& tape, const ModelVars& vars, const ModelConfig& cfg, const HistoryEncoding& enc,
                                 std::span<const int> candidates);

// Forward-only scoring against a parameter snapshot.
std::vector<double> score_task(const ParamStore& params, const ModelConfig& cfg, const SessionizedHistory& history,
                               std::span<const int> candidates);

}  // namespace slsrec
