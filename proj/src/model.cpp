#include "slsrec/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "slsrec/error.hpp"

namespace slsrec {

namespace {

Mat mask_column(std::span<const std::uint8_t> mask) {
  Mat m(static_cast<Eigen::Index>(mask.size()), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = mask[i] ? 1.0 : 0.0;
  return m;
}

Var attention_scores(const Var& rows, const AttentionVars& att) {
  return ad::matmul(ad::tanh(ad::add(ad::matmul(rows, att.w1), att.b1)), att.w2);
}

template <typename Store, typename BindFn>
ModelVars bind_with(Store& params, const ModelConfig& cfg, BindFn leaf) {
  ModelVars v;
  v.embedding = leaf(params.get("item_embedding"));
  v.attention = {leaf(params.get("attention.w1")), leaf(params.get("attention.b1")),
                 leaf(params.get("attention.w2"))};
  v.gru = {leaf(params.get("gru.w_z")), leaf(params.get("gru.u_z")), leaf(params.get("gru.b_z")),
           leaf(params.get("gru.w_r")), leaf(params.get("gru.u_r")), leaf(params.get("gru.b_r")),
           leaf(params.get("gru.w_h")), leaf(params.get("gru.u_h")), leaf(params.get("gru.b_h"))};
  v.pool_w = leaf(params.get("pool.w"));
  v.waam_w = cfg.share_pool_weights ? v.pool_w : leaf(params.get("pool.w_waam"));
  v.fuse_wq = leaf(params.get("fusion.w_q"));
  v.fuse_bq = leaf(params.get("fusion.b_q"));
  v.mlp = {leaf(params.get("mlp.w1")), leaf(params.get("mlp.b1")), leaf(params.get("mlp.w2")),
           leaf(params.get("mlp.b2"))};
  if (cfg.contrast_projection == ContrastProjection::kLearnedLinear) {
    v.proj_long = leaf(params.get("contrast.proj_long"));
    v.proj_short = leaf(params.get("contrast.proj_short"));
  }
  return v;
}

}  // namespace

void ModelConfig::validate() const {
  if (d <= 0) throw ConfigError("embedding dimension d must be positive");
  if (item_count < 2) throw ConfigError("item vocabulary must contain padding plus at least one item");
  if (no_long && no_short) throw ConfigError("no_long and no_short together leave the model without input");
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const Eigen::Index d = cfg.d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  auto uniform = [&](Eigen::Index r, Eigen::Index c) { return ad::uniform_matrix<double>(r, c, bound, rng); };

  ParamStore p;
  Mat emb = uniform(cfg.item_count, d);
  emb.row(0).setZero();
  p.add("item_embedding", std::move(emb));
  p.add("attention.w1", uniform(d, d));
  p.add("attention.b1", Mat::Zero(1, d));
  p.add("attention.w2", uniform(d, 1));
  for (const char* gate : {"z", "r", "h"}) {
    p.add(std::string("gru.w_") + gate, uniform(d, d));
    p.add(std::string("gru.u_") + gate, uniform(d, d));
    p.add(std::string("gru.b_") + gate, Mat::Zero(1, d));
  }
  p.add("pool.w", uniform(d, d));
  if (!cfg.share_pool_weights) p.add("pool.w_waam", uniform(d, d));
  p.add("fusion.w_q", uniform(5 * d, 1));
  p.add("fusion.b_q", Mat::Zero(1, 1));
  p.add("mlp.w1", uniform(3 * d, d));
  p.add("mlp.b1", Mat::Zero(1, d));
  p.add("mlp.w2", uniform(d, 1));
  p.add("mlp.b2", Mat::Zero(1, 1));
  if (cfg.contrast_projection == ContrastProjection::kLearnedLinear) {
    p.add("contrast.proj_long", uniform(2 * d, d));
    p.add("contrast.proj_short", uniform(2 * d, d));
  }
  return p;
}

ModelVars bind(Tape& tape, ParamStore& params, const ModelConfig& cfg) {
  return bind_with(params, cfg, [&](ad::Parameter<double>& p) { return tape.parameter(p); });
}

ModelVars bind_frozen(Tape& tape, const ParamStore& params, const ModelConfig& cfg) {
  return bind_with(params, cfg, [&](const ad::Parameter<double>& p) { return tape.frozen(p); });
}

Var attention_encode(const Var& rows, std::span<const std::uint8_t> mask, const AttentionVars& att) {
  if (static_cast<Eigen::Index>(mask.size()) != rows.rows()) {
    throw ShapeError("attention_encode: mask of length " + std::to_string(mask.size()) + " for " +
                     ad::shape_str(rows.rows(), rows.cols()) + " rows");
  }
  Var weights = ad::masked_softmax(attention_scores(rows, att), mask_column(mask));
  return ad::matmul(ad::transpose(weights), rows);
}

Var attention_encode_sessions(const Var& rows, std::span<const std::uint8_t> mask, int l, const AttentionVars& att) {
  const Eigen::Index n = rows.rows();
  if (l <= 0 || n % l != 0 || static_cast<Eigen::Index>(mask.size()) != n) {
    throw ShapeError("attention_encode_sessions: " + ad::shape_str(rows.rows(), rows.cols()) +
                     " rows do not split into sessions of " + std::to_string(l));
  }
  const Eigen::Index k = n / l;
  if (k == 1) return attention_encode(rows, mask, att);
  Tape& tape = *rows.tape;
  // Column s of the l x k score matrix holds session s (column-major reshape).
  Mat mask_lk = mask_column(mask).reshaped(l, k);
  Var weights = ad::masked_softmax(ad::reshape(attention_scores(rows, att), l, k), mask_lk);
  Var weighted = ad::mul(rows, ad::reshape(weights, n, 1));
  Mat selector = Mat::Zero(k, n);
  for (Eigen::Index s = 0; s < k; ++s) selector.block(s, s * l, 1, l).setOnes();
  return ad::matmul(tape.constant(std::move(selector)), weighted);
}

int dominant_category(std::span<const int> categories, std::span<const std::uint8_t> mask) {
  std::map<int, int> counts;
  int best = 0;
  int last = -1;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    best = std::max(best, ++counts[categories[i]]);
    last = static_cast<int>(i);
  }
  if (last < 0) throw ContractViolation("dominant_category: empty session");
  if (counts[categories[static_cast<std::size_t>(last)]] == best) return categories[static_cast<std::size_t>(last)];
  for (int i = last; i >= 0; --i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    if (counts[categories[static_cast<std::size_t>(i)]] == best) return categories[static_cast<std::size_t>(i)];
  }
  return categories[static_cast<std::size_t>(last)];
}

int dominant_category(std::span<const int> categories) { return dominant_category(categories, {}); }

ShortTermInterest short_term_interest(const Var& rows, std::span<const int> categories,
                                      std::span<const std::uint8_t> mask, const AttentionVars& att, bool no_cate) {
  if (categories.size() != mask.size() || static_cast<Eigen::Index>(mask.size()) != rows.rows()) {
    throw ShapeError("short_term_interest: categories/mask do not match " + ad::shape_str(rows.rows(), rows.cols()));
  }
  ShortTermInterest out;
  out.category = dominant_category(categories, mask);
  Var scores = attention_scores(rows, att);
  Var rows_t = ad::transpose(rows);
  Var weights = ad::masked_softmax(scores, mask_column(mask));
  out.u_s = ad::transpose(ad::matmul(rows_t, weights));
  Mat cate(static_cast<Eigen::Index>(mask.size()), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    cate(static_cast<Eigen::Index>(i), 0) = (mask[i] && categories[i] == out.category) ? 1.0 : 0.0;
  }
  out.u_c = ad::transpose(ad::matmul(rows_t, ad::masked_softmax(scores, cate)));
  out.u_short = ad::concat_cols({out.u_s, no_cate ? out.u_s : out.u_c});
  return out;
}

Var gru_forward(const Var& inputs, const GruVars& gru) {
  Tape& tape = *inputs.tape;
  const Eigen::Index steps = inputs.rows();
  const Eigen::Index d = inputs.cols();
  if (steps == 0) throw ContractViolation("gru_forward: no input steps");
  Var xz = ad::add(ad::matmul(inputs, gru.w_z), gru.b_z);
  Var xr = ad::add(ad::matmul(inputs, gru.w_r), gru.b_r);
  Var xh = ad::add(ad::matmul(inputs, gru.w_h), gru.b_h);
  Var h = tape.constant(Mat::Zero(1, d));
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    const int ti = static_cast<int>(t);
    Var z = ad::sigmoid(ad::add(ad::slice_rows(xz, ti, 1), ad::matmul(h, gru.u_z)));
    Var r = ad::sigmoid(ad::add(ad::slice_rows(xr, ti, 1), ad::matmul(h, gru.u_r)));
    Var c = ad::tanh(ad::add(ad::slice_rows(xh, ti, 1), ad::matmul(ad::mul(r, h), gru.u_h)));
    // (1 - z) h + z c
    h = ad::add(h, ad::mul(z, ad::sub(c, h)));
    outputs.push_back(h);
  }
  return steps == 1 ? outputs.front() : ad::concat_rows<double>(std::span<const Var>(outputs));
}

Var attention_pool(const Var& reps, const Var& targets, const Var& w) {
  Var logits = ad::matmul(ad::matmul(reps, w), ad::transpose(targets));  // m x n
  Var weights = ad::softmax(logits);
  return ad::matmul(ad::transpose(weights), reps);
}

LongTermInterest long_term_interest(const Var& history, const Var& evolved, const Var& targets, const Var& pool_w,
                                    const Var& waam_w) {
  LongTermInterest out;
  out.u_h = attention_pool(history, targets, pool_w);
  out.u_h_evolved = attention_pool(evolved, targets, waam_w);
  out.u_long = ad::concat_cols({out.u_h, out.u_h_evolved});
  return out;
}

Fusion adaptive_fuse(const Var& u_long, const Var& u_short, const Var& targets, const Var& wq, const Var& bq) {
  const Eigen::Index n = targets.rows();
  if (u_long.cols() != u_short.cols()) {
    throw ShapeError("adaptive_fuse: incompatible shapes " + ad::shape_str(u_long.rows(), u_long.cols()) + " and " +
                     ad::shape_str(u_short.rows(), u_short.cols()));
  }
  Var shortn = u_short.rows() == 1 && n != 1 ? ad::tile_rows(u_short, n) : u_short;
  Var longn = u_long.rows() == 1 && n != 1 ? ad::tile_rows(u_long, n) : u_long;
  Fusion f;
  f.alpha = ad::sigmoid(ad::add(ad::matmul(ad::concat_cols({longn, shortn, targets}), wq), bq));
  f.u_fused = ad::add(shortn, ad::mul(f.alpha, ad::sub(longn, shortn)));
  return f;
}

Var predict_score(const Var& u_fused, const Var& targets, const MlpVars& mlp) {
  Var hidden = ad::relu(ad::add(ad::matmul(ad::concat_cols({u_fused, targets}), mlp.w1), mlp.b1));
  return ad::sigmoid(ad::add(ad::matmul(hidden, mlp.w2), mlp.b2));
}

HistoryEncoding encode_history(Tape& tape, const ModelVars& vars, const ModelConfig& cfg,
                               const SessionizedHistory& history) {
  const int k = history.session_count();
  if (k == 0) throw ContractViolation("encode_history: empty history");
  for (int s = 0; s < k; ++s) {
    if (history.real_count(s) == 0) throw ContractViolation("encode_history: session " + std::to_string(s) + " is empty");
  }
  const int l = history.l;
  const Eigen::Index d = cfg.d;
  HistoryEncoding enc;
  enc.k = k;
  enc.cold_start = k == 1;

  const std::size_t split = static_cast<std::size_t>((k - 1) * l);
  std::span<const int> all_items(history.items);
  std::span<const std::uint8_t> all_mask(history.mask);
  Var current_rows = ad::gather_rows(vars.embedding, all_items.subspan(split));
  enc.short_term = short_term_interest(current_rows, history.session_categories(k - 1), history.session_mask(k - 1),
                                       vars.attention, cfg.no_cate);
  enc.u_short = cfg.no_short ? tape.constant(Mat::Zero(1, 2 * d)) : enc.short_term.u_short;

  if (k >= 2 && !cfg.no_long) {
    Var hist_rows = ad::gather_rows(vars.embedding, all_items.subspan(0, split));
    enc.history_reps = attention_encode_sessions(hist_rows, all_mask.subspan(0, split), l, vars.attention);
    enc.evolved = gru_forward(*enc.history_reps, vars.gru);
  }
  return enc;
}

CandidateScores score_candidates(Tape& tape, const ModelVars& vars, const ModelConfig& cfg, const HistoryEncoding& enc,
                                 std::span<const int> candidates) {
  if (candidates.empty()) throw ContractViolation("score_candidates: no candidates");
  const Eigen::Index n = static_cast<Eigen::Index>(candidates.size());
  CandidateScores out;
  out.targets = ad::gather_rows(vars.embedding, candidates);
  if (enc.history_reps) {
    out.long_term = long_term_interest(*enc.history_reps, *enc.evolved, out.targets, vars.pool_w, vars.waam_w);
    out.u_long = out.long_term->u_long;
  } else {
    out.u_long = tape.constant(Mat::Zero(n, 2 * cfg.d));
  }
  out.fusion = adaptive_fuse(out.u_long, enc.u_short, out.targets, vars.fuse_wq, vars.fuse_bq);
  out.scores = predict_score(out.fusion.u_fused, out.targets, vars.mlp);
  return out;
}

std::vector<double> score_task(const ParamStore& params, const ModelConfig& cfg, const SessionizedHistory& history,
                               std::span<const int> candidates) {
  Tape tape;
  ModelVars vars = bind_frozen(tape, params, cfg);
  HistoryEncoding enc = encode_history(tape, vars, cfg, history);
  CandidateScores sc = score_candidates(tape, vars, cfg, enc, candidates);
  const Mat& s = sc.scores.value();
  return std::vector<double>(s.data(), s.data() + s.size());
}

}  // namespace slsrec
