#include "slsrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "slsrec/error.hpp"

namespace slsrec {

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney: sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0;
  double positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum += avg_rank;
        positives += 1;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  return (rank_sum - positives * (positives + 1) / 2.0) / (positives * negatives);
}

std::optional<double> gauc(std::span<const UserAuc> per_user) {
  double num = 0;
  double den = 0;
  for (const auto& u : per_user) {
    if (!(u.weight > 0)) throw ContractViolation("gauc: weights must be positive");
    num += u.weight * u.auc;
    den += u.weight;
  }
  if (per_user.empty()) return std::nullopt;
  return num / den;
}

int rank_of_positive(std::span<const double> scores, int positive_index) {
  const double p = scores[static_cast<std::size_t>(positive_index)];
  int rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) != positive_index && scores[i] >= p) ++rank;
  }
  return rank;
}

double mrr(std::span<const int> ranks) {
  if (ranks.empty()) return 0;
  double s = 0;
  for (int r : ranks) s += 1.0 / r;
  return s / static_cast<double>(ranks.size());
}

double hit_at_k(std::span<const int> ranks, int k) {
  if (ranks.empty()) return 0;
  double s = 0;
  for (int r : ranks) s += r <= k ? 1.0 : 0.0;
  return s / static_cast<double>(ranks.size());
}

double ndcg_at_k(std::span<const int> ranks, int k) {
  if (ranks.empty()) return 0;
  double s = 0;
  for (int r : ranks) s += r <= k ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
  return s / static_cast<double>(ranks.size());
}

MetricReport aggregate(std::span<const ScoredTask> tasks) {
  MetricReport rep;
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  std::vector<int> ranks;
  // Ordered map keeps the reduction order fixed.
  std::map<int, std::pair<std::vector<double>, std::vector<int>>> per_user;
  for (const auto& t : tasks) {
    if (t.scores.size() < 2) {
      ++rep.skipped_count;
      continue;
    }
    ++rep.task_count;
    ranks.push_back(rank_of_positive(t.scores, 0));
    auto& [us, ul] = per_user[t.user];
    for (std::size_t i = 0; i < t.scores.size(); ++i) {
      all_scores.push_back(t.scores[i]);
      all_labels.push_back(i == 0 ? 1 : 0);
      us.push_back(t.scores[i]);
      ul.push_back(i == 0 ? 1 : 0);
    }
  }
  rep.auc = auc(all_scores, all_labels).value_or(0.0);
  std::vector<UserAuc> users;
  for (const auto& [user, data] : per_user) {
    if (auto a = auc(data.first, data.second)) users.push_back({*a, static_cast<double>(data.first.size())});
  }
  rep.gauc = gauc(users);
  rep.mrr = mrr(ranks);
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
    rep.ndcg[i] = ndcg_at_k(ranks, kCutoffs[i]);
    rep.hit[i] = hit_at_k(ranks, kCutoffs[i]);
  }
  return rep;
}

std::vector<ScoredTask> score_tasks(const ParamStore& params, const ModelConfig& cfg,
                                    std::span<const RankingTask> tasks) {
  std::vector<ScoredTask> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) {
    const auto candidates = t.candidates();
    out.push_back({t.target.user, score_task(params, cfg, t.target.history, candidates)});
  }
  return out;
}

MetricReport evaluate(const ParamStore& params, const ModelConfig& cfg, std::span<const RankingTask> tasks) {
  const auto scored = score_tasks(params, cfg, tasks);
  return aggregate(scored);
}

std::string metrics_csv_header() {
  return "run_id,split,epoch,auc,gauc,mrr,ndcg@2,ndcg@5,ndcg@10,hit@2,hit@5,hit@10,task_count,skipped_count";
}

std::string metrics_csv_row(const std::string& run_id, const std::string& split, int epoch, const MetricReport& r) {
  char buf[512];
  char gauc_buf[32] = "";
  if (r.gauc) std::snprintf(gauc_buf, sizeof gauc_buf, "%.8f", *r.gauc);
  std::snprintf(buf, sizeof buf, "%s,%s,%d,%.8f,%s,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f,%ld,%ld", run_id.c_str(),
                split.c_str(), epoch, r.auc, gauc_buf, r.mrr, r.ndcg[0], r.ndcg[1], r.ndcg[2], r.hit[0], r.hit[1],
                r.hit[2], r.task_count, r.skipped_count);
  return buf;
}

}  // namespace slsrec
