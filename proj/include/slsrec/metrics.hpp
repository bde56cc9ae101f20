#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slsrec/data.hpp"
#include "slsrec/model.hpp"

namespace slsrec {

inline constexpr std::array<int, 3> kCutoffs = {2, 5, 10};

struct MetricReport {
  double auc = 0;
  std::optional<double> gauc;
  double mrr = 0;
  std::array<double, 3> ndcg{};  // @2, @5, @10
  std::array<double, 3> hit{};
  long task_count = 0;
  long skipped_count = 0;
};

// Probability that a random positive outscores a random negative, ties
// counting one half. nullopt for single-class input.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);

struct UserAuc {
  double auc = 0;
  double weight = 0;  // number of evaluated candidates
};

// Weighted mean of per-user AUC; nullopt for an empty set.
std::optional<double> gauc(std::span<const UserAuc> per_user);

// 1 + candidates scoring above the positive + candidates tied with it.
int rank_of_positive(std::span<const double> scores, int positive_index);

double mrr(std::span<const int> ranks);
double hit_at_k(std::span<const int> ranks, int k);
// Single relevant item: 1 / log2(rank + 1) inside the cutoff.
double ndcg_at_k(std::span<const int> ranks, int k);

struct ScoredTask {
  int user = 0;
  std::vector<double> scores;  // positive at index 0
};

MetricReport aggregate(std::span<const ScoredTask> tasks);

std::vector<ScoredTask> score_tasks(const ParamStore& params, const ModelConfig& cfg,
                                    std::span<const RankingTask> tasks);

MetricReport evaluate(const ParamStore& params, const ModelConfig& cfg, std::span<const RankingTask> tasks);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& run_id, const std::string& split, int epoch, const MetricReport& r);

}  // namespace slsrec
