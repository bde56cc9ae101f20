#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slsrec/config.hpp"
#include "slsrec/data.hpp"
#include "slsrec/gradcheck.hpp"
#include "slsrec/metrics.hpp"
#include "slsrec/model.hpp"
#include "slsrec/objectives.hpp"

namespace slsrec {

struct Dataset {
  Vocab vocab;
  SplitTargets split;
  std::vector<RankingTask> val_tasks;
  std::vector<RankingTask> test_tasks;
  std::int64_t train_end = 0;
  std::int64_t val_end = 0;
  std::size_t rejected_rows = 0;
  std::vector<PlantedUser> planted;  // synthetic runs only

  int item_count() const { return vocab.item_count(); }
};

// Parses config.data_path, or generates the synthetic log, then splits it.
Dataset load_dataset(const RunConfig& cfg);

// Fixed-negative evaluation tasks for "train", "val" or "test".
std::vector<RankingTask> evaluation_tasks(const Dataset& data, const RunConfig& cfg, const std::string& split);

struct TaskLoss {
  Var total;  // main + lambda * contrastive
  Var main;
  std::optional<Var> contrastive;  // absent for single-session histories
};

// candidates[0] is the positive.
TaskLoss task_loss(Tape& tape, const ModelVars& vars, const ModelConfig& mcfg, const LossConfig& lcfg,
                   const SessionizedHistory& history, std::span<const int> candidates, ClampStats* clamps = nullptr);

struct EpochLog {
  int epoch = 0;
  double main_loss = 0;         // mean per task
  double contrastive_loss = 0;  // mean per task carrying the term
  double total_loss = 0;        // mean per task
  MetricReport val;
  double wall_seconds = 0;  // reported on the progress stream only
  long clamped = 0;
  long contrastive_skipped = 0;
  long skipped_steps = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::vector<EpochLog> log;
  ParamStore best;
  int best_epoch = 0;
  MetricReport best_val;
  MetricReport test;
  ModelConfig model;
};

TrainResult train_model(const RunConfig& cfg, const Dataset& data, std::ostream* progress = nullptr);

std::string train_log_csv(std::span<const EpochLog> log);
// "# key=value" provenance lines for CSV outputs.
std::string provenance_header(const RunConfig& cfg);

// Writes config.resolved, train_log.csv, metrics.csv and best.ckpt.
void write_run(const std::filesystem::path& dir, const RunConfig& cfg, const TrainResult& result);

// Fraction of multi-session tasks whose projected interests satisfy all four
// calibration inequalities against the supervised references.
double calibration_rate(const ParamStore& params, const ModelConfig& mcfg, std::span<const RankingTask> tasks);

struct NamedRun {
  std::string name;
  RunConfig config;
};

// full, no_cl, no_cate, no_long, no_short with a shared seed.
std::vector<NamedRun> ablation_variants(const RunConfig& base);
// One run per value of "omega" or "lambda"; run names are the values.
std::vector<NamedRun> sweep_variants(const RunConfig& base, const std::string& param,
                                     std::span<const std::string> values);

struct RunSummary {
  std::string name;
  int best_epoch = 0;
  MetricReport val;
  MetricReport test;
};

// One row per run; key_column is "variant" or the swept parameter name.
std::string summary_csv(const RunConfig& base, const std::string& key_column, std::span<const RunSummary> rows);

struct GradcheckOutcome {
  ad::GradCheckReport<double> report;
  std::vector<std::pair<std::string, double>> group_worst;  // by name prefix
  bool passed = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckEpsilon = 1e-5;

// Two tasks, three sessions each, from a tiny synthetic log. A fault_scale
// other than 1 multiplies the loss gradient (planted bug for tests).
GradcheckOutcome run_gradcheck(const RunConfig& cfg, double fault_scale = 1.0);

}  // namespace slsrec
