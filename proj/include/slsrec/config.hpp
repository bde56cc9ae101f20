#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slsrec/data.hpp"
#include "slsrec/model.hpp"
#include "slsrec/objectives.hpp"

namespace slsrec {

// Every knob of a run. Defaults follow the reference settings where known:
// batch 500, learning rate 0.001, maximum sequence length 50, lambda 0.2,
// omega 90 minutes.
struct RunConfig {
  std::string run_id = "slsrec";

  // Input: an interaction log, or the synthetic generator when empty.
  std::string data_path;
  std::int64_t train_end = 0;
  std::int64_t val_end = 0;
  SyntheticConfig synth;

  int d = 16;
  int l = 10;
  int k_max = 10;
  int s_max = 50;
  std::int64_t omega = 5400;

  double lambda = 0.2;
  double margin = 0.5;
  int batch_size = 500;
  double lr = 0.001;
  int n_candidates = 5;
  int eval_candidates = 50;
  int epochs = 20;
  int patience = 3;
  int train_targets_per_user = 0;  // 0 keeps every eligible target
  std::uint64_t seed = 42;

  bool no_cl = false;
  bool no_cate = false;
  bool no_long = false;
  bool no_short = false;
  ContrastProjection contrast_projection = ContrastProjection::kFirstHalf;
  bool eq17_literal = false;
  bool share_pool_weights = false;

  // Applies one key=value pair; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  // Sorted key=value lines; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  PadConfig pad() const { return {l, k_max, s_max}; }
  LossConfig loss() const;
  // item_count is filled in once the vocabulary is known.
  ModelConfig model(int item_count) const;
};

// Accepts plain seconds or a suffix: s, m (minutes), h, d.
std::int64_t parse_duration(const std::string& text);

std::map<std::string, std::string> config_entries(const RunConfig& cfg);

}  // namespace slsrec
