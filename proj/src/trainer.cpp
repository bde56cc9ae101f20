#include "slsrec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "slsrec/checkpoint.hpp"
#include "slsrec/error.hpp"

namespace slsrec {

namespace {

enum SeedStream : std::uint64_t {
  kStreamInit = 2,
  kStreamShuffle = 3,
  kStreamTrainEval = 20,
  kStreamVal = 21,
  kStreamTest = 22,
  kStreamGradcheck = 30,
};

Mat positive_labels(std::size_t n) {
  Mat y = Mat::Zero(static_cast<Eigen::Index>(n), 1);
  y(0, 0) = 1.0;
  return y;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.8f", x);
  return buf;
}

}  // namespace

Dataset load_dataset(const RunConfig& cfg) {
  cfg.validate();
  Dataset data;
  std::vector<InteractionRecord> records;
  if (cfg.data_path.empty()) {
    SyntheticDataset synth = generate_synthetic(cfg.synth, cfg.seed);
    records = std::move(synth.records);
    data.train_end = synth.train_end;
    data.val_end = synth.val_end;
    data.planted = std::move(synth.planted);
  } else {
    ParseResult parsed = parse_interactions(std::filesystem::path(cfg.data_path));
    records = std::move(parsed.records);
    data.rejected_rows = parsed.rejects.size();
    data.train_end = cfg.train_end;
    data.val_end = cfg.val_end;
  }
  data.vocab = Vocab::build(records);
  if (data.vocab.item_count() <= 2) throw ConfigError("dataset needs at least two distinct items");
  const auto timelines = build_timelines(records, data.vocab);

  SplitConfig sc;
  sc.train_end = data.train_end;
  sc.val_end = data.val_end;
  sc.omega = cfg.omega;
  sc.pad = cfg.pad();
  sc.max_train_targets_per_user = cfg.train_targets_per_user;
  data.split = temporal_split(timelines, sc);
  data.val_tasks = evaluation_tasks(data, cfg, "val");
  data.test_tasks = evaluation_tasks(data, cfg, "test");
  return data;
}

std::vector<RankingTask> evaluation_tasks(const Dataset& data, const RunConfig& cfg, const std::string& split) {
  const int negatives = cfg.eval_candidates - 1;
  if (split == "train") {
    return make_ranking_tasks(data.split.train, negatives, data.item_count(), derive_seed(cfg.seed, kStreamTrainEval));
  }
  if (split == "val") {
    return make_ranking_tasks(data.split.val, negatives, data.item_count(), derive_seed(cfg.seed, kStreamVal));
  }
  if (split == "test") {
    return make_ranking_tasks(data.split.test, negatives, data.item_count(), derive_seed(cfg.seed, kStreamTest));
  }
  throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
}

TaskLoss task_loss(Tape& tape, const ModelVars& vars, const ModelConfig& mcfg, const LossConfig& lcfg,
                   const SessionizedHistory& history, std::span<const int> candidates, ClampStats* clamps) {
  HistoryEncoding enc = encode_history(tape, vars, mcfg, history);
  CandidateScores sc = score_candidates(tape, vars, mcfg, enc, candidates);
  TaskLoss out;
  out.main = main_loss(sc.scores, positive_labels(candidates.size()), clamps);
  out.total = out.main;
  if (auto refs = supervised_reps(vars.embedding, history)) {
    // The long-term interest is target-aware; the positive's copy is calibrated.
    ProjectedInterests proj = project_interests(ad::slice_rows(sc.u_long, 0, 1), enc.u_short, vars, mcfg);
    out.contrastive =
        contrastive_loss(proj.u_long, proj.u_short, refs->long_ref, refs->short_ref, lcfg.margin, lcfg.eq17_literal);
    if (lcfg.lambda != 0.0) out.total = ad::add(out.main, ad::scale(*out.contrastive, lcfg.lambda));
  }
  return out;
}

TrainResult train_model(const RunConfig& cfg, const Dataset& data, std::ostream* progress) {
  cfg.validate();
  const LossConfig lcfg = cfg.loss();
  TrainResult result;
  result.model = cfg.model(data.item_count());
  const ModelConfig& mcfg = result.model;
  if (cfg.n_candidates - 1 >= data.item_count() - 1) throw ConfigError("n_candidates exceeds the item vocabulary");
  if (data.split.train.empty()) throw ConfigError("no training targets (check train_end and the input log)");

  ParamStore params = init_params(mcfg, derive_seed(cfg.seed, kStreamInit));
  // Start the output at the label base rate, one positive per n_candidates.
  params.get("mlp.b2").value(0, 0) = -std::log(static_cast<double>(cfg.n_candidates - 1));
  ad::AdamState<double> adam;
  ad::AdamConfig<double> adam_cfg;
  adam_cfg.lr = cfg.lr;
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamShuffle));

  const auto& train = data.split.train;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  double best_auc = -1;
  int bad_epochs = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog row;
    row.epoch = epoch;
    ClampStats clamps;
    double main_sum = 0;
    double con_sum = 0;
    double total_sum = 0;
    long con_count = 0;
    const long skipped_before = adam.skipped_steps;

    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = begin; i < end; ++i) {
        const Target& t = train[order[i]];
        std::vector<int> candidates{t.item};
        auto negs = sample_negatives(t.item, cfg.n_candidates - 1, data.item_count(), rng);
        candidates.insert(candidates.end(), negs.begin(), negs.end());

        Tape tape;
        ModelVars vars = bind(tape, params, mcfg);
        TaskLoss loss = task_loss(tape, vars, mcfg, lcfg, t.history, candidates, &clamps);
        const double value = loss.total.scalar();
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                              ", task " + std::to_string(i - begin));
        }
        tape.backward(loss.total);
        main_sum += loss.main.scalar();
        total_sum += value;
        if (loss.contrastive) {
          con_sum += loss.contrastive->scalar();
          ++con_count;
        } else {
          ++row.contrastive_skipped;
        }
      }
      ad::adam_step(params, adam, adam_cfg, ++step);
    }

    const double n = static_cast<double>(train.size());
    row.main_loss = main_sum / n;
    row.contrastive_loss = con_count ? con_sum / static_cast<double>(con_count) : 0.0;
    row.total_loss = total_sum / n;
    row.clamped = clamps.clamped;
    row.skipped_steps = adam.skipped_steps - skipped_before;
    row.val = evaluate(params, mcfg, data.val_tasks);
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (progress) {
      *progress << "epoch " << epoch << " loss=" << fmt(row.total_loss) << " main=" << fmt(row.main_loss)
                << " con=" << fmt(row.contrastive_loss) << " val_auc=" << fmt(row.val.auc) << " ("
                << fmt(row.wall_seconds) << "s)\n";
    }

    if (row.val.auc > best_auc) {
      best_auc = row.val.auc;
      result.best = params;
      result.best_epoch = epoch;
      result.best_val = row.val;
      bad_epochs = 0;
    } else if (++bad_epochs >= std::max(cfg.patience, 1)) {
      break;
    }
  }
  result.test = evaluate(result.best, mcfg, data.test_tasks);
  return result;
}

std::string train_log_csv(std::span<const EpochLog> log) {
  std::string out =
      "epoch,main_loss,contrastive_loss,total_loss,val_auc,val_gauc,val_mrr,val_ndcg@2,val_ndcg@5,val_ndcg@10,"
      "val_hit@2,val_hit@5,val_hit@10,clamped,contrastive_skipped,skipped_steps\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + fmt(r.main_loss) + "," + fmt(r.contrastive_loss) + "," +
           fmt(r.total_loss) + "," + fmt(r.val.auc) + "," + (r.val.gauc ? fmt(*r.val.gauc) : "") + "," +
           fmt(r.val.mrr);
    for (double x : r.val.ndcg) out += "," + fmt(x);
    for (double x : r.val.hit) out += "," + fmt(x);
    out += "," + std::to_string(r.clamped) + "," + std::to_string(r.contrastive_skipped) + "," +
           std::to_string(r.skipped_steps) + "\n";
  }
  return out;
}

std::string provenance_header(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += "# " + k + "=" + v + "\n";
  return out;
}

void write_run(const std::filesystem::path& dir, const RunConfig& cfg, const TrainResult& result) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out << body;
  };
  write("config.resolved", cfg.to_text());
  write("train_log.csv", provenance_header(cfg) + train_log_csv(result.log));
  std::string metrics = provenance_header(cfg) + metrics_csv_header() + "\n";
  for (const auto& r : result.log) metrics += metrics_csv_row(cfg.run_id, "val", r.epoch, r.val) + "\n";
  metrics += metrics_csv_row(cfg.run_id, "test", result.best_epoch, result.test) + "\n";
  write("metrics.csv", metrics);

  Checkpoint ckpt;
  ckpt.header.d = static_cast<std::uint32_t>(cfg.d);
  ckpt.header.item_count = static_cast<std::uint32_t>(result.model.item_count);
  ckpt.header.l = static_cast<std::uint32_t>(cfg.l);
  ckpt.header.k_max = static_cast<std::uint32_t>(cfg.k_max);
  ckpt.config_text = cfg.to_text();
  ckpt.params = result.best;
  save_checkpoint(dir / "best.ckpt", ckpt);
}

double calibration_rate(const ParamStore& params, const ModelConfig& mcfg, std::span<const RankingTask> tasks) {
  long eligible = 0;
  long satisfied = 0;
  for (const auto& task : tasks) {
    if (task.target.history.session_count() < 2) continue;
    Tape tape;
    ModelVars vars = bind_frozen(tape, params, mcfg);
    HistoryEncoding enc = encode_history(tape, vars, mcfg, task.target.history);
    const int positive = task.target.item;
    CandidateScores sc = score_candidates(tape, vars, mcfg, enc, std::span<const int>(&positive, 1));
    ProjectedInterests proj = project_interests(sc.u_long, enc.u_short, vars, mcfg);
    auto refs = supervised_reps(vars.embedding, task.target.history);
    ++eligible;
    if (satisfies_constraints(proj.u_long.value().row(0), proj.u_short.value().row(0), refs->long_ref.value().row(0),
                              refs->short_ref.value().row(0))) {
      ++satisfied;
    }
  }
  return eligible ? static_cast<double>(satisfied) / static_cast<double>(eligible) : 0.0;
}

std::vector<NamedRun> ablation_variants(const RunConfig& base) {
  std::vector<NamedRun> runs;
  auto variant = [&](const char* name, auto tweak) {
    RunConfig c = base;
    c.no_cl = c.no_cate = c.no_long = c.no_short = false;
    tweak(c);
    c.run_id = base.run_id + "_" + name;
    runs.push_back({name, c});
  };
  variant("full", [](RunConfig&) {});
  variant("no_cl", [](RunConfig& c) { c.no_cl = true; });
  variant("no_cate", [](RunConfig& c) { c.no_cate = true; });
  variant("no_long", [](RunConfig& c) { c.no_long = true; });
  variant("no_short", [](RunConfig& c) { c.no_short = true; });
  return runs;
}

std::vector<NamedRun> sweep_variants(const RunConfig& base, const std::string& param,
                                     std::span<const std::string> values) {
  if (param != "omega" && param != "lambda") throw ConfigError("sweep parameter must be omega or lambda, got '" + param + "'");
  if (values.size() < 2) throw ConfigError("a sweep needs at least two values");
  std::vector<NamedRun> runs;
  for (const auto& v : values) {
    RunConfig c = base;
    c.set(param, v);
    c.validate();
    c.run_id = base.run_id + "_" + param + "_" + v;
    runs.push_back({v, c});
  }
  return runs;
}

std::string summary_csv(const RunConfig& base, const std::string& key_column, std::span<const RunSummary> rows) {
  std::string out = provenance_header(base) + key_column +
                    ",best_epoch,val_auc,test_auc,test_gauc,test_mrr,test_ndcg@2,test_ndcg@5,test_ndcg@10,"
                    "test_hit@2,test_hit@5,test_hit@10,test_task_count\n";
  for (const auto& r : rows) {
    out += r.name + "," + std::to_string(r.best_epoch) + "," + fmt(r.val.auc) + "," + fmt(r.test.auc) + "," +
           (r.test.gauc ? fmt(*r.test.gauc) : "") + "," + fmt(r.test.mrr);
    for (double x : r.test.ndcg) out += "," + fmt(x);
    for (double x : r.test.hit) out += "," + fmt(x);
    out += "," + std::to_string(r.test.task_count) + "\n";
  }
  return out;
}

GradcheckOutcome run_gradcheck(const RunConfig& cfg, double fault_scale) {
  if (cfg.d > 16) throw ConfigError("gradcheck expects a tiny config (d <= 16)");
  SyntheticConfig tiny;
  tiny.users = 2;
  tiny.items = 12;
  tiny.categories = 3;
  tiny.sessions_per_user = 3;
  tiny.session_len = cfg.l;
  tiny.session_gap = cfg.synth.session_gap;
  SyntheticDataset synth = generate_synthetic(tiny, derive_seed(cfg.seed, kStreamGradcheck));
  const Vocab vocab = Vocab::build(synth.records);
  const auto timelines = build_timelines(synth.records, vocab);
  SplitConfig sc;
  sc.train_end = synth.train_end;
  sc.val_end = synth.val_end;
  sc.omega = tiny.session_gap;
  sc.pad = cfg.pad();
  const SplitTargets split = temporal_split(timelines, sc);

  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamGradcheck + 1));
  std::vector<std::vector<int>> candidates;
  for (const auto& t : split.test) {
    std::vector<int> c{t.item};
    auto negs = sample_negatives(t.item, std::min(cfg.n_candidates - 1, vocab.item_count() - 2), vocab.item_count(), rng);
    c.insert(c.end(), negs.begin(), negs.end());
    candidates.push_back(std::move(c));
  }

  const ModelConfig mcfg = cfg.model(vocab.item_count());
  const LossConfig lcfg = cfg.loss();
  ParamStore params = init_params(mcfg, derive_seed(cfg.seed, kStreamInit));

  ad::LossBuilder<double> builder = [&](Tape& tape, ParamStore& p) {
    ModelVars vars = bind(tape, p, mcfg);
    std::vector<Var> mains;
    std::vector<Var> cons;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      TaskLoss tl = task_loss(tape, vars, mcfg, lcfg, split.test[i].history, candidates[i]);
      mains.push_back(tl.main);
      if (tl.contrastive) cons.push_back(*tl.contrastive);
    }
    Var total = total_loss(mains, cons, lcfg.lambda);
    if (fault_scale == 1.0) return total;
    return tape.custom(total.value(), {total}, [fault_scale](const Mat& g, std::span<Mat* const> parents) {
      if (parents[0]) *parents[0] += fault_scale * g;
    });
  };

  GradcheckOutcome out;
  out.report = ad::finite_diff_check(builder, params, kGradcheckEpsilon);
  for (const auto& p : out.report.params) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    auto it = std::find_if(out.group_worst.begin(), out.group_worst.end(),
                           [&](const auto& g) { return g.first == group; });
    if (it == out.group_worst.end()) out.group_worst.emplace_back(group, p.max_rel_error);
    else it->second = std::max(it->second, p.max_rel_error);
  }
  out.passed = out.report.passed(kGradcheckTolerance);
  return out;
}

}  // namespace slsrec
