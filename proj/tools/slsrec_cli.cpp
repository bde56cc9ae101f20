#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slsrec/checkpoint.hpp"
#include "slsrec/trainer.hpp"

namespace fs = std::filesystem;
using namespace slsrec;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "runs/slsrec";
};

// Remaining tokens are "--key value", "--key=value" or a bare "--flag" (true).
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0) throw ConfigError("unexpected argument: " + tok);
    std::string key = tok.substr(2);
    std::string value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.erase(eq);
    } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
      value = extras[++i];
    } else {
      value = "true";
    }
    for (char& c : key)
      if (c == '-') c = '_';
    cfg.set(key, value);
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Precedence: defaults, base_text, config file, SLSREC_SEED, command line.
RunConfig resolve(const CommonOptions& opts, const std::vector<std::string>& extras, const std::string& base_text = "") {
  RunConfig cfg = RunConfig::parse(base_text + "\n" + (opts.config_path.empty() ? "" : read_text(opts.config_path)));
  if (const char* env = std::getenv("SLSREC_SEED"); env && *env) cfg.set("seed", env);
  apply_overrides(cfg, extras);
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
}

RunSummary train_one(const RunConfig& cfg, const fs::path& dir) {
  std::cerr << "== " << cfg.run_id << " -> " << dir.string() << "\n";
  const Dataset data = load_dataset(cfg);
  TrainResult result = train_model(cfg, data, &std::cerr);
  write_run(dir, cfg, result);
  return {cfg.run_id, result.best_epoch, result.best_val, result.test};
}

int cmd_train(const CommonOptions& opts, const std::vector<std::string>& extras) {
  const RunConfig cfg = resolve(opts, extras);
  const RunSummary s = train_one(cfg, opts.out_dir);
  std::cout << "best_epoch=" << s.best_epoch << " val_auc=" << s.val.auc << " test_auc=" << s.test.auc << "\n";
  return 0;
}

int cmd_eval(const CommonOptions& opts, const std::string& ckpt_path, const std::string& split,
             const std::string& csv_path, const std::vector<std::string>& extras) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig cfg = resolve(opts, extras, ckpt.config_text);

  const Dataset data = load_dataset(cfg);
  if (data.item_count() != static_cast<int>(ckpt.header.item_count)) {
    throw ConfigError("checkpoint vocabulary (" + std::to_string(ckpt.header.item_count) +
                      " items) does not match the dataset (" + std::to_string(data.item_count()) + ")");
  }
  const auto tasks = evaluation_tasks(data, cfg, split);
  const MetricReport report = evaluate(ckpt.params, cfg.model(data.item_count()), tasks);
  const std::string csv =
      provenance_header(cfg) + metrics_csv_header() + "\n" + metrics_csv_row(cfg.run_id, split, 0, report) + "\n";
  if (csv_path.empty()) std::cout << csv;
  else write_file(csv_path, csv);
  return 0;
}

int cmd_ablate(const CommonOptions& opts, const std::vector<std::string>& extras) {
  const RunConfig base = resolve(opts, extras);
  std::vector<RunSummary> rows;
  for (const auto& run : ablation_variants(base)) {
    RunSummary s = train_one(run.config, fs::path(opts.out_dir) / run.name);
    s.name = run.name;
    rows.push_back(s);
  }
  const std::string csv = summary_csv(base, "variant", rows);
  write_file(fs::path(opts.out_dir) / "ablation.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_sweep(const CommonOptions& opts, const std::string& param, const std::vector<std::string>& values,
              const std::vector<std::string>& extras) {
  const RunConfig base = resolve(opts, extras);
  std::vector<RunSummary> rows;
  for (const auto& run : sweep_variants(base, param, values)) {
    RunSummary s = train_one(run.config, fs::path(opts.out_dir) / (param + "_" + run.name));
    s.name = run.name;
    rows.push_back(s);
  }
  const std::string csv = summary_csv(base, param, rows);
  write_file(fs::path(opts.out_dir) / ("sweep_" + param + ".csv"), csv);
  std::cout << csv;
  return 0;
}

int cmd_gradcheck(const CommonOptions& opts, const std::vector<std::string>& extras) {
  const RunConfig cfg = resolve(opts, extras, "d=8\nl=4\n");
  const GradcheckOutcome out = run_gradcheck(cfg);
  std::cout << "deterministic=" << (out.report.deterministic ? "yes" : "no") << "\n";
  for (const auto& [group, err] : out.group_worst) {
    std::cout << group << " worst_rel_error=" << err << (err < kGradcheckTolerance ? " ok" : " FAIL") << "\n";
  }
  std::cout << (out.passed ? "PASS" : "FAIL") << "\n";
  return out.passed ? 0 : 1;
}

int cmd_synth(const CommonOptions& opts, const std::vector<std::string>& extras) {
  const RunConfig cfg = resolve(opts, extras);
  const SyntheticDataset synth = generate_synthetic(cfg.synth, cfg.seed);
  const fs::path dir(opts.out_dir);
  std::ostringstream log;
  write_interactions(log, synth.records);
  write_file(dir / "interactions.csv", log.str());

  RunConfig data_cfg = cfg;
  data_cfg.data_path = (dir / "interactions.csv").string();
  data_cfg.train_end = synth.train_end;
  data_cfg.val_end = synth.val_end;
  write_file(dir / "data.cfg", data_cfg.to_text());

  std::ostringstream planted;
  planted << "user,long_term_category,short_term_categories\n";
  for (std::size_t u = 0; u < synth.planted.size(); ++u) {
    planted << "u" << u << "," << synth.planted[u].long_term_category << ",";
    for (std::size_t s = 0; s < synth.planted[u].short_term_category.size(); ++s)
      planted << (s ? " " : "") << synth.planted[u].short_term_category[s];
    planted << "\n";
  }
  write_file(dir / "planted.csv", planted.str());
  std::cout << "records=" << synth.records.size() << " train_end=" << synth.train_end << " val_end=" << synth.val_end
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLSRec: session-aware long/short-term interest recommender"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::string ckpt_path, split = "test", csv_path, param;
  std::vector<std::string> values;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "key=value config file");
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->allow_extras();
    return sub;
  };
  auto* train = common(app.add_subcommand("train", "train one model and write a run directory"));
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--csv", csv_path, "write the metrics CSV here instead of stdout");
  eval->add_option("--config", opts.config_path, "config keys overriding the checkpoint's");
  eval->allow_extras();
  auto* ablate = common(app.add_subcommand("ablate", "train full, no_cl, no_cate, no_long and no_short"));
  auto* sweep = common(app.add_subcommand("sweep", "train one model per omega or lambda value"));
  sweep->add_option("--param", param, "omega or lambda")->required();
  sweep->add_option("--values", values, "comma separated values")->required()->delimiter(',');
  auto* gradcheck = common(app.add_subcommand("gradcheck", "finite-difference check of the full loss"));
  auto* synth = common(app.add_subcommand("synth", "write the synthetic interaction log"));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(opts, train->remaining());
    if (*eval) return cmd_eval(opts, ckpt_path, split, csv_path, eval->remaining());
    if (*ablate) return cmd_ablate(opts, ablate->remaining());
    if (*sweep) return cmd_sweep(opts, param, values, sweep->remaining());
    if (*gradcheck) return cmd_gradcheck(opts, gradcheck->remaining());
    if (*synth) return cmd_synth(opts, synth->remaining());
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
