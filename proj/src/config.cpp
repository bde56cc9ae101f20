#include "slsrec/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "slsrec/error.hpp"

namespace slsrec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

// Shortest round-trip representation keeps to_text() stable.
std::string real_str(double x) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::stod(buf) == x) break;
  }
  return buf;
}

}  // namespace

std::int64_t parse_duration(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError("empty duration");
  std::int64_t mult = 1;
  std::string num = t;
  switch (t.back()) {
    case 's': mult = 1; num.pop_back(); break;
    case 'm': mult = 60; num.pop_back(); break;
    case 'h': mult = 3600; num.pop_back(); break;
    case 'd': mult = 86400; num.pop_back(); break;
    default: break;
  }
  if (num.find('.') != std::string::npos) {
    const double v = parse_real("duration", num) * static_cast<double>(mult);
    if (v < 0) throw ConfigError("negative duration: " + text);
    return static_cast<std::int64_t>(v + 0.5);
  }
  const auto v = parse_int<std::int64_t>("duration", num);
  if (v < 0) throw ConfigError("negative duration: " + text);
  return v * mult;
}

void RunConfig::set(const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in);
  const std::string v = trim(value_in);
  if (key == "run_id") run_id = v;
  else if (key == "data_path") data_path = v;
  else if (key == "train_end") train_end = parse_int<std::int64_t>(key, v);
  else if (key == "val_end") val_end = parse_int<std::int64_t>(key, v);
  else if (key == "synth_users") synth.users = parse_int<int>(key, v);
  else if (key == "synth_items") synth.items = parse_int<int>(key, v);
  else if (key == "synth_categories") synth.categories = parse_int<int>(key, v);
  else if (key == "synth_sessions") synth.sessions_per_user = parse_int<int>(key, v);
  else if (key == "synth_session_len") synth.session_len = parse_int<int>(key, v);
  else if (key == "synth_drift") synth.drift_prob = parse_real(key, v);
  else if (key == "synth_noise") synth.noise_prob = parse_real(key, v);
  else if (key == "synth_gap") synth.session_gap = parse_duration(v);
  else if (key == "d") d = parse_int<int>(key, v);
  else if (key == "l") l = parse_int<int>(key, v);
  else if (key == "k_max") k_max = parse_int<int>(key, v);
  else if (key == "s_max") s_max = parse_int<int>(key, v);
  else if (key == "omega") omega = parse_duration(v);
  else if (key == "lambda") lambda = parse_real(key, v);
  else if (key == "margin") margin = parse_real(key, v);
  else if (key == "batch_size") batch_size = parse_int<int>(key, v);
  else if (key == "lr") lr = parse_real(key, v);
  else if (key == "n_candidates") n_candidates = parse_int<int>(key, v);
  else if (key == "eval_candidates") eval_candidates = parse_int<int>(key, v);
  else if (key == "epochs") epochs = parse_int<int>(key, v);
  else if (key == "patience") patience = parse_int<int>(key, v);
  else if (key == "train_targets_per_user") train_targets_per_user = parse_int<int>(key, v);
  else if (key == "seed") seed = parse_int<std::uint64_t>(key, v);
  else if (key == "no_cl") no_cl = parse_bool(key, v);
  else if (key == "no_cate") no_cate = parse_bool(key, v);
  else if (key == "no_long") no_long = parse_bool(key, v);
  else if (key == "no_short") no_short = parse_bool(key, v);
  else if (key == "eq17_literal") eq17_literal = parse_bool(key, v);
  else if (key == "share_pool_weights") share_pool_weights = parse_bool(key, v);
  else if (key == "contrast_projection") {
    if (v == "first_half") contrast_projection = ContrastProjection::kFirstHalf;
    else if (v == "learned_linear") contrast_projection = ContrastProjection::kLearnedLinear;
    else throw ConfigError("contrast_projection must be first_half or learned_linear, got '" + v + "'");
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

void RunConfig::validate() const {
  pad().validate();
  loss().validate();
  if (d <= 0) throw ConfigError("d must be positive");
  if (omega <= 0) throw ConfigError("omega must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (eval_candidates < 2) throw ConfigError("eval_candidates must be at least 2");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (patience < 0) throw ConfigError("patience must be non-negative");
  if (train_targets_per_user < 0) throw ConfigError("train_targets_per_user must be non-negative");
  if (no_long && no_short) throw ConfigError("no_long and no_short together leave the model without input");
  if (data_path.empty()) {
    synth.validate();
  } else if (!(train_end < val_end)) {
    throw ConfigError("train_end must be before val_end for a data_path run");
  }
}

std::map<std::string, std::string> config_entries(const RunConfig& c) {
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"run_id", c.run_id},
      {"data_path", c.data_path},
      {"train_end", std::to_string(c.train_end)},
      {"val_end", std::to_string(c.val_end)},
      {"synth_users", std::to_string(c.synth.users)},
      {"synth_items", std::to_string(c.synth.items)},
      {"synth_categories", std::to_string(c.synth.categories)},
      {"synth_sessions", std::to_string(c.synth.sessions_per_user)},
      {"synth_session_len", std::to_string(c.synth.session_len)},
      {"synth_drift", real_str(c.synth.drift_prob)},
      {"synth_noise", real_str(c.synth.noise_prob)},
      {"synth_gap", std::to_string(c.synth.session_gap)},
      {"d", std::to_string(c.d)},
      {"l", std::to_string(c.l)},
      {"k_max", std::to_string(c.k_max)},
      {"s_max", std::to_string(c.s_max)},
      {"omega", std::to_string(c.omega)},
      {"lambda", real_str(c.lambda)},
      {"margin", real_str(c.margin)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr", real_str(c.lr)},
      {"n_candidates", std::to_string(c.n_candidates)},
      {"eval_candidates", std::to_string(c.eval_candidates)},
      {"epochs", std::to_string(c.epochs)},
      {"patience", std::to_string(c.patience)},
      {"train_targets_per_user", std::to_string(c.train_targets_per_user)},
      {"seed", std::to_string(c.seed)},
      {"no_cl", b(c.no_cl)},
      {"no_cate", b(c.no_cate)},
      {"no_long", b(c.no_long)},
      {"no_short", b(c.no_short)},
      {"contrast_projection",
       c.contrast_projection == ContrastProjection::kFirstHalf ? "first_half" : "learned_linear"},
      {"eq17_literal", b(c.eq17_literal)},
      {"share_pool_weights", b(c.share_pool_weights)},
  };
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : config_entries(*this)) out += k + "=" + v + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

LossConfig RunConfig::loss() const {
  LossConfig lc;
  lc.margin = margin;
  lc.lambda = no_cl ? 0.0 : lambda;
  lc.n_candidates = n_candidates;
  lc.eq17_literal = eq17_literal;
  return lc;
}

ModelConfig RunConfig::model(int item_count) const {
  ModelConfig mc;
  mc.d = d;
  mc.item_count = item_count;
  mc.share_pool_weights = share_pool_weights;
  mc.contrast_projection = contrast_projection;
  mc.no_cate = no_cate;
  mc.no_long = no_long;
  mc.no_short = no_short;
  return mc;
}

}  // namespace slsrec
