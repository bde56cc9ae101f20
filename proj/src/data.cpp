#include "slsrec/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "slsrec/error.hpp"

namespace slsrec {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

const char* behavior_name(Behavior b) {
  switch (b) {
    case Behavior::kClick: return "click";
    case Behavior::kCollect: return "collect";
    case Behavior::kCart: return "cart";
    case Behavior::kPurchase: return "purchase";
  }
  return "click";
}

bool parse_behavior(std::string_view text, Behavior& out) {
  const std::string t = lower(trim(text));
  if (t == "click" || t == "pv") {
    out = Behavior::kClick;
  } else if (t == "collect" || t == "fav") {
    out = Behavior::kCollect;
  } else if (t == "cart") {
    out = Behavior::kCart;
  } else if (t == "purchase" || t == "buy") {
    out = Behavior::kPurchase;
  } else {
    return false;
  }
  return true;
}

ParseResult parse_interactions(std::istream& in, const ColumnSchema& schema) {
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("interaction log is empty (no header line)");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const char delim = header.find('\t') != std::string::npos ? '\t' : ',';

  const auto names = split(header, delim);
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (trim(names[i]) == name) return i;
    }
    throw ConfigError("missing required column '" + name + "' in header: " + header);
  };
  const std::size_t cu = column(schema.user);
  const std::size_t ci = column(schema.item);
  const std::size_t cc = column(schema.category);
  const std::size_t cb = column(schema.behavior);
  const std::size_t ct = column(schema.timestamp);
  const std::size_t needed = std::max({cu, ci, cc, cb, ct}) + 1;

  ParseResult result;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, delim);
    if (fields.size() < needed) {
      result.rejects.push_back({lineno, "expected at least " + std::to_string(needed) + " fields, got " +
                                            std::to_string(fields.size())});
      continue;
    }
    InteractionRecord rec;
    rec.user_id = std::string(trim(fields[cu]));
    rec.item_id = std::string(trim(fields[ci]));
    rec.category_id = std::string(trim(fields[cc]));
    if (rec.user_id.empty() || rec.item_id.empty() || rec.category_id.empty()) {
      result.rejects.push_back({lineno, "empty id field"});
      continue;
    }
    const std::string_view ts = trim(fields[ct]);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), value);
    if (ec != std::errc() || ptr != ts.data() + ts.size() || value < 0) {
      result.rejects.push_back({lineno, "unparsable timestamp '" + std::string(ts) + "'"});
      continue;
    }
    rec.timestamp = value;
    if (!parse_behavior(fields[cb], rec.behavior)) {
      result.rejects.push_back({lineno, "unknown behavior '" + std::string(trim(fields[cb])) + "'"});
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

ParseResult parse_interactions(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interaction log: " + path.string());
  return parse_interactions(in, schema);
}

void write_interactions(std::ostream& out, std::span<const InteractionRecord> records) {
  out << "user_id,item_id,category_id,behavior,timestamp\n";
  for (const auto& r : records) {
    out << r.user_id << ',' << r.item_id << ',' << r.category_id << ',' << behavior_name(r.behavior) << ','
        << r.timestamp << '\n';
  }
}

Vocab Vocab::build(std::span<const InteractionRecord> records) {
  Vocab v;
  for (const auto& r : records) {
    if (!v.users_.count(r.user_id)) {
      v.users_.emplace(r.user_id, v.user_count());
      v.user_names_.push_back(r.user_id);
    }
    if (!v.categories_.count(r.category_id)) {
      v.categories_.emplace(r.category_id, v.category_count());
      v.category_names_.push_back(r.category_id);
    }
    if (!v.items_.count(r.item_id)) {
      v.items_.emplace(r.item_id, v.item_count());
      v.item_names_.push_back(r.item_id);
      v.item_category_.push_back(v.categories_.at(r.category_id));
    }
  }
  return v;
}

int Vocab::item_index(const std::string& id) const {
  auto it = items_.find(id);
  if (it == items_.end()) throw ContractViolation("unknown item id: " + id);
  return it->second;
}

int Vocab::category_index(const std::string& id) const {
  auto it = categories_.find(id);
  if (it == categories_.end()) throw ContractViolation("unknown category id: " + id);
  return it->second;
}

int Vocab::user_index(const std::string& id) const {
  auto it = users_.find(id);
  if (it == users_.end()) throw ContractViolation("unknown user id: " + id);
  return it->second;
}

std::vector<UserTimeline> build_timelines(std::span<const InteractionRecord> records, const Vocab& vocab) {
  std::vector<UserTimeline> out(static_cast<std::size_t>(vocab.user_count()));
  for (std::size_t u = 0; u < out.size(); ++u) out[u].user = static_cast<int>(u);
  for (const auto& r : records) {
    auto& tl = out[static_cast<std::size_t>(vocab.user_index(r.user_id))];
    tl.events.push_back({vocab.item_index(r.item_id), vocab.category_index(r.category_id), r.timestamp});
  }
  for (auto& tl : out) {
    std::stable_sort(tl.events.begin(), tl.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
  }
  return out;
}

std::vector<Session> sessionize(std::span<const Event> sequence, std::int64_t omega) {
  std::vector<Session> sessions;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    if (i == 0) {
      sessions.emplace_back();
    } else {
      const std::int64_t gap = sequence[i].timestamp - sequence[i - 1].timestamp;
      if (gap < 0) throw ContractViolation("sessionize: sequence is not sorted by timestamp");
      if (gap >= omega) sessions.emplace_back();
    }
    sessions.back().push_back(sequence[i]);
  }
  return sessions;
}

void PadConfig::validate() const {
  if (session_len <= 0) throw ConfigError("session length l must be positive");
  if (max_sessions <= 0) throw ConfigError("k_max must be positive");
  if (max_total < session_len) throw ConfigError("s_max must be at least the session length l");
}

int SessionizedHistory::real_count(int s) const {
  int n = 0;
  for (auto m : session_mask(s)) n += m;
  return n;
}

SessionizedHistory pad_truncate(std::span<const Session> sessions, const PadConfig& cfg) {
  cfg.validate();
  if (sessions.empty()) throw ContractViolation("pad_truncate: no sessions");
  const std::size_t l = static_cast<std::size_t>(cfg.session_len);

  std::size_t first = sessions.size() > static_cast<std::size_t>(cfg.max_sessions)
                          ? sessions.size() - static_cast<std::size_t>(cfg.max_sessions)
                          : 0;
  auto kept = [&](std::size_t s) { return std::min(sessions[s].size(), l); };
  std::size_t total = 0;
  for (std::size_t s = first; s < sessions.size(); ++s) total += kept(s);
  while (total > static_cast<std::size_t>(cfg.max_total)) {
    total -= kept(first);
    ++first;
  }

  SessionizedHistory h;
  h.l = cfg.session_len;
  const std::size_t k = sessions.size() - first;
  h.items.assign(k * l, Vocab::kPadding);
  h.categories.assign(k * l, Vocab::kPadding);
  h.timestamps.assign(k * l, -1);
  h.mask.assign(k * l, 0);
  for (std::size_t s = 0; s < k; ++s) {
    const Session& src = sessions[first + s];
    const std::size_t n = kept(first + s);
    for (std::size_t j = 0; j < n; ++j) {
      const Event& e = src[src.size() - n + j];
      const std::size_t slot = s * l + (l - n) + j;
      h.items[slot] = e.item;
      h.categories[slot] = e.category;
      h.timestamps[slot] = e.timestamp;
      h.mask[slot] = 1;
    }
  }
  return h;
}

std::vector<int> RankingTask::candidates() const {
  std::vector<int> c;
  c.reserve(negatives.size() + 1);
  c.push_back(target.item);
  c.insert(c.end(), negatives.begin(), negatives.end());
  return c;
}

SplitTargets temporal_split(std::span<const UserTimeline> timelines, const SplitConfig& cfg) {
  if (!(cfg.train_end < cfg.val_end)) throw ConfigError("train_end must be before val_end");
  if (cfg.omega <= 0) throw ConfigError("omega must be positive");
  cfg.pad.validate();

  SplitTargets out;
  for (const auto& tl : timelines) {
    const auto& ev = tl.events;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      // Context: every event with a strictly earlier timestamp.
      std::size_t ctx = i;
      while (ctx > 0 && ev[ctx - 1].timestamp >= ev[i].timestamp) --ctx;
      if (ctx == 0) {
        ++out.skipped_no_context;
        continue;
      }
      if (ev[i].timestamp <= cfg.train_end) {
        train_idx.push_back(i);
        continue;
      }
      auto sessions = sessionize(std::span<const Event>(ev.data(), ctx), cfg.omega);
      Target t{tl.user, ev[i].item, ev[i].category, ev[i].timestamp, pad_truncate(sessions, cfg.pad)};
      (ev[i].timestamp <= cfg.val_end ? out.val : out.test).push_back(std::move(t));
    }
    std::size_t begin = 0;
    if (cfg.max_train_targets_per_user > 0 && train_idx.size() > static_cast<std::size_t>(cfg.max_train_targets_per_user)) {
      begin = train_idx.size() - static_cast<std::size_t>(cfg.max_train_targets_per_user);
    }
    for (std::size_t j = begin; j < train_idx.size(); ++j) {
      const std::size_t i = train_idx[j];
      std::size_t ctx = i;
      while (ctx > 0 && ev[ctx - 1].timestamp >= ev[i].timestamp) --ctx;
      auto sessions = sessionize(std::span<const Event>(ev.data(), ctx), cfg.omega);
      out.train.push_back({tl.user, ev[i].item, ev[i].category, ev[i].timestamp, pad_truncate(sessions, cfg.pad)});
    }
  }
  return out;
}

std::vector<int> sample_negatives(int positive, int count, int item_count, std::mt19937_64& rng) {
  if (item_count <= 2) throw ConfigError("negative sampling needs at least two real items besides padding");
  if (count >= item_count - 1) {
    throw ContractViolation("sample_negatives: requested " + std::to_string(count) + " negatives from " +
                            std::to_string(item_count - 1) + " real items");
  }
  // Real items are 1..V-1; drawing from V-2 values and skipping the positive.
  const bool exclude = positive >= 1 && positive < item_count;
  std::uniform_int_distribution<int> dist(1, exclude ? item_count - 2 : item_count - 1);
  std::vector<int> out(static_cast<std::size_t>(count));
  for (auto& x : out) {
    int r = dist(rng);
    if (exclude && r >= positive) ++r;
    x = r;
  }
  return out;
}

std::vector<RankingTask> make_ranking_tasks(std::span<const Target> targets, int negatives_per_task, int item_count,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RankingTask> tasks;
  tasks.reserve(targets.size());
  for (const auto& t : targets) {
    tasks.push_back({t, sample_negatives(t.item, negatives_per_task, item_count, rng)});
  }
  return tasks;
}

void SyntheticConfig::validate() const {
  if (users <= 0) throw ConfigError("synthetic users must be positive");
  if (categories < 2) throw ConfigError("synthetic categories must be >= 2");
  if (items < categories) throw ConfigError("synthetic items must be >= categories");
  if (sessions_per_user < 1 || session_len < 1) throw ConfigError("synthetic sessions need positive size");
  if (sessions_per_user * session_len < 3) throw ConfigError("synthetic users need at least 3 interactions");
  if (drift_prob < 0 || drift_prob > 1 || noise_prob < 0 || noise_prob > 1) {
    throw ConfigError("synthetic probabilities must lie in [0, 1]");
  }
  if (session_gap < 20) throw ConfigError("synthetic session_gap must be >= 20 seconds");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::uniform_int_distribution<int> pick_category(0, cfg.categories - 1);
  std::bernoulli_distribution drift(cfg.drift_prob);
  std::bernoulli_distribution noise(cfg.noise_prob);
  std::discrete_distribution<int> behavior({70, 10, 12, 8});

  const std::int64_t g = cfg.session_gap;
  const std::int64_t min_intra = (g + 19) / 20;  // ceil(0.05 g)
  const std::int64_t max_intra = g / 2;
  std::uniform_int_distribution<std::int64_t> intra_gap(min_intra, max_intra);
  std::uniform_int_distribution<std::int64_t> inter_gap(g + g / 2, 3 * g);
  std::uniform_int_distribution<std::int64_t> jitter(0, (g * 4) / 100);

  // Items are dealt round-robin to categories, so every category owns
  // items/categories (+1) items.
  std::vector<std::vector<int>> by_category(static_cast<std::size_t>(cfg.categories));
  for (int i = 0; i < cfg.items; ++i) by_category[static_cast<std::size_t>(i % cfg.categories)].push_back(i);
  auto draw_item = [&](int category) {
    const auto& pool = by_category[static_cast<std::size_t>(category)];
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };

  SyntheticDataset ds;
  ds.val_end = 1512172800;  // 2017-12-02T00:00:00Z
  ds.train_end = ds.val_end - min_intra;

  for (int u = 0; u < cfg.users; ++u) {
    PlantedUser plant;
    plant.long_term_category = pick_category(rng);
    int current = plant.long_term_category;
    struct Raw {
      int item;
      std::int64_t t;
    };
    std::vector<Raw> events;
    std::int64_t t = 0;
    for (int s = 0; s < cfg.sessions_per_user; ++s) {
      if (s > 0 && drift(rng)) {
        // Switch to a different category.
        int next = pick_category(rng);
        while (next == current) next = pick_category(rng);
        current = next;
      }
      plant.short_term_category.push_back(current);
      for (int j = 0; j < cfg.session_len; ++j) {
        if (!events.empty()) t += (j == 0) ? inter_gap(rng) : intra_gap(rng);
        const bool held_out = s + 1 == cfg.sessions_per_user && j + 1 == cfg.session_len;
        const bool from_long = noise(rng) && !held_out;
        const int category = from_long ? plant.long_term_category : current;
        events.push_back({draw_item(category), t});
      }
    }
    // Anchor: second-to-last event lands just before val_end.
    const std::int64_t anchor = ds.val_end - jitter(rng);
    const std::int64_t shift = anchor - events[events.size() - 2].t;
    for (const auto& e : events) {
      InteractionRecord rec;
      rec.user_id = "u" + std::to_string(u);
      rec.item_id = "i" + std::to_string(e.item);
      rec.category_id = "c" + std::to_string(e.item % cfg.categories);
      rec.timestamp = e.t + shift;
      rec.behavior = static_cast<Behavior>(behavior(rng));
      ds.records.push_back(std::move(rec));
    }
    ds.planted.push_back(std::move(plant));
  }
  return ds;
}

}  // namespace slsrec
