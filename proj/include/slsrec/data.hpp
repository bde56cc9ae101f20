#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace slsrec {

enum class Behavior : std::uint8_t { kClick, kCollect, kCart, kPurchase };

const char* behavior_name(Behavior b);
// Accepts click/pv, collect/fav, cart, purchase/buy (case-insensitive).
bool parse_behavior(std::string_view text, Behavior& out);

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::string category_id;
  std::int64_t timestamp = 0;
  Behavior behavior = Behavior::kClick;
};

// Header names of the required columns; column order in the file is free.
struct ColumnSchema {
  std::string user = "user_id";
  std::string item = "item_id";
  std::string category = "category_id";
  std::string behavior = "behavior";
  std::string timestamp = "timestamp";
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct ParseResult {
  std::vector<InteractionRecord> records;
  std::vector<RejectedRow> rejects;
};

// Delimiter (comma or tab) is detected from the header line.
ParseResult parse_interactions(std::istream& in, const ColumnSchema& schema = {});
ParseResult parse_interactions(const std::filesystem::path& path, const ColumnSchema& schema = {});

void write_interactions(std::ostream& out, std::span<const InteractionRecord> records);

// Item index 0 and category index 0 are padding; real ids start at 1.
class Vocab {
 public:
  static constexpr int kPadding = 0;

  static Vocab build(std::span<const InteractionRecord> records);

  int item_count() const { return static_cast<int>(item_names_.size()); }  // V, padding included
  int category_count() const { return static_cast<int>(category_names_.size()); }
  int user_count() const { return static_cast<int>(user_names_.size()); }

  int item_index(const std::string& id) const;
  int category_index(const std::string& id) const;
  int user_index(const std::string& id) const;
  const std::string& item_name(int index) const { return item_names_.at(static_cast<std::size_t>(index)); }
  const std::string& user_name(int index) const { return user_names_.at(static_cast<std::size_t>(index)); }
  // Category of an item, taken from its first occurrence.
  int item_category(int item) const { return item_category_.at(static_cast<std::size_t>(item)); }

 private:
  std::vector<std::string> item_names_{"<pad>"};
  std::vector<std::string> category_names_{"<pad>"};
  std::vector<std::string> user_names_;
  std::unordered_map<std::string, int> items_;
  std::unordered_map<std::string, int> categories_;
  std::unordered_map<std::string, int> users_;
  std::vector<int> item_category_{0};
};

struct Event {
  int item = 0;
  int category = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

using Session = std::vector<Event>;

struct UserTimeline {
  int user = 0;
  std::vector<Event> events;  // stable-sorted by timestamp
};

// Groups records by user (ascending user index), stable-sorting each user's
// events by timestamp so ties keep file order.
std::vector<UserTimeline> build_timelines(std::span<const InteractionRecord> records, const Vocab& vocab);

// Consecutive events share a session iff their gap is < omega.
std::vector<Session> sessionize(std::span<const Event> sequence, std::int64_t omega);

struct PadConfig {
  int session_len = 10;   // l
  int max_sessions = 10;  // k_max
  int max_total = 50;     // s_max

  void validate() const;
};

// Sessions 0..k-1, oldest first, each front-padded to `l` slots and stored
// contiguously: slot j of session s lives at s * l + j.
struct SessionizedHistory {
  int l = 0;
  std::vector<int> items;
  std::vector<int> categories;
  std::vector<std::int64_t> timestamps;  // -1 at padding
  std::vector<std::uint8_t> mask;        // 1 = real interaction

  int session_count() const { return l == 0 ? 0 : static_cast<int>(items.size()) / l; }
  std::span<const int> session_items(int s) const { return {items.data() + s * l, static_cast<std::size_t>(l)}; }
  std::span<const int> session_categories(int s) const {
    return {categories.data() + s * l, static_cast<std::size_t>(l)};
  }
  std::span<const std::uint8_t> session_mask(int s) const {
    return {mask.data() + s * l, static_cast<std::size_t>(l)};
  }
  int real_count(int s) const;
};

// Keeps the k_max most recent sessions and the l most recent items of each,
// then drops oldest sessions while more than s_max items remain.
SessionizedHistory pad_truncate(std::span<const Session> sessions, const PadConfig& cfg);

// One prediction target with the history strictly before it.
struct Target {
  int user = 0;
  int item = 0;
  int category = 0;
  std::int64_t timestamp = 0;
  SessionizedHistory history;
};

struct RankingTask {
  Target target;
  std::vector<int> negatives;

  // Positive first, then negatives.
  std::vector<int> candidates() const;
};

struct SplitConfig {
  std::int64_t train_end = 0;
  std::int64_t val_end = 0;
  std::int64_t omega = 5400;
  PadConfig pad;
  int max_train_targets_per_user = 0;  // 0 = every eligible target
};

struct SplitTargets {
  std::vector<Target> train;
  std::vector<Target> val;
  std::vector<Target> test;
  std::size_t skipped_no_context = 0;
};

// Targets with timestamp <= train_end train, (train_end, val_end] validate,
// later ones test. A target's context is every event with a strictly smaller
// timestamp.
SplitTargets temporal_split(std::span<const UserTimeline> timelines, const SplitConfig& cfg);

// Uniform over real items, excluding the positive, with replacement.
std::vector<int> sample_negatives(int positive, int count, int item_count, std::mt19937_64& rng);

std::vector<RankingTask> make_ranking_tasks(std::span<const Target> targets, int negatives_per_task, int item_count,
                                            std::uint64_t seed);

struct SyntheticConfig {
  int users = 2000;
  int items = 500;
  int categories = 20;
  int sessions_per_user = 6;
  int session_len = 8;
  double drift_prob = 0.5;
  double noise_prob = 0.2;
  std::int64_t session_gap = 5400;  // planted omega, seconds

  void validate() const;
};

struct PlantedUser {
  int long_term_category = 0;            // raw category number
  std::vector<int> short_term_category;  // per session
};

struct SyntheticDataset {
  std::vector<InteractionRecord> records;
  std::int64_t train_end = 0;
  std::int64_t val_end = 0;
  std::vector<PlantedUser> planted;
};

// Planted interests: a persistent long-term category per user and a
// per-session short-term category that drifts. Each user's last event falls
// after val_end, the one before it in (train_end, val_end], the rest at or
// before train_end.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

// Derives an independent stream from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace slsrec
