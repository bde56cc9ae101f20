#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "slsrec/data.hpp"
#include "slsrec/error.hpp"

using namespace slsrec;

namespace {

std::vector<Event> events_at(std::initializer_list<std::int64_t> ts) {
  std::vector<Event> out;
  int i = 1;
  for (auto t : ts) out.push_back({i++, 1, t});
  return out;
}

std::vector<std::int64_t> stamps(const Session& s) {
  std::vector<std::int64_t> out;
  for (const auto& e : s) out.push_back(e.timestamp);
  return out;
}

Session session_of(int first_item, int n, std::int64_t t0) {
  Session s;
  for (int i = 0; i < n; ++i) s.push_back({first_item + i, 1, t0 + i});
  return s;
}

}  // namespace

TEST(Parse, ValidRows) {
  std::istringstream in(
      "user_id,item_id,category_id,behavior,timestamp\n"
      "u1,i1,c1,click,100\n"
      "u1,i2,c1,cart,200\n"
      "u2,i1,c1,purchase,300\n");
  const auto r = parse_interactions(in);
  EXPECT_EQ(r.records.size(), 3u);
  EXPECT_TRUE(r.rejects.empty());
}

TEST(Parse, BadTimestampIsRejectedWithLineNumber) {
  std::istringstream in(
      "user_id,item_id,category_id,behavior,timestamp\n"
      "u1,i1,c1,click,100\n"
      "u1,i2,c1,click,abc\n");
  const auto r = parse_interactions(in);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].line, 3u);
  EXPECT_EQ(r.records.size(), 1u);
}

TEST(Parse, MissingColumnIsConfigError) {
  std::istringstream in("user_id,item_id,behavior,timestamp\nu1,i1,click,1\n");
  EXPECT_THROW(parse_interactions(in), ConfigError);
}

TEST(Parse, TaobaoStyleTabSeparatedWithCustomSchema) {
  std::istringstream in(
      "user\titem\tcategory\tbehavior\ttimestamp\n"
      "1\t2268318\t2520377\tpv\t1511544070\n"
      "1\t2333346\t2520771\tfav\t1511561733\n"
      "1\t2576651\t149192\tcart\t1511572885\n"
      "2\t3830808\t4181361\tbuy\t1511593493\n"
      "2\t4365585\t2520377\tclick\t1511596146\n");
  ColumnSchema schema{"user", "item", "category", "behavior", "timestamp"};
  const auto r = parse_interactions(in, schema);
  ASSERT_EQ(r.records.size(), 5u);
  EXPECT_EQ(r.records[0].behavior, Behavior::kClick);
  EXPECT_EQ(r.records[1].behavior, Behavior::kCollect);
  EXPECT_EQ(r.records[2].behavior, Behavior::kCart);
  EXPECT_EQ(r.records[3].behavior, Behavior::kPurchase);
  EXPECT_EQ(r.records[3].item_id, "3830808");
  EXPECT_EQ(r.records[4].timestamp, 1511596146);
}

TEST(Parse, WriteThenParseRoundTrips) {
  SyntheticConfig cfg;
  cfg.users = 5;
  const auto synth = generate_synthetic(cfg, 1);
  std::stringstream buf;
  write_interactions(buf, synth.records);
  const auto back = parse_interactions(buf);
  ASSERT_EQ(back.records.size(), synth.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    EXPECT_EQ(back.records[i].item_id, synth.records[i].item_id);
    EXPECT_EQ(back.records[i].timestamp, synth.records[i].timestamp);
  }
}

TEST(Vocab, PaddingIsReservedAndIdsAreBijective) {
  std::vector<InteractionRecord> recs = {
      {"u", "a", "x", 1, Behavior::kClick}, {"u", "b", "y", 2, Behavior::kClick}, {"v", "a", "x", 3, Behavior::kClick}};
  const auto v = Vocab::build(recs);
  EXPECT_EQ(v.item_count(), 3);
  EXPECT_NE(v.item_index("a"), Vocab::kPadding);
  EXPECT_NE(v.item_index("a"), v.item_index("b"));
  EXPECT_EQ(v.item_name(v.item_index("b")), "b");
  EXPECT_EQ(v.item_category(v.item_index("b")), v.category_index("y"));
  EXPECT_EQ(v.user_count(), 2);
}

TEST(Sessionize, SplitsOnSmallOmega) {
  const auto seq = events_at({0, 30, 200, 210});
  const auto s = sessionize(seq, 60);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(stamps(s[0]), (std::vector<std::int64_t>{0, 30}));
  EXPECT_EQ(stamps(s[1]), (std::vector<std::int64_t>{200, 210}));
}

TEST(Sessionize, OneSessionOnLargeOmega) {
  const auto seq = events_at({0, 30, 200, 210});
  EXPECT_EQ(sessionize(seq, 300).size(), 1u);
}

TEST(Sessionize, GapEqualToOmegaStartsNewSession) {
  const auto seq = events_at({0, 60, 119});
  const auto s = sessionize(seq, 60);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].size(), 2u);
}

TEST(Sessionize, EmptySequence) { EXPECT_TRUE(sessionize({}, 60).empty()); }

TEST(Sessionize, UnsortedInputIsContractViolation) {
  const auto seq = events_at({10, 5});
  EXPECT_THROW(sessionize(seq, 60), ContractViolation);
}

TEST(Sessionize, LawsHoldOnRandomSequences) {
  std::mt19937_64 rng(2024);
  const std::vector<std::int64_t> omegas = {1, 7, 60, 600, 5400};
  for (int trial = 0; trial < 1500; ++trial) {
    const std::int64_t omega = omegas[static_cast<std::size_t>(trial) % omegas.size()];
    const auto seq = oracle::random_sequence(rng, omega);
    const auto sessions = sessionize(seq, omega);
    const auto r = oracle::check_session_laws(seq, sessions, omega);
    ASSERT_EQ(r.round_trip + r.intra_gap + r.boundary_gap + r.empty_session, 0) << "trial " << trial;

    std::size_t prev = SIZE_MAX;
    for (std::int64_t w : {1LL, 10LL, 100LL, 1000LL, 10000LL, 100000LL}) {
      const std::size_t n = sessionize(seq, w).size();
      ASSERT_LE(n, prev) << "trial " << trial << " omega " << w;
      prev = n;
    }
  }
}

TEST(PadTruncate, FrontPadsEachSession) {
  const std::vector<Session> sessions = {session_of(1, 3, 0), session_of(10, 2, 100)};
  const auto h = pad_truncate(sessions, {4, 10, 50});
  ASSERT_EQ(h.session_count(), 2);
  EXPECT_EQ(std::vector<std::uint8_t>(h.session_mask(0).begin(), h.session_mask(0).end()),
            (std::vector<std::uint8_t>{0, 1, 1, 1}));
  EXPECT_EQ(std::vector<std::uint8_t>(h.session_mask(1).begin(), h.session_mask(1).end()),
            (std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(h.session_items(1)[2], 10);
  EXPECT_EQ(h.session_items(1)[0], Vocab::kPadding);
}

TEST(PadTruncate, KeepsMostRecentSessions) {
  std::vector<Session> sessions;
  for (int s = 0; s < 7; ++s) sessions.push_back(session_of(10 * s + 1, 2, 100 * s));
  const auto h = pad_truncate(sessions, {4, 5, 50});
  ASSERT_EQ(h.session_count(), 5);
  EXPECT_EQ(h.session_items(0)[2], 21);
}

TEST(PadTruncate, KeepsMostRecentItemsOfLongSession) {
  const std::vector<Session> sessions = {session_of(1, 6, 0)};
  const auto h = pad_truncate(sessions, {4, 5, 50});
  EXPECT_EQ(std::vector<int>(h.items.begin(), h.items.end()), (std::vector<int>{3, 4, 5, 6}));
}

TEST(PadTruncate, TotalBudgetDropsOldestSessions) {
  std::vector<Session> sessions;
  for (int s = 0; s < 6; ++s) sessions.push_back(session_of(10 * s + 1, 10, 100 * s));  // 60 items
  const auto h = pad_truncate(sessions, {10, 10, 50});
  EXPECT_EQ(h.session_count(), 5);
  int real = 0;
  for (int s = 0; s < h.session_count(); ++s) real += h.real_count(s);
  EXPECT_LE(real, 50);
  EXPECT_EQ(h.session_items(0)[0], 11);
}

TEST(PadTruncate, RejectsBadShapes) {
  const std::vector<Session> sessions = {session_of(1, 2, 0)};
  EXPECT_THROW(pad_truncate(sessions, {0, 5, 50}), ConfigError);
  EXPECT_THROW(pad_truncate(sessions, {4, 0, 50}), ConfigError);
}

TEST(PadTruncate, PaddingOnlyAtMaskedSlots) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto seq = oracle::random_sequence(rng, 60);
    if (seq.empty()) continue;
    const auto h = pad_truncate(sessionize(seq, 60), {4, 6, 12});
    for (std::size_t i = 0; i < h.items.size(); ++i) {
      ASSERT_EQ(h.items[i] == Vocab::kPadding, h.mask[i] == 0);
      ASSERT_EQ(h.timestamps[i] < 0, h.mask[i] == 0);
    }
    ASSERT_GT(h.real_count(h.session_count() - 1), 0);
  }
}

TEST(Split, ContextNeverReachesTargetTime) {
  SyntheticConfig cfg;
  cfg.users = 150;
  const auto synth = generate_synthetic(cfg, 9);
  const auto vocab = Vocab::build(synth.records);
  const auto timelines = build_timelines(synth.records, vocab);
  SplitConfig sc{synth.train_end, synth.val_end, 5400, {4, 5, 20}, 0};
  const auto split = temporal_split(timelines, sc);
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& t : *part) {
      for (std::size_t i = 0; i < t.history.timestamps.size(); ++i) {
        if (t.history.mask[i]) ASSERT_LT(t.history.timestamps[i], t.timestamp);
      }
    }
  }
  for (const auto& t : split.train) EXPECT_LE(t.timestamp, synth.train_end);
  for (const auto& t : split.val) {
    EXPECT_GT(t.timestamp, synth.train_end);
    EXPECT_LE(t.timestamp, synth.val_end);
  }
  for (const auto& t : split.test) EXPECT_GT(t.timestamp, synth.val_end);
  EXPECT_EQ(split.val.size(), 150u);
  EXPECT_EQ(split.test.size(), 150u);
}

TEST(Split, SingleUserEightOneOne) {
  std::vector<InteractionRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back({"u", "i" + std::to_string(i), "c", 1000 + 100 * i, Behavior::kClick});
  const auto vocab = Vocab::build(recs);
  const auto timelines = build_timelines(recs, vocab);
  const auto split = temporal_split(timelines, {1700, 1800, 150, {10, 10, 50}, 0});
  EXPECT_EQ(split.skipped_no_context, 1u);  // the first event has no past
  EXPECT_EQ(split.train.size(), 7u);
  ASSERT_EQ(split.val.size(), 1u);
  ASSERT_EQ(split.test.size(), 1u);
  const auto& test = split.test[0];
  for (std::size_t i = 0; i < test.history.items.size(); ++i) {
    if (test.history.mask[i]) EXPECT_NE(test.history.items[i], test.item);
  }
  int real = 0;
  for (auto m : test.history.mask) real += m;
  EXPECT_EQ(real, 9);
}

TEST(Split, TargetAtTrainEndIsTraining) {
  std::vector<InteractionRecord> recs = {{"u", "a", "c", 10, Behavior::kClick}, {"u", "b", "c", 20, Behavior::kClick}};
  const auto vocab = Vocab::build(recs);
  const auto split = temporal_split(build_timelines(recs, vocab), {20, 30, 100, {4, 4, 16}, 0});
  EXPECT_EQ(split.train.size(), 1u);
  EXPECT_TRUE(split.val.empty());
}

TEST(Split, TiedTimestampsAreNotContext) {
  std::vector<InteractionRecord> recs = {{"u", "a", "c", 10, Behavior::kClick},
                                         {"u", "b", "c", 20, Behavior::kClick},
                                         {"u", "d", "c", 20, Behavior::kClick}};
  const auto vocab = Vocab::build(recs);
  const auto split = temporal_split(build_timelines(recs, vocab), {100, 200, 100, {4, 4, 16}, 0});
  ASSERT_EQ(split.train.size(), 2u);
  for (const auto& t : split.train) {
    int real = 0;
    for (auto m : t.history.mask) real += m;
    EXPECT_EQ(real, 1);
  }
}

TEST(Split, CurrentSessionIsTheLatestBeforeTarget) {
  // Target opens a new session; the most recent non-empty session is current.
  std::vector<InteractionRecord> recs = {{"u", "a", "c", 0, Behavior::kClick},
                                         {"u", "b", "c", 10, Behavior::kClick},
                                         {"u", "d", "c", 1000, Behavior::kClick},
                                         {"u", "e", "c", 5000, Behavior::kClick}};
  const auto vocab = Vocab::build(recs);
  const auto split = temporal_split(build_timelines(recs, vocab), {1, 2, 100, {4, 4, 16}, 0});
  ASSERT_EQ(split.test.size(), 3u);
  const auto& last = split.test.back();
  ASSERT_EQ(last.history.session_count(), 2);
  EXPECT_EQ(last.history.session_items(1)[3], vocab.item_index("d"));
}

TEST(Negatives, TinyVocabulary) {
  std::mt19937_64 rng(1);
  const auto n = sample_negatives(1, 1, 3, rng);
  EXPECT_EQ(n, std::vector<int>{2});
  EXPECT_THROW(sample_negatives(1, 1, 2, rng), ConfigError);
}

TEST(Negatives, ExcludePositiveAndPadding) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int positive = 1 + trial % 9;
    for (int x : sample_negatives(positive, 5, 10, rng)) {
      ASSERT_NE(x, positive);
      ASSERT_GE(x, 1);
      ASSERT_LE(x, 9);
    }
  }
}

TEST(Negatives, FixedSeedIsReproducible) {
  std::mt19937_64 a(99);
  std::mt19937_64 b(99);
  EXPECT_EQ(sample_negatives(4, 20, 50, a), sample_negatives(4, 20, 50, b));
}

TEST(Negatives, UniformWithinThreeSigma) {
  // 10^6 draws over the 19 admissible items; each count is binomial.
  const int V = 21;
  const int positive = 7;
  const int draws = 1'000'000;
  std::mt19937_64 rng(12345);
  std::vector<long> counts(V, 0);
  for (int call = 0; call < draws / 10; ++call) {
    for (int x : sample_negatives(positive, 10, V, rng)) ++counts[static_cast<std::size_t>(x)];
  }
  const double p = 1.0 / (V - 2);
  const double mean = draws * p;
  const double sigma = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  for (int i = 1; i < V; ++i) {
    if (i == positive) {
      EXPECT_EQ(counts[static_cast<std::size_t>(i)], 0);
      continue;
    }
    EXPECT_LT(std::abs(counts[static_cast<std::size_t>(i)] - mean), 3 * sigma) << "item " << i;
    chi2 += std::pow(counts[static_cast<std::size_t>(i)] - mean, 2) / mean;
  }
  EXPECT_EQ(counts[0], 0);
  // 18 degrees of freedom; 42.3 is the 0.999 quantile.
  EXPECT_LT(chi2, 42.3);
}

TEST(Synthetic, DeterministicForSeed) {
  SyntheticConfig cfg;
  cfg.users = 20;
  const auto a = generate_synthetic(cfg, 5);
  const auto b = generate_synthetic(cfg, 5);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].item_id, b.records[i].item_id);
    EXPECT_EQ(a.records[i].timestamp, b.records[i].timestamp);
  }
}

TEST(Synthetic, GapsRespectPlantedOmega) {
  SyntheticConfig cfg;
  cfg.users = 100;
  const auto synth = generate_synthetic(cfg, 6);
  const auto vocab = Vocab::build(synth.records);
  for (const auto& tl : build_timelines(synth.records, vocab)) {
    const auto sessions = sessionize(tl.events, cfg.session_gap);
    ASSERT_EQ(sessions.size(), static_cast<std::size_t>(cfg.sessions_per_user));
    for (const auto& s : sessions) ASSERT_EQ(s.size(), static_cast<std::size_t>(cfg.session_len));
  }
}

TEST(Synthetic, NoDriftMeansOneCategory) {
  SyntheticConfig cfg;
  cfg.users = 50;
  cfg.drift_prob = 0;
  const auto synth = generate_synthetic(cfg, 7);
  for (const auto& u : synth.planted) {
    for (int c : u.short_term_category) EXPECT_EQ(c, u.long_term_category);
  }
}

TEST(Synthetic, NoNoiseMeansPureSessions) {
  SyntheticConfig cfg;
  cfg.users = 50;
  cfg.noise_prob = 0;
  const auto synth = generate_synthetic(cfg, 8);
  const auto vocab = Vocab::build(synth.records);
  for (const auto& tl : build_timelines(synth.records, vocab)) {
    for (const auto& s : sessionize(tl.events, cfg.session_gap)) {
      std::set<int> cats;
      for (const auto& e : s) cats.insert(e.category);
      EXPECT_EQ(cats.size(), 1u);
    }
  }
}

TEST(Synthetic, CategoryMatchingOracleBeatsChance) {
  const SyntheticConfig cfg;  // the default planted dataset
  const auto synth = generate_synthetic(cfg, 42);
  const auto vocab = Vocab::build(synth.records);
  SplitConfig sc{synth.train_end, synth.val_end, cfg.session_gap, {10, 10, 50}, 1};
  const auto split = temporal_split(build_timelines(synth.records, vocab), sc);
  const auto tasks = make_ranking_tasks(split.test, 49, vocab.item_count(), 42);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& t : tasks) {
    const auto& h = t.target.history;
    const int k = h.session_count() - 1;
    const auto cats = h.session_categories(k);
    const auto mask = h.session_mask(k);
    const int dom = oracle::dominant({cats.begin(), cats.end()}, {mask.begin(), mask.end()});
    const auto cands = t.candidates();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      scores.push_back(vocab.item_category(cands[i]) == dom ? 1.0 : 0.0);
      labels.push_back(i == 0);
    }
  }
  EXPECT_GT(oracle::pairwise_auc(scores, labels), 0.75);
}

TEST(Synthetic, HeldOutPositiveComesFromFinalShortTermCategory) {
  SyntheticConfig cfg;
  cfg.users = 300;
  cfg.noise_prob = 0.9;
  const auto synth = generate_synthetic(cfg, 5);
  const std::size_t per_user = static_cast<std::size_t>(cfg.sessions_per_user * cfg.session_len);
  int second_last_long = 0;
  for (std::size_t u = 0; u < synth.planted.size(); ++u) {
    const auto& plant = synth.planted[u];
    const auto& last = synth.records[(u + 1) * per_user - 1];
    EXPECT_EQ(last.category_id, "c" + std::to_string(plant.short_term_category.back()));
    const auto& prev = synth.records[(u + 1) * per_user - 2];
    second_last_long += prev.category_id == "c" + std::to_string(plant.long_term_category);
  }
  EXPECT_GT(second_last_long, 200);
}
