#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "slsrec/error.hpp"
#include "slsrec/objectives.hpp"

using namespace slsrec;

namespace {

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Mat random_row(int d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0, scale);
  Mat m(1, d);
  for (int i = 0; i < d; ++i) m(0, i) = n(rng);
  return m;
}

double f(const Mat& a, const Mat& p, const Mat& n, double m) {
  return std::max((a - p).squaredNorm() - (a - n).squaredNorm() + m, 0.0);
}

// Four hinge terms written out from the calibration inequalities.
double four_term_oracle(const Mat& uL, const Mat& uS, const Mat& UL, const Mat& US, double m, bool literal) {
  return f(uL, UL, US, m) + f(UL, uL, uS, m) + (literal ? f(uS, UL, US, m) : f(uS, US, UL, m)) + f(US, uS, uL, m);
}

double con(const Mat& uL, const Mat& uS, const Mat& UL, const Mat& US, double m, bool literal = false) {
  Tape t;
  return contrastive_loss(t.constant(uL), t.constant(uS), t.constant(UL), t.constant(US), m, literal).scalar();
}

SessionizedHistory history_of(const std::vector<std::vector<int>>& sessions, int l) {
  SessionizedHistory h;
  h.l = l;
  for (const auto& s : sessions) {
    for (int j = 0; j < l - static_cast<int>(s.size()); ++j) {
      h.items.push_back(0);
      h.categories.push_back(0);
      h.timestamps.push_back(-1);
      h.mask.push_back(0);
    }
    for (int item : s) {
      h.items.push_back(item);
      h.categories.push_back(1);
      h.timestamps.push_back(1);
      h.mask.push_back(1);
    }
  }
  return h;
}

}  // namespace

TEST(Triplet, Examples) {
  Tape t;
  auto tr = [&](const Mat& a, const Mat& p, const Mat& n, double m) {
    return triplet(t.constant(a), t.constant(p), t.constant(n), m).scalar();
  };
  EXPECT_EQ(tr(row({0, 0}), row({0, 0}), row({1, 0}), 0.5), 0.0);
  EXPECT_NEAR(tr(row({0}), row({2}), row({1}), 0.1), 3.1, 1e-15);
  std::mt19937_64 rng(1);
  const Mat a = random_row(5, rng);
  const Mat p = random_row(5, rng);
  EXPECT_NEAR(tr(a, p, p, 0.37), 0.37, 1e-15);
}

TEST(Contrastive, PerfectlySeparatedIsZero) {
  // u^L = U^L, u^S = U^S, the two far apart relative to the margin.
  const Mat L = row({0, 0, 0});
  const Mat S = row({3, 0, 0});
  EXPECT_EQ(con(L, S, L, S, 0.5), 0.0);
  // The literal variant anchors the third term on u^S with U^L as positive: 9 + 0.5.
  EXPECT_EQ(con(L, S, L, S, 0.5, true), 9.5);
}

TEST(Contrastive, AllEqualIsFourMargins) {
  std::mt19937_64 rng(2);
  const Mat x = random_row(6, rng);
  EXPECT_NEAR(con(x, x, x, x, 0.5), 2.0, 1e-15);
  EXPECT_NEAR(con(x, x, x, x, 0.5, true), 2.0, 1e-15);
}

TEST(Contrastive, MatchesFourTermOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const Mat uL = random_row(8, rng), uS = random_row(8, rng), UL = random_row(8, rng), US = random_row(8, rng);
    for (bool literal : {false, true}) {
      EXPECT_NEAR(con(uL, uS, UL, US, 0.5, literal), four_term_oracle(uL, uS, UL, US, 0.5, literal), 1e-12);
    }
  }
}

TEST(Contrastive, TranslationInvariant) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat uL = random_row(8, rng), uS = random_row(8, rng), UL = random_row(8, rng), US = random_row(8, rng);
    const Mat c = random_row(8, rng, 3.0);
    EXPECT_NEAR(con(uL, uS, UL, US, 0.5), con(uL + c, uS + c, UL + c, US + c, 0.5), 1e-12);
  }
}

TEST(Contrastive, ZeroExactlyWhenConstraintsHoldWithSlack) {
  std::mt19937_64 rng(5);
  const double m = 0.5;
  int zero_cases = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Mat UL = random_row(3, rng), US = random_row(3, rng);
    const Mat uL = UL + random_row(3, rng, 0.3), uS = US + random_row(3, rng, 0.3);
    auto d = [](const Mat& a, const Mat& b) { return (a - b).squaredNorm(); };
    const bool slack = d(uL, UL) + m <= d(uL, US) && d(UL, uL) + m <= d(UL, uS) && d(uS, US) + m <= d(uS, UL) &&
                       d(US, uS) + m <= d(US, uL);
    const double value = con(uL, uS, UL, US, m);
    EXPECT_GE(value, 0.0);
    EXPECT_EQ(value == 0.0, slack);
    zero_cases += slack;
    if (slack) EXPECT_TRUE(satisfies_constraints(uL, uS, UL, US));
  }
  EXPECT_GT(zero_cases, 50);
}

TEST(Contrastive, GradientMatchesFiniteDifferencesAwayFromKinks) {
  std::mt19937_64 rng(6);
  const double m = 0.5;
  const double eps = 1e-5;
  int checked = 0;
  while (checked < 100) {
    std::vector<Mat> in = {random_row(4, rng), random_row(4, rng), random_row(4, rng), random_row(4, rng)};
    const Mat &uL = in[0], &uS = in[1], &UL = in[2], &US = in[3];
    auto arg = [&](const Mat& a, const Mat& p, const Mat& n) {
      return (a - p).squaredNorm() - (a - n).squaredNorm() + m;
    };
    const double args[] = {arg(uL, UL, US), arg(UL, uL, uS), arg(uS, US, UL), arg(US, uS, uL)};
    bool near_kink = false;
    for (double a : args) near_kink = near_kink || std::abs(a) < 1e-3;
    if (near_kink) continue;
    ++checked;

    Tape t;
    std::vector<Var> v;
    for (const auto& x : in) v.push_back(t.variable(x));
    t.backward(contrastive_loss(v[0], v[1], v[2], v[3], m));
    for (std::size_t k = 0; k < 4; ++k) {
      for (Eigen::Index i = 0; i < 4; ++i) {
        auto plus = in, minus = in;
        plus[k](0, i) += eps;
        minus[k](0, i) -= eps;
        const double numeric =
            (con(plus[0], plus[1], plus[2], plus[3], m) - con(minus[0], minus[1], minus[2], minus[3], m)) / (2 * eps);
        EXPECT_LT(std::abs(v[k].grad()(0, i) - numeric) / std::max(1.0, std::abs(numeric)), 1e-4);
      }
    }
  }
}

TEST(MainLoss, UniformHalfIsLn2) {
  for (int n : {2, 5, 50}) {
    Tape t;
    Mat y = Mat::Zero(n, 1);
    y(0, 0) = 1;
    EXPECT_NEAR(main_loss(t.constant(Mat::Constant(n, 1, 0.5)), y).scalar(), std::log(2.0), 1e-12);
  }
}

TEST(MainLoss, ExactPredictionIsClampedToNearZero) {
  Tape t;
  Mat s(3, 1);
  s << 1.0, 0.0, 0.0;
  ClampStats stats;
  const double v = main_loss(t.constant(s), s, &stats).scalar();
  EXPECT_GE(v, 0.0);
  EXPECT_LT(v, 1e-11);
  EXPECT_EQ(stats.clamped, 3);
}

TEST(MainLoss, MatchesCrossEntropyOracleAndIsPermutationInvariant) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 20;
    Mat s(n, 1), y = Mat::Zero(n, 1);
    for (int i = 0; i < n; ++i) s(i, 0) = u(rng);
    y(trial % n, 0) = 1;
    double expected = 0;
    for (int i = 0; i < n; ++i) expected -= y(i, 0) * std::log(s(i, 0)) + (1 - y(i, 0)) * std::log(1 - s(i, 0));
    expected /= n;
    Tape t;
    EXPECT_NEAR(main_loss(t.constant(s), y).scalar(), expected, 1e-12);

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + n, rng);
    const Mat ps = perm * s, py = perm * y;
    EXPECT_NEAR(main_loss(t.constant(ps), py).scalar(), expected, 1e-12);
  }
}

TEST(TotalLoss, LambdaIsLinear) {
  Tape t;
  std::vector<Var> mains = {t.constant(Mat::Constant(1, 1, 0.7)), t.constant(Mat::Constant(1, 1, 0.2))};
  std::vector<Var> cons = {t.constant(Mat::Constant(1, 1, 1.5))};
  EXPECT_NEAR(total_loss(mains, cons, 0.0).scalar(), 0.9, 1e-15);
  const double one = total_loss(mains, cons, 0.2).scalar() - 0.9;
  const double two = total_loss(mains, cons, 0.4).scalar() - 0.9;
  EXPECT_NEAR(two, 2 * one, 1e-15);
  EXPECT_NEAR(one, 0.3, 1e-15);
}

TEST(SupervisedReps, MeansOverRealItems) {
  Mat emb(6, 2);
  emb << 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  Tape t;
  Var e = t.constant(emb);
  const auto h = history_of({{1}, {2, 3}}, 3);
  const auto reps = supervised_reps(e, h);
  ASSERT_TRUE(reps);
  EXPECT_EQ(reps->long_ref.value(), emb.row(1));
  EXPECT_EQ(reps->short_ref.value(), Mat((emb.row(2) + emb.row(3)) / 2));

  const auto three = history_of({{1, 5}, {4}, {2}}, 2);
  const auto r3 = supervised_reps(e, three);
  EXPECT_TRUE(r3->long_ref.value().isApprox(Mat((emb.row(1) + emb.row(5) + emb.row(4)) / 3), 1e-15));
}

TEST(SupervisedReps, SingleSessionHasNoReference) {
  Tape t;
  Var e = t.constant(Mat::Ones(4, 2));
  EXPECT_FALSE(supervised_reps(e, history_of({{1, 2}}, 3)));
}

TEST(SupervisedReps, IdenticalEmbeddingsCollapse) {
  Tape t;
  Var e = t.constant(Mat::Constant(5, 3, 0.25));
  const auto reps = supervised_reps(e, history_of({{1, 2}, {3}, {4}}, 2));
  EXPECT_EQ(reps->long_ref.value(), reps->short_ref.value());
}

TEST(LossConfig, Validation) {
  LossConfig c;
  c.margin = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.n_candidates = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}
