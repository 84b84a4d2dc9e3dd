#include "support.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/scoring.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace wayfinder;
using wayfinder::test::fixture_map;

namespace {

Attempt attempt(int replans, int length, bool success) {
  Attempt a;
  a.replans = replans;
  a.length = length;
  a.success = success;
  return a;
}

EvaluationResult result(double replan, int len_min, double succ, int budget = 50) {
  EvaluationResult r;
  r.replan_mean = replan;
  r.len_min = len_min;
  r.succ = succ;
  r.budget = budget;
  return r;
}

std::vector<MapScore> scores(const std::vector<double>& xs) {
  std::vector<MapScore> out;
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({"e" + std::to_string(i), "m", xs[i]});
  return out;
}

}  // namespace

TEST(Aggregate, ReplanMeanAndLenMin) {
  const auto r = aggregate("e", "m", 20, {attempt(0, 9, true), attempt(2, 20, false), attempt(1, 7, true)});
  EXPECT_DOUBLE_EQ(r.replan_mean, 1.0);
  EXPECT_EQ(r.len_min, 7);
  EXPECT_NEAR(r.succ, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.mean_length, 12.0, 1e-12);
}

TEST(Aggregate, NoSuccessChargesTheBudget) {
  const auto r = aggregate("e", "m", 20, {attempt(3, 20, false), attempt(3, 20, false)});
  EXPECT_EQ(r.len_min, 20);
  EXPECT_EQ(r.succ, 0.0);
}

TEST(Aggregate, OrderDoesNotMatter) {
  const auto a = aggregate("e", "m", 30, {attempt(0, 9, true), attempt(2, 30, false), attempt(1, 12, true)});
  const auto b = aggregate("e", "m", 30, {attempt(1, 12, true), attempt(0, 9, true), attempt(2, 30, false)});
  EXPECT_EQ(a.replan_mean, b.replan_mean);
  EXPECT_EQ(a.len_min, b.len_min);
  EXPECT_EQ(a.succ, b.succ);
}

TEST(Evaluate, OracleCorridor) {
  const auto m = fixture_map("corridor5");
  OracleTranslator t;
  const auto r = evaluate({"o", m.id(), ""}, m, t, {}, 3);
  EXPECT_EQ(r.replan_mean, 0.0);
  EXPECT_EQ(r.len_min, 6);
  EXPECT_EQ(r.succ, 1.0);
  EXPECT_EQ(r.n, 3);
}

TEST(Evaluate, ParallelismDoesNotChangeResults) {
  const auto m = fixture_map("rooms");
  KeywordTranslator t;
  const Explanation e{"k", m.id(), "go down then right, the treasure is in the bottom right corner"};
  const auto a = evaluate(e, m, t, {}, 8, 1);
  const auto b = evaluate(e, m, t, {}, 8, 4);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(a.attempts[i].seed, b.attempts[i].seed);
    EXPECT_EQ(a.attempts[i].length, b.attempts[i].length);
  }
}

TEST(Utility, Arithmetic) {
  UtilityParams p{1.0, 0.1, 5.0, 1.0};
  EXPECT_NEAR(utility(result(0, 6, 1.0), p), 4.4, 1e-12);
  EXPECT_NEAR(utility(result(1, 6, 1.0), p), 3.4, 1e-12);
  EXPECT_LT(utility(result(1, 6, 1.0), p), utility(result(0, 6, 1.0), p));
}

TEST(Utility, OnlyGamma) {
  UtilityParams p{0.0, 0.0, 1.0, 1.0};
  EXPECT_EQ(utility(result(2, 30, 0.7), p), 0.7);
}

TEST(Utility, DefaultBetaIsInverseBudget) {
  UtilityParams p;
  EXPECT_NEAR(utility(result(0, 10, 1.0, 40), p), -0.25 + 1.0, 1e-12);
}

TEST(Utility, RejectsNegativeWeights) {
  UtilityParams p;
  p.alpha = -1;
  EXPECT_THROW(p.check(), std::invalid_argument);
}

TEST(LengthScore, WhitespaceTokens) {
  EXPECT_EQ(length_score({"a", "m", "go up"}), -2);
  EXPECT_EQ(length_score({"a", "m", ""}), 0);
  EXPECT_EQ(length_score({"a", "m", "go  up"}), -2);
  EXPECT_EQ(length_score({"a", "m", "\tgo\nup \n"}), -2);
}

TEST(DirectScore, Arithmetic) {
  UtilityParams p{0.1, std::nullopt, 1.0, 5.0};
  auto r = result(0, 6, 1.0);
  r.mean_length = 6;
  EXPECT_NEAR(direct_score(r, p), 4.4, 1e-12);
  auto f = result(0, 20, 0.0, 20);
  f.mean_length = 20;
  EXPECT_NEAR(direct_score(f, p), -2.0, 1e-12);
  EXPECT_EQ(direct_score(f, UtilityParams{0.0, std::nullopt, 1.0, 0.0}), 0.0);
}

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_scores({2, 5, 8}), (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(normalize_scores({4, 4, 4}), (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(normalize_scores({7}), (std::vector<double>{0.5}));
}

TEST(Normalize, PerMapGroups) {
  const auto n = normalize_per_map({{"a", "m1", 1}, {"b", "m2", 10}, {"c", "m1", 3}, {"d", "m2", 10}});
  EXPECT_EQ(n, (std::vector<double>{0, 0.5, 1, 0.5}));
}

TEST(Bins, SixScores) {
  const auto bins = bin_quality(scores({0.1, 0.2, 0.4, 0.5, 0.8, 0.9}));
  ASSERT_EQ(bins.size(), 3u);
  EXPECT_EQ(bins[0].label, Quality::Bad);
  EXPECT_EQ(bins[0].members, (std::vector<std::string>{"e0", "e1"}));
  EXPECT_EQ(bins[1].members, (std::vector<std::string>{"e2", "e3"}));
  EXPECT_EQ(bins[2].members, (std::vector<std::string>{"e4", "e5"}));
  EXPECT_EQ(bins[0].selected_explanation_id, "e0");
  EXPECT_EQ(bins[1].selected_explanation_id, "e2");
  EXPECT_EQ(bins[2].selected_explanation_id, "e5");
}

TEST(Bins, ThreeScoresOnePerBin) {
  const auto bins = bin_quality(scores({3, 1, 2}));
  EXPECT_EQ(bins[0].selected_explanation_id, "e1");
  EXPECT_EQ(bins[1].selected_explanation_id, "e2");
  EXPECT_EQ(bins[2].selected_explanation_id, "e0");
  for (const auto& b : bins) EXPECT_EQ(b.members.size(), 1u);
}

TEST(Bins, TooFew) {
  EXPECT_THROW(bin_quality(scores({1, 2})), TooFewExplanations);
}

TEST(Bins, TiesOrderedById) {
  const auto bins = bin_quality({{"b", "m", 1}, {"a", "m", 1}, {"c", "m", 1}});
  EXPECT_EQ(bins[0].members, (std::vector<std::string>{"a"}));
  EXPECT_EQ(bins[2].members, (std::vector<std::string>{"c"}));
}

TEST(Speaker, ClosedForm) {
  Eigen::VectorXd u(2);
  u << 0, 1;
  const auto s = speaker_distribution(u, {1.0});
  EXPECT_NEAR(s(0), 1.0 / (1.0 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(s(1), std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-15);
  Eigen::VectorXd big(2);
  big << 1000, 1001;
  const auto t = speaker_distribution(big, {1.0});
  EXPECT_NEAR(t(0), s(0), 1e-12);
  EXPECT_TRUE(std::isfinite(t(1)));
}

TEST(Speaker, LambdaZeroIsUniform) {
  Eigen::VectorXd u(4);
  u << -3, 0, 2, 100;
  const auto s = speaker_distribution(u, {0.0});
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s(i), 0.25, 1e-12);
}
