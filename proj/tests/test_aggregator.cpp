#include <gtest/gtest.h>

#include <random>

#include "eopfair/aggregator.hpp"
#include "support.hpp"

using namespace eopfair;

namespace {

Participant voter(const std::string& id, std::vector<LikertLevel> levels) {
  Participant p;
  p.participant_id = id;
  for (std::size_t j = 0; j < levels.size(); ++j) p.likert.push_back({j, levels[j], std::nullopt});
  return p;
}

std::map<std::string, std::vector<ComparisonRow>> instance(std::uint64_t seed, std::size_t people, std::size_t dim,
                                                           int rows_each) {
  std::mt19937_64 rng(seed);
  const Vector centre = testsupport::random_unit(dim, rng, 0.8);
  std::map<std::string, std::vector<ComparisonRow>> sets;
  for (std::size_t p = 0; p < people; ++p) {
    Vector truth = centre;
    const Vector noise = testsupport::random_unit(dim, rng, 0.2);
    for (std::size_t i = 0; i < dim; ++i) truth[i] += noise[i];
    sets.emplace("p" + std::to_string(p), testsupport::probit_rows(project_unit_ball(truth), rows_each, rng));
  }
  return sets;
}

}  // namespace

TEST(Vote, StrictMajority) {
  using L = LikertLevel;
  const std::vector<Participant> ps{voter("a", {L::Disagree, L::Agree, L::SomewhatDisagree}),
                                    voter("b", {L::SomewhatDisagree, L::Agree, L::SomewhatAgree}),
                                    voter("c", {L::Agree, L::SomewhatDisagree, L::Agree}),
                                    voter("d", {L::Agree, L::Disagree, L::Agree})};
  const auto profile = vote_circumstance(ps, 3);
  // 2 of 4 is not a strict majority.
  EXPECT_EQ(profile.irrelevant_flags, (std::vector<bool>{false, false, false}));
  const std::vector<Participant> three(ps.begin(), ps.begin() + 3);
  EXPECT_EQ(vote_circumstance(three, 3).irrelevant_flags, (std::vector<bool>{true, false, false}));
}

TEST(Vote, MissingAnswerNamesParticipant) {
  const std::vector<Participant> ps{voter("a", {LikertLevel::Agree}), voter("lazy", {})};
  try {
    vote_circumstance(ps, 1);
    FAIL();
  } catch (const IncompleteDataError& e) {
    EXPECT_NE(std::string(e.what()).find("lazy"), std::string::npos);
  }
  EXPECT_THROW(vote_circumstance({}, 1), InsufficientDataError);
}

TEST(Average, CoefficientwiseMean) {
  const std::map<std::string, WeightVector> ws{{"a", WeightVector({1.0, 0.0}, Part::Desert)},
                                               {"b", WeightVector({0.0, -1.0}, Part::Desert)}};
  const auto r = aggregate_average(ws);
  EXPECT_EQ(r.society_weights.coefficients(), (Vector{0.5, -0.5}));
  EXPECT_EQ(r.per_participant.size(), 2u);
  const std::vector<WeightVector> mixed{WeightVector({1.0}, Part::Desert), WeightVector({1.0}, Part::Utility)};
  EXPECT_THROW(aggregate_average(mixed), ValidationError);
  EXPECT_THROW(aggregate_average(std::vector<WeightVector>{}), InsufficientDataError);
}

TEST(TwoBalls, MatchesBruteForceIn2D) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int t = 0; t < 40; ++t) {
    const Vector c = testsupport::random_unit(2, rng, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    const double radius = std::uniform_real_distribution<double>(0.05, 1.5)(rng);
    const Vector x{u(rng), u(rng)};
    const Vector y = project_two_balls(x, c, radius);
    EXPECT_LE(norm2(y), 1.0 + 1e-12);
    EXPECT_LE(distance(y, c), radius + 1e-12);
    double best = INFINITY;
    const int res = 1500;
    for (int i = 0; i <= res; ++i) {
      for (int j = 0; j <= res; ++j) {
        const Vector p{-1.0 + 2.0 * i / res, -1.0 + 2.0 * j / res};
        if (norm2(p) <= 1.0 && distance(p, c) <= radius) best = std::min(best, distance(p, x));
      }
    }
    EXPECT_LE(distance(y, x), best + 1e-9) << "case " << t;
    EXPECT_GE(distance(y, x), best - 2.0 * 2.0 / res) << "case " << t;
  }
}

TEST(Hierarchical, LambdaZeroIsPooledFit) {
  const auto sets = instance(7, 4, 3, 15);
  HierarchicalConfig cfg;
  cfg.lambda = 0.0;
  const auto r = aggregate_hierarchical(sets, cfg);
  std::vector<ComparisonRow> pooled;
  for (const auto& [id, rows] : sets) pooled.insert(pooled.end(), rows.begin(), rows.end());
  const FitResult mle = estimate_weights(pooled, 3);
  EXPECT_GE(cosine_similarity(r.society_weights.coefficients(), mle.weights.coefficients()), 0.999);
  EXPECT_LE(std::abs(*r.total_log_likelihood - mle.log_likelihood), 1e-5);
  for (const auto& [id, w] : r.per_participant) EXPECT_LE(distance(w.coefficients(), r.society_weights.coefficients()), 1e-9);
}

TEST(Hierarchical, LargeLambdaDecouples) {
  const auto sets = instance(8, 4, 3, 15);
  HierarchicalConfig cfg;
  cfg.lambda = 2.0;
  const auto r = aggregate_hierarchical(sets, cfg);
  for (const auto& [id, rows] : sets) {
    const double own = estimate_weights(rows, 3).log_likelihood;
    EXPECT_LE(std::abs(-negative_log_likelihood(r.per_participant.at(id).coefficients(), rows) - own), 1e-5) << id;
  }
}

TEST(Hierarchical, MonotoneAndFeasible) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (double lambda : {0.0, 0.1, 0.5, 1.0}) {
      HierarchicalConfig cfg;
      cfg.lambda = lambda;
      const auto r = aggregate_hierarchical(instance(seed, 5, 4, 12), cfg);
      for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
        EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] + 1e-12);
      }
      for (const auto& [id, w] : r.per_participant) {
        EXPECT_LE(distance(w.coefficients(), r.society_weights.coefficients()), lambda + 1e-7);
      }
    }
  }
}

TEST(Hierarchical, LargerLambdaNeverWorse) {
  const auto sets = instance(9, 4, 3, 15);
  HierarchicalConfig lo, hi;
  lo.lambda = 0.0;
  hi.lambda = 2.0;
  EXPECT_GE(*aggregate_hierarchical(sets, hi).total_log_likelihood,
            *aggregate_hierarchical(sets, lo).total_log_likelihood - 1e-9);
}

TEST(Hierarchical, SingleParticipantMatchesIndividualFit) {
  auto sets = instance(10, 1, 4, 20);
  const auto r = aggregate_hierarchical(sets, {});
  const FitResult own = estimate_weights(sets.begin()->second, 4);
  EXPECT_NEAR(*r.total_log_likelihood, own.log_likelihood, 1e-5);
}

TEST(Hierarchical, RejectsBadInput) {
  EXPECT_THROW(aggregate_hierarchical({}, {}), InsufficientDataError);
  HierarchicalConfig cfg;
  cfg.lambda = -1.0;
  EXPECT_THROW(aggregate_hierarchical(instance(1, 2, 2, 3), cfg), ValidationError);
}

TEST(Demographics, GroupsAndSkips) {
  std::vector<Participant> ps(4);
  ps[0].participant_id = "a";
  ps[0].demographics = std::map<std::string, std::string>{{"age_bracket", "25-40"}, {"gender", "female"}};
  ps[1].participant_id = "b";
  ps[1].demographics = std::map<std::string, std::string>{{"age_bracket", "41-60"}, {"gender", "male"}};
  ps[2].participant_id = "c";
  ps[2].demographics = std::map<std::string, std::string>{{"age_bracket", "18-24"}};
  ps[3].participant_id = "d";
  const std::map<std::string, WeightVector> fits{{"a", WeightVector({1.0, 0.0}, Part::Desert)},
                                                 {"b", WeightVector({0.0, 1.0}, Part::Desert)},
                                                 {"c", WeightVector({0.0, 0.0}, Part::Desert)},
                                                 {"d", WeightVector({0.5, 0.5}, Part::Desert)}};
  const auto age = group_by_demographic(ps, fits, "age_bracket", default_bucketing("age_bracket"));
  EXPECT_EQ(age.counts.at("young"), 2u);
  EXPECT_EQ(age.counts.at("old"), 1u);
  EXPECT_EQ(age.means.at("young").coefficients(), (Vector{0.5, 0.0}));
  EXPECT_EQ(age.skipped, 1u);

  const auto gender = group_by_demographic(ps, fits, "gender", default_bucketing("gender"));
  EXPECT_EQ(gender.means.size(), 2u);
  EXPECT_EQ(gender.skipped, 2u);
  EXPECT_THROW(group_by_demographic(ps, fits, "shoe_size", identity_bucketing()), ValidationError);
}
