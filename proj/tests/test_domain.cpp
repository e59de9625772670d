#include <gtest/gtest.h>

#include <sstream>

#include "eopfair/domain.hpp"
#include "eopfair/json_io.hpp"
#include "support.hpp"

using namespace eopfair;

TEST(LoadDataset, EncodesRecidivismColumns) {
  std::istringstream in(testsupport::kCompasCsv);
  const auto subjects = load_dataset(in, compas_schema());
  ASSERT_EQ(subjects.size(), 4u);

  EXPECT_EQ(subjects[0].id, "a1");
  EXPECT_EQ(subjects[0].x, (Vector{1, 1, 1, 1, 0.0}));
  EXPECT_EQ(subjects[0].y, 1);
  EXPECT_EQ(subjects[0].y_hat, 1);

  // age 25 is not "< 25"; Caucasian maps to 0
  EXPECT_EQ(subjects[1].x, (Vector{0, 0, 0, 0, 0.3}));
  EXPECT_EQ(subjects[1].y_hat, 0);

  // counts are capped at 10 then scaled
  EXPECT_DOUBLE_EQ(subjects[2].x[4], 1.0);
  EXPECT_EQ(subjects[2].y_hat, 1);

  // case-insensitive categorical matching
  EXPECT_EQ(subjects[3].x, (Vector{1, 1, 0, 0, 1.0}));
}

TEST(LoadDataset, RawCounts) {
  std::istringstream in(testsupport::kCompasCsv);
  LoadOptions opt;
  opt.raw_counts = true;
  const auto subjects = load_dataset(in, compas_schema(), opt);
  EXPECT_DOUBLE_EQ(subjects[2].x[4], 12.0);
  EXPECT_DOUBLE_EQ(count_feature_max(opt), 10.0);
}

TEST(LoadDataset, IsDeterministic) {
  std::istringstream a(testsupport::kCompasCsv), b(testsupport::kCompasCsv);
  EXPECT_EQ(load_dataset(a, compas_schema()), load_dataset(b, compas_schema()));
}

TEST(LoadDataset, MissingColumnNamesIt) {
  std::istringstream in("id,sex,age,race,priors_count,two_year_recid,decile_score\n");
  try {
    load_dataset(in, compas_schema());
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_STREQ(e.what(), "missing column: c_charge_degree");
  }
}

TEST(LoadDataset, BadRecordCarriesRowNumber) {
  std::istringstream in(
      "sex,age,race,c_charge_degree,priors_count,two_year_recid,decile_score\n"
      "Male,30,Caucasian,F,1,0,3\n"
      "Male,30,Caucasian,F,-2,0,3\n");
  try {
    load_dataset(in, compas_schema());
    FAIL() << "expected RecordError";
  } catch (const RecordError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(LoadDataset, NonBinaryLabelRejected) {
  std::istringstream in(
      "sex,age,race,c_charge_degree,priors_count,two_year_recid,decile_score\n"
      "Male,30,Caucasian,F,1,2,3\n");
  EXPECT_THROW(load_dataset(in, compas_schema()), RecordError);
}

TEST(LoadDataset, QuotedCellsAndOtherDelimiters) {
  std::istringstream in(
      "sex;age;race;c_charge_degree;priors_count;two_year_recid;decile_score\n"
      "\"Male\";30;\"Native; American\";F;1;0;3\n");
  LoadOptions opt;
  opt.delimiter = ';';
  const auto s = load_dataset(in, compas_schema(), opt);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].id, "1");
  EXPECT_EQ(s[0].x[2], 1.0);
}

TEST(LoadDataset, WithoutPredictions) {
  std::istringstream in("sex,age,race,c_charge_degree,priors_count,two_year_recid\nMale,30,Caucasian,F,1,0\n");
  LoadOptions opt;
  opt.with_predictions = false;
  const auto s = load_dataset(in, compas_schema(), opt);
  EXPECT_FALSE(s[0].y_hat.has_value());
}

TEST(Schema, RejectsDuplicates) {
  FeatureSchema s = compas_schema();
  s.features.push_back(s.features.front());
  EXPECT_THROW(s.validate(), SchemaError);
}

TEST(VectorMath, CosineSimilarity) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 0}, Vector{0, 2}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 1}, Vector{2, 2}), 1.0);
  EXPECT_THROW(cosine_similarity(Vector{0, 0}, Vector{1, 0}), DomainError);
  EXPECT_THROW(dot(Vector{1}, Vector{1, 2}), ShapeError);
}

TEST(AnswerType, Encoding) {
  EXPECT_EQ(Answer::choice(2).chosen_subject(), 1);
  EXPECT_EQ(Answer::choice(-1).chosen_subject(), 2);
  EXPECT_EQ(Answer::choice(-2).confidence(), 2);
  EXPECT_TRUE(Answer::no_preference().is_no_preference());
  EXPECT_THROW(Answer::choice(0), ValidationError);
  EXPECT_THROW(Answer::choice(3), ValidationError);
}

TEST(WeightVectorType, EnforcesUnitBall) {
  EXPECT_NO_THROW(WeightVector({0.6, 0.8}, Part::Desert));
  EXPECT_NO_THROW(WeightVector({0.6, 0.8 + 1e-12}, Part::Desert));
  EXPECT_THROW(WeightVector({0.6, 0.81}, Part::Desert), DomainError);
  EXPECT_THROW(WeightVector({NAN}, Part::Desert), DomainError);
}

TEST(Subjects, AugmentedFeaturesAndDifference) {
  Subject a{"a", {1, 0, 1}, 1, 0};
  Subject b{"b", {1, 1, 1}, 0, 1};
  EXPECT_EQ(augmented_features(a, Part::Desert), (Vector{1, 0, 1, 1}));
  EXPECT_EQ(augmented_features(a, Part::Utility), (Vector{1, 0, 1, 1, 0}));
  EXPECT_EQ(attribute_difference(a, b, false), 2);
  EXPECT_EQ(attribute_difference(a, b, true), 3);
  Subject c{"c", {1, 0, 1}, 1, std::nullopt};
  EXPECT_THROW(augmented_features(c, Part::Utility), ShapeError);
}

TEST(Json, ParticipantRoundTrip) {
  Participant p;
  p.participant_id = "p1";
  p.likert = {{0, LikertLevel::SomewhatDisagree, std::string("because")}, {1, LikertLevel::Agree, std::nullopt}};
  p.desert_responses = {{"d-1", Answer::choice(-2), std::nullopt, 17}};
  p.utility_responses = {{"u-1", Answer::no_preference(), std::string("unsure"), 18}};
  p.demographics = std::map<std::string, std::string>{{"gender", "female"}};
  const json j = p;
  EXPECT_EQ(j["desert_responses"][0]["answer"], -2);
  EXPECT_EQ(j["utility_responses"][0]["answer"], "no_preference");
  EXPECT_EQ(j["likert"][0]["level"], "somewhat_disagree");
  EXPECT_EQ(j.get<Participant>(), p);
}

TEST(Json, RejectsMalformedAnswers) {
  EXPECT_THROW(json(0).get<Answer>(), ValidationError);
  EXPECT_THROW(json("yes").get<Answer>(), ValidationError);
  EXPECT_THROW(json(1.5).get<Answer>(), ValidationError);
}
