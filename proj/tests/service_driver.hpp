#pragma once

// Simulated participant that reads question payloads as a client would and
// answers them from hidden truth vectors under the probit model.

#include <random>
#include <string>

#include <json.hpp>

#include "eopfair/domain.hpp"
#include "eopfair/probit.hpp"

namespace testsupport {

using nlohmann::json;

struct SimulatedParticipant {
  eopfair::Vector desert_truth;
  eopfair::Vector utility_truth;
  eopfair::FeatureSchema schema = eopfair::compas_schema();
  double count_cap = 10.0;
  double threshold = 0.6745;
  std::mt19937_64 rng;

  /// Model features of a displayed subject.
  eopfair::Vector features(const json& subject, bool with_prediction) const {
    eopfair::Vector v;
    for (const auto& f : schema.features) {
      const double raw = subject.at("features").at(f.name).get<double>();
      v.push_back(f.kind == eopfair::FeatureKind::BoundedCount ? std::min(raw, count_cap) / count_cap : raw);
    }
    v.push_back(subject.at("true_label").get<double>());
    if (with_prediction) v.push_back(subject.at("prediction").get<double>());
    return v;
  }

  /// Answer body for a question payload from GET /next.
  json answer(const json& q) {
    json body{{"question_id", q.at("question_id")}};
    const std::string section = q.at("section");
    if (section == "likert") {
      // Rate race as irrelevant, everything else as relevant.
      body["answer"] = q.at("feature").at("name") == "race" ? "disagree" : "somewhat_agree";
      return body;
    }
    const bool utility = section == "utility";
    const auto& truth = utility ? utility_truth : desert_truth;
    const auto a = features(q.at("subject_1"), utility);
    const auto b = features(q.at("subject_2"), utility);
    double score = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) score += truth[i] * (a[i] - b[i]);
    const bool first = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eopfair::probit::std_normal_cdf(score);
    const int magnitude = std::abs(score) > threshold ? 2 : 1;
    body["answer"] = first ? magnitude : -magnitude;
    return body;
  }
};

}  // namespace testsupport
