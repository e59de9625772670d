#pragma once

// Canonical JSON encodings (nlohmann::json ADL hooks). Field names follow the
// domain types in lower_snake_case.

#include <json.hpp>

#include "eopfair/aggregator.hpp"
#include "eopfair/domain.hpp"
#include "eopfair/eop_audit.hpp"
#include "eopfair/estimator.hpp"
#include "eopfair/questiongen.hpp"
#include "eopfair/simulator.hpp"

namespace eopfair {

using json = nlohmann::json;

namespace detail {

template <class T>
std::optional<T> get_optional(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <class T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

}  // namespace detail

inline void to_json(json& j, Part p) { j = std::string(to_string(p)); }
inline void from_json(const json& j, Part& p) { p = parse_part(j.get<std::string>()); }

inline void to_json(json& j, LikertLevel l) { j = std::string(to_string(l)); }
inline void from_json(const json& j, LikertLevel& l) { l = parse_likert_level(j.get<std::string>()); }

/// NoPreference is encoded as the string "no_preference".
inline void to_json(json& j, const Answer& a) {
  if (a.is_no_preference()) {
    j = "no_preference";
  } else {
    j = a.value();
  }
}
inline void from_json(const json& j, Answer& a) {
  if (j.is_string() && j.get<std::string>() == "no_preference") {
    a = Answer::no_preference();
  } else if (j.is_number_integer()) {
    a = Answer::choice(j.get<int>());
  } else {
    throw ValidationError("answer must be an integer in {-2,-1,1,2} or \"no_preference\"");
  }
}

/// The kind follows from the encoding: "count" is the bounded count kind.
inline void to_json(json& j, const Feature& f) {
  j = json{{"name", f.name}, {"encoding", f.encoding}, {"display", f.display}};
}
inline void from_json(const json& j, Feature& f) {
  f.name = j.at("name").get<std::string>();
  f.encoding = j.value("encoding", std::string("binary"));
  f.kind = f.encoding == "count" ? FeatureKind::BoundedCount : FeatureKind::Binary;
  f.display = j.value("display", std::string());
}

inline void to_json(json& j, const Subject& s) {
  j = json{{"id", s.id}, {"x", s.x}, {"y", s.y}};
  detail::put_optional(j, "y_hat", s.y_hat);
}
inline void from_json(const json& j, Subject& s) {
  s.id = j.at("id").get<std::string>();
  s.x = j.at("x").get<Vector>();
  s.y = j.at("y").get<int>();
  s.y_hat = detail::get_optional<int>(j, "y_hat");
}

inline void to_json(json& j, const PairwiseQuestion& q) {
  j = json{{"question_id", q.question_id},
           {"part", q.part},
           {"subject_1", q.subject_1},
           {"subject_2", q.subject_2},
           {"is_attention_check", q.is_attention_check}};
  detail::put_optional(j, "expected_choice", q.expected_choice);
}
inline void from_json(const json& j, PairwiseQuestion& q) {
  q.question_id = j.at("question_id").get<std::string>();
  q.part = j.at("part").get<Part>();
  q.subject_1 = j.at("subject_1").get<Subject>();
  q.subject_2 = j.at("subject_2").get<Subject>();
  q.is_attention_check = j.value("is_attention_check", false);
  q.expected_choice = detail::get_optional<int>(j, "expected_choice");
}

inline void to_json(json& j, const Response& r) {
  j = json{{"question_id", r.question_id}, {"answer", r.answer}, {"answered_at", r.answered_at}};
  detail::put_optional(j, "justification", r.justification);
}
inline void from_json(const json& j, Response& r) {
  r.question_id = j.at("question_id").get<std::string>();
  r.answer = j.at("answer").get<Answer>();
  r.justification = detail::get_optional<std::string>(j, "justification");
  r.answered_at = j.value("answered_at", std::int64_t{0});
}

inline void to_json(json& j, const LikertResponse& l) {
  j = json{{"feature_index", l.feature_index}, {"level", l.level}};
  detail::put_optional(j, "justification", l.justification);
}
inline void from_json(const json& j, LikertResponse& l) {
  l.feature_index = j.at("feature_index").get<std::size_t>();
  l.level = j.at("level").get<LikertLevel>();
  l.justification = detail::get_optional<std::string>(j, "justification");
}

inline void to_json(json& j, const WeightVector& w) { j = json{{"coefficients", w.coefficients()}, {"kind", w.kind()}}; }
inline void from_json(const json& j, WeightVector& w) {
  w = WeightVector(j.at("coefficients").get<Vector>(), j.at("kind").get<Part>());
}

inline void to_json(json& j, const CircumstanceProfile& c) { j = json{{"irrelevant_flags", c.irrelevant_flags}}; }
inline void from_json(const json& j, CircumstanceProfile& c) {
  c.irrelevant_flags = j.at("irrelevant_flags").get<std::vector<bool>>();
}

inline void to_json(json& j, const Participant& p) {
  j = json{{"participant_id", p.participant_id},
           {"likert", p.likert},
           {"desert_responses", p.desert_responses},
           {"utility_responses", p.utility_responses}};
  detail::put_optional(j, "demographics", p.demographics);
}
inline void from_json(const json& j, Participant& p) {
  p.participant_id = j.at("participant_id").get<std::string>();
  p.likert = j.value("likert", std::vector<LikertResponse>{});
  p.desert_responses = j.value("desert_responses", std::vector<Response>{});
  p.utility_responses = j.value("utility_responses", std::vector<Response>{});
  p.demographics = detail::get_optional<std::map<std::string, std::string>>(j, "demographics");
}

inline void to_json(json& j, const FitResult& f) {
  j = json{{"weights", f.weights},
           {"log_likelihood", f.log_likelihood},
           {"iterations", f.iterations},
           {"converged", f.converged}};
}
inline void from_json(const json& j, FitResult& f) {
  f.weights = j.at("weights").get<WeightVector>();
  f.log_likelihood = j.at("log_likelihood").get<double>();
  f.iterations = j.value("iterations", 0);
  f.converged = j.value("converged", false);
}

inline void to_json(json& j, const SolverConfig& c) {
  j = json{{"max_iterations", c.max_iterations},
           {"gradient_tolerance", c.gradient_tolerance},
           {"initial_step", c.initial_step},
           {"backtracking_factor", c.backtracking_factor}};
  detail::put_optional(j, "seed", c.seed);
}
inline void from_json(const json& j, SolverConfig& c) {
  const SolverConfig d;
  c.max_iterations = j.value("max_iterations", d.max_iterations);
  c.gradient_tolerance = j.value("gradient_tolerance", d.gradient_tolerance);
  c.initial_step = j.value("initial_step", d.initial_step);
  c.backtracking_factor = j.value("backtracking_factor", d.backtracking_factor);
  c.seed = detail::get_optional<std::uint64_t>(j, "seed");
  c.validate();
}

inline void to_json(json& j, const HierarchicalConfig& c) {
  j = json{{"lambda", c.lambda}, {"outer_iterations", c.outer_iterations}, {"inner", c.inner},
           {"joint_iterations", c.joint_iterations}, {"tolerance", c.tolerance}};
}
inline void from_json(const json& j, HierarchicalConfig& c) {
  const HierarchicalConfig d;
  c.lambda = j.value("lambda", d.lambda);
  c.outer_iterations = j.value("outer_iterations", d.outer_iterations);
  c.joint_iterations = j.value("joint_iterations", d.joint_iterations);
  c.inner = j.contains("inner") ? j.at("inner").get<SolverConfig>() : d.inner;
  c.tolerance = j.value("tolerance", d.tolerance);
  c.validate();
}

inline void to_json(json& j, const QuestionnaireConfig& c) {
  j = json{{"n_desert", c.n_desert},
           {"n_utility", c.n_utility},
           {"max_attribute_diff", c.max_attribute_diff},
           {"show_prediction_in_desert", c.show_prediction_in_desert},
           {"allow_neutral", c.allow_neutral},
           {"attention_checks_per_part", c.attention_checks_per_part},
           {"seed", c.seed},
           {"count_feature_max", c.count_feature_max}};
}
inline void from_json(const json& j, QuestionnaireConfig& c) {
  const QuestionnaireConfig d;
  c.n_desert = j.value("n_desert", d.n_desert);
  c.n_utility = j.value("n_utility", d.n_utility);
  c.max_attribute_diff = j.value("max_attribute_diff", d.max_attribute_diff);
  c.show_prediction_in_desert = j.value("show_prediction_in_desert", d.show_prediction_in_desert);
  c.allow_neutral = j.value("allow_neutral", d.allow_neutral);
  c.attention_checks_per_part = j.value("attention_checks_per_part", d.attention_checks_per_part);
  c.seed = j.value("seed", d.seed);
  c.count_feature_max = j.value("count_feature_max", d.count_feature_max);
  c.validate();
}

inline void to_json(json& j, const Questionnaire& q) {
  j = json{{"likert_features", q.likert_features},
           {"desert_questions", q.desert_questions},
           {"utility_questions", q.utility_questions},
           {"part_order", q.part_order},
           {"show_prediction_in_desert", q.show_prediction_in_desert},
           {"allow_neutral", q.allow_neutral}};
}
inline void from_json(const json& j, Questionnaire& q) {
  q.likert_features = j.at("likert_features").get<std::vector<std::size_t>>();
  q.desert_questions = j.at("desert_questions").get<std::vector<PairwiseQuestion>>();
  q.utility_questions = j.at("utility_questions").get<std::vector<PairwiseQuestion>>();
  q.part_order = j.at("part_order").get<std::vector<Part>>();
  q.show_prediction_in_desert = j.value("show_prediction_in_desert", false);
  q.allow_neutral = j.value("allow_neutral", false);
}

inline void to_json(json& j, const RecoveryPoint& p) {
  j = json{{"n_questions", p.n_questions}, {"mean_cosine", p.mean_cosine}, {"std_cosine", p.std_cosine}};
}
inline void to_json(json& j, const RecoveryCurve& c) { j = json{{"points", c.points}}; }

inline void to_json(json& j, const AggregateResult& r) {
  j = json{{"society_weights", r.society_weights},
           {"per_participant", r.per_participant},
           {"method", std::string(to_string(r.method))}};
  detail::put_optional(j, "total_log_likelihood", r.total_log_likelihood);
  if (r.method == AggregationMethod::Hierarchical) {
    j["objective_trace"] = r.objective_trace;
    j["outer_iterations"] = r.outer_iterations;
  }
}

inline void to_json(json& j, const EopReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins) {
    json sizes = json::array();
    for (const auto& g : b.group_sizes) sizes.push_back({{"circumstance", g.key}, {"size", g.size}});
    bins.push_back({{"bin_range", {b.lower, b.upper}},
                    {"circumstance_group_sizes", sizes},
                    {"max_pairwise_divergence", b.max_pairwise_divergence},
                    {"evaluated_pairs", b.evaluated_pairs}});
  }
  json skipped = json::array();
  for (const auto& s : r.skipped_cells) skipped.push_back({{"bin", s.bin}, {"circumstance", s.key}, {"size", s.size}});
  j = json{{"bins", bins},
           {"overall_violation", r.overall_violation},
           {"passes", r.passes},
           {"trivial", r.trivial},
           {"skipped_cells", skipped}};
}

}  // namespace eopfair
