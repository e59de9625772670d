#pragma once

// Questionnaire assembly: Likert items for every feature, then two pairwise
// parts (desert, utility) in random order. Pairs differ in at least one and at
// most `max_attribute_diff` displayed attributes.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eopfair/domain.hpp"
#include "eopfair/errors.hpp"

namespace eopfair {

using Rng = std::mt19937_64;

struct QuestionnaireConfig {
  int n_desert = 25;
  int n_utility = 25;
  int max_attribute_diff = 2;
  bool show_prediction_in_desert = false;
  bool allow_neutral = false;
  int attention_checks_per_part = 1;
  std::uint64_t seed = 0;
  /// Model value of the count feature at the top of its range.
  double count_feature_max = 1.0;

  void validate() const {
    if (n_desert < 0 || n_utility < 0) throw ValidationError("question counts must be nonnegative");
    if (max_attribute_diff <= 0) throw ValidationError("max_attribute_diff must be positive");
    if (attention_checks_per_part < 0) throw ValidationError("attention_checks_per_part must be nonnegative");
  }
};

struct Questionnaire {
  std::vector<std::size_t> likert_features;
  std::vector<PairwiseQuestion> desert_questions;
  std::vector<PairwiseQuestion> utility_questions;
  std::vector<Part> part_order;
  bool show_prediction_in_desert = false;
  bool allow_neutral = false;

  bool operator==(const Questionnaire&) const = default;

  const std::vector<PairwiseQuestion>& questions(Part p) const {
    return p == Part::Desert ? desert_questions : utility_questions;
  }
  std::size_t total_questions() const {
    return likert_features.size() + desert_questions.size() + utility_questions.size();
  }
};

/// Whether y_hat counts as a displayed attribute for a part.
inline bool prediction_shown(Part part, bool show_prediction_in_desert) {
  return part == Part::Utility || show_prediction_in_desert;
}

/// Indexes a dataset by attribute signature so that eligible partners can be
/// drawn without scanning every subject.
class PairSampler {
 public:
  PairSampler(std::span<const Subject> dataset, Part part, int max_attribute_diff, bool show_prediction_in_desert)
      : dataset_(dataset.begin(), dataset.end()),
        part_(part),
        max_diff_(max_attribute_diff),
        with_prediction_(prediction_shown(part, show_prediction_in_desert)) {
    if (dataset_.empty()) throw InsufficientDataError("cannot sample pairs from an empty dataset");
    if (part == Part::Utility) {
      for (const auto& s : dataset_) {
        if (!s.y_hat) throw ValidationError("utility questions require predictions; subject " + s.id + " has none");
      }
    }
    std::map<Signature, std::size_t> index;
    for (std::size_t i = 0; i < dataset_.size(); ++i) {
      Signature sig = signature(dataset_[i]);
      auto [it, inserted] = index.emplace(sig, groups_.size());
      if (inserted) groups_.push_back({std::move(sig), {}});
      groups_[it->second].members.push_back(i);
      group_of_.push_back(it->second);
    }
    neighbours_.resize(groups_.size());
    cumulative_.resize(groups_.size());
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      std::size_t running = 0;
      for (std::size_t h = 0; h < groups_.size(); ++h) {
        const int d = difference(groups_[g].sig, groups_[h].sig);
        if (d < 1 || d > max_diff_) continue;
        neighbours_[g].push_back(h);
        running += groups_[h].members.size();
        cumulative_[g].push_back(running);
      }
    }
  }

  /// subject_1 uniform over the dataset; subject_2 uniform over all other
  /// subjects within the difference bound that differ in at least one attribute.
  PairwiseQuestion sample(Rng& rng, std::string question_id) const {
    constexpr int kMaxResamples = 1000;
    std::uniform_int_distribution<std::size_t> pick_first(0, dataset_.size() - 1);
    for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
      const std::size_t i = pick_first(rng);
      const std::size_t g = group_of_[i];
      if (cumulative_[g].empty()) continue;
      std::uniform_int_distribution<std::size_t> pick_second(0, cumulative_[g].back() - 1);
      // Rejection keeps the draw uniform over partners whose id differs from subject_1.
      for (int retry = 0; retry < kMaxResamples; ++retry) {
        const std::size_t r = pick_second(rng);
        const auto pos = std::upper_bound(cumulative_[g].begin(), cumulative_[g].end(), r) - cumulative_[g].begin();
        const std::size_t h = neighbours_[g][static_cast<std::size_t>(pos)];
        const std::size_t offset = r - (pos == 0 ? 0 : cumulative_[g][static_cast<std::size_t>(pos) - 1]);
        const std::size_t j = groups_[h].members[offset];
        if (dataset_[j].id == dataset_[i].id) continue;
        PairwiseQuestion q;
        q.question_id = std::move(question_id);
        q.part = part_;
        q.subject_1 = dataset_[i];
        q.subject_2 = dataset_[j];
        return q;
      }
    }
    throw SamplingExhaustedError("no subject pair within " + std::to_string(max_diff_) +
                                 " differing attributes after " + std::to_string(kMaxResamples) + " draws");
  }

  Part part() const noexcept { return part_; }

 private:
  using Signature = std::vector<double>;
  struct Group {
    Signature sig;
    std::vector<std::size_t> members;
  };

  Signature signature(const Subject& s) const {
    Signature sig = s.x;
    sig.push_back(s.y);
    if (with_prediction_) sig.push_back(s.y_hat.value_or(0));
    return sig;
  }
  static int difference(const Signature& a, const Signature& b) {
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]);
    return d;
  }

  std::vector<Subject> dataset_;
  Part part_;
  int max_diff_;
  bool with_prediction_;
  std::vector<Group> groups_;
  std::vector<std::size_t> group_of_;
  std::vector<std::vector<std::size_t>> neighbours_;
  std::vector<std::vector<std::size_t>> cumulative_;
};

inline PairwiseQuestion sample_pair(std::span<const Subject> dataset, Part part, Rng& rng,
                                    int max_attribute_diff = 2, bool show_prediction_in_desert = false,
                                    std::string question_id = "q") {
  return PairSampler(dataset, part, max_attribute_diff, show_prediction_in_desert).sample(rng, std::move(question_id));
}

/// Dominance pair: the two subjects agree on every binary feature (drawn at
/// random); the dominant one has no prior offenses, the other the maximum.
/// Desert checks additionally give the dominant subject y = 0 against y = 1;
/// utility checks give it a low-risk prediction (y_hat = 0) against high risk.
/// The dominant subject is placed first or second at random and recorded in
/// `expected_choice`.
inline PairwiseQuestion make_attention_check(Part part, const FeatureSchema& schema, Rng& rng,
                                             double count_max = 1.0, std::string question_id = "check") {
  std::bernoulli_distribution coin(0.5);
  Subject good;
  good.x.resize(schema.k());
  for (std::size_t j = 0; j < schema.k(); ++j) {
    good.x[j] = schema.features[j].kind == FeatureKind::Binary ? (coin(rng) ? 1.0 : 0.0) : 0.0;
  }
  Subject bad = good;
  if (const auto c = schema.count_index()) bad.x[*c] = count_max;
  if (part == Part::Desert) {
    const int y_hat = coin(rng) ? 1 : 0;
    good.y = 0;
    bad.y = 1;
    good.y_hat = bad.y_hat = y_hat;
  } else {
    good.y = bad.y = coin(rng) ? 1 : 0;
    good.y_hat = 0;
    bad.y_hat = 1;
  }
  good.id = question_id + "-a";
  bad.id = question_id + "-b";

  PairwiseQuestion q;
  q.question_id = std::move(question_id);
  q.part = part;
  q.is_attention_check = true;
  if (coin(rng)) {
    q.subject_1 = std::move(good);
    q.subject_2 = std::move(bad);
    q.expected_choice = 1;
  } else {
    q.subject_1 = std::move(bad);
    q.subject_2 = std::move(good);
    q.expected_choice = 2;
  }
  return q;
}

namespace detail {

inline std::vector<PairwiseQuestion> build_part(std::span<const Subject> dataset, const FeatureSchema& schema,
                                                const QuestionnaireConfig& cfg, Part part, int count, Rng& rng) {
  std::vector<PairwiseQuestion> qs;
  const std::string prefix = part == Part::Desert ? "d" : "u";
  if (count > 0) {
    const PairSampler sampler(dataset, part, cfg.max_attribute_diff, cfg.show_prediction_in_desert);
    for (int i = 0; i < count; ++i) qs.push_back(sampler.sample(rng, prefix + "-" + std::to_string(i + 1)));
  }
  for (int c = 0; c < cfg.attention_checks_per_part; ++c) {
    auto check = make_attention_check(part, schema, rng, cfg.count_feature_max,
                                      prefix + "-check-" + std::to_string(c + 1));
    std::uniform_int_distribution<std::size_t> pos(0, qs.size());
    qs.insert(qs.begin() + static_cast<std::ptrdiff_t>(pos(rng)), std::move(check));
  }
  // Checks are numbered like every other question so ids reveal nothing.
  for (std::size_t i = 0; i < qs.size(); ++i) qs[i].question_id = prefix + "-" + std::to_string(i + 1);
  return qs;
}

}  // namespace detail

inline Questionnaire build_questionnaire(std::span<const Subject> dataset, const FeatureSchema& schema,
                                         const QuestionnaireConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw InsufficientDataError("build_questionnaire: empty dataset");
  for (const auto& s : dataset) {
    if (s.x.size() != schema.k()) throw ShapeError("subject " + s.id + " does not match the schema");
  }
  Rng rng(cfg.seed);
  Questionnaire q;
  for (std::size_t j = 0; j < schema.k(); ++j) q.likert_features.push_back(j);
  q.show_prediction_in_desert = cfg.show_prediction_in_desert;
  q.allow_neutral = cfg.allow_neutral;
  q.part_order = std::bernoulli_distribution(0.5)(rng) ? std::vector{Part::Desert, Part::Utility}
                                                       : std::vector{Part::Utility, Part::Desert};
  q.desert_questions = detail::build_part(dataset, schema, cfg, Part::Desert, cfg.n_desert, rng);
  q.utility_questions = detail::build_part(dataset, schema, cfg, Part::Utility, cfg.n_utility, rng);
  return q;
}

}  // namespace eopfair
