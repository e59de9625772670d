#pragma once

// Synthetic participants: answers drawn from the probit model with a known
// weight vector, and the recovery curve (cosine similarity between truth and
// estimate as a function of the number of questions).

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eopfair/domain.hpp"
#include "eopfair/errors.hpp"
#include "eopfair/estimator.hpp"
#include "eopfair/probit.hpp"
#include "eopfair/questiongen.hpp"

namespace eopfair {

struct SimConfig {
  std::size_t dim = 6;
  int n_trials = 100;
  std::vector<int> question_counts = {5, 10, 15, 20, 25, 30, 40};
  /// |truth . delta| above this is answered "Clearly"; 0.6745 is where Phi = 0.75.
  double confidence_threshold = 0.6745;
  std::uint64_t seed = 0;
  int max_attribute_diff = 2;
  SolverConfig solver;

  void validate() const {
    if (dim == 0) throw ValidationError("dim must be positive");
    if (n_trials <= 0) throw ValidationError("n_trials must be positive");
    if (question_counts.empty()) throw ValidationError("question_counts must be nonempty");
    for (int n : question_counts) {
      if (n <= 0) throw ValidationError("question counts must be positive");
    }
    if (!(confidence_threshold > 0)) throw ValidationError("confidence_threshold must be positive");
  }
};

struct RecoveryPoint {
  int n_questions = 0;
  double mean_cosine = 0.0;
  double std_cosine = 0.0;
};

struct RecoveryCurve {
  std::vector<RecoveryPoint> points;
};

/// Uniform draw from the unit sphere in `dim` dimensions.
inline WeightVector sample_truth(std::size_t dim, Rng& rng, Part kind = Part::Desert) {
  if (dim == 0) throw ValidationError("sample_truth: dim must be at least 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  double n = 0.0;
  while (n < 1e-12) {
    for (double& c : v) c = normal(rng);
    n = norm2(v);
  }
  for (double& c : v) c /= n;
  // Guard against the last-ulp overshoot of the norm.
  if (norm2(v) > 1.0) {
    const double m = norm2(v);
    for (double& c : v) c /= m;
  }
  return WeightVector(std::move(v), kind);
}

/// Probit response: subject 1 with probability Phi(truth . delta); "Clearly"
/// (magnitude 2) iff |truth . delta| > threshold.
inline Response simulate_response(const WeightVector& truth, const PairwiseQuestion& q, Rng& rng,
                                  double confidence_threshold = 0.6745) {
  const Vector a = augmented_features(q.subject_1, q.part);
  const Vector b = augmented_features(q.subject_2, q.part);
  if (a.size() != truth.size()) {
    throw ShapeError("truth has dimension " + std::to_string(truth.size()) + ", question has " +
                     std::to_string(a.size()));
  }
  double score = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) score += truth[i] * (a[i] - b[i]);
  const bool first = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < probit::std_normal_cdf(score);
  const int magnitude = std::abs(score) > confidence_threshold ? 2 : 1;
  Response r;
  r.question_id = q.question_id;
  r.answer = Answer::choice(first ? magnitude : -magnitude);
  return r;
}

/// Independent stream for (seed, stream index).
inline Rng derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return Rng(seq);
}

/// Cosine similarity of one simulated trial, failing with the trial index on error.
inline double recovery_trial(const PairSampler& sampler, std::size_t dim, int n_questions, const SimConfig& cfg,
                             Rng& rng, int trial) {
  try {
    const WeightVector truth = sample_truth(dim, rng, sampler.part());
    std::vector<ComparisonRow> rows;
    rows.reserve(static_cast<std::size_t>(n_questions));
    for (int i = 0; i < n_questions; ++i) {
      const PairwiseQuestion q = sampler.sample(rng, "sim-" + std::to_string(i));
      const Response r = simulate_response(truth, q, rng, cfg.confidence_threshold);
      rows.push_back(make_row(q, r.answer, sampler.part()));
    }
    const FitResult fit = estimate_weights(rows, dim, cfg.solver, sampler.part());
    if (norm2(fit.weights.coefficients()) == 0.0) return 0.0;
    return cosine_similarity(fit.weights.coefficients(), truth.coefficients());
  } catch (const Error& e) {
    throw Error("trial " + std::to_string(trial) + " (n=" + std::to_string(n_questions) + "): " + e.what());
  }
}

/// Mean and standard deviation of the truth/estimate cosine similarity for
/// every requested question count. A zero estimate counts as cosine 0.
inline RecoveryCurve recovery_curve(std::span<const Subject> dataset, const FeatureSchema& schema, Part part,
                                    const SimConfig& cfg) {
  cfg.validate();
  const std::size_t dim = part_dimension(part, schema.k());
  if (cfg.dim != dim) {
    throw ShapeError("simulation dim " + std::to_string(cfg.dim) + " does not match the " +
                     std::string(to_string(part)) + " dimension " + std::to_string(dim));
  }
  const PairSampler sampler(dataset, part, cfg.max_attribute_diff, false);
  RecoveryCurve curve;
  for (std::size_t c = 0; c < cfg.question_counts.size(); ++c) {
    const int n = cfg.question_counts[c];
    std::vector<double> cos(static_cast<std::size_t>(cfg.n_trials));
    for (int t = 0; t < cfg.n_trials; ++t) {
      Rng rng = derived_rng(cfg.seed, (static_cast<std::uint64_t>(n) << 32) | static_cast<std::uint64_t>(t));
      cos[static_cast<std::size_t>(t)] = recovery_trial(sampler, dim, n, cfg, rng, t);
    }
    double mean = 0.0;
    for (double v : cos) mean += v;
    mean /= static_cast<double>(cos.size());
    double var = 0.0;
    for (double v : cos) var += (v - mean) * (v - mean);
    var = cos.size() > 1 ? var / static_cast<double>(cos.size() - 1) : 0.0;
    curve.points.push_back({n, mean, std::sqrt(var)});
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Synthetic datasets
// ---------------------------------------------------------------------------

/// COMPAS-shaped synthetic population over `compas_schema()`: binary sex, age,
/// race and charge degree with plausible marginals, a geometric prior count
/// (rescaled with `count_cap` unless `raw_counts`), and labels and risk
/// predictions correlated with the features.
inline std::vector<Subject> synthetic_compas(std::size_t n, std::uint64_t seed, double count_cap = 10.0,
                                             bool raw_counts = false) {
  Rng rng(seed);
  std::bernoulli_distribution male(0.8), young(0.22), nonwhite(0.66), felony(0.64);
  std::geometric_distribution<int> priors(0.25);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Subject> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    s.id = "s" + std::to_string(i + 1);
    const double m = male(rng), a = young(rng), r = nonwhite(rng), f = felony(rng);
    const int count = priors(rng);
    const double c = raw_counts ? static_cast<double>(count) : std::min<double>(count, count_cap) / count_cap;
    s.x = {m, a, r, f, c};
    const double risk = -1.2 + 0.3 * m + 0.5 * a + 0.2 * r + 0.2 * f + 0.12 * std::min(count, 15);
    s.y = unif(rng) < probit::std_normal_cdf(risk) ? 1 : 0;
    s.y_hat = unif(rng) < probit::std_normal_cdf(risk + 0.3 * r) ? 1 : 0;
    out.push_back(std::move(s));
  }
  return out;
}

/// Generic synthetic population of k binary features plus label and prediction.
inline std::vector<Subject> synthetic_binary(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<Subject> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    s.id = "s" + std::to_string(i + 1);
    s.x.resize(k);
    for (double& v : s.x) v = coin(rng) ? 1.0 : 0.0;
    s.y = coin(rng) ? 1 : 0;
    s.y_hat = coin(rng) ? 1 : 0;
    out.push_back(std::move(s));
  }
  return out;
}

inline FeatureSchema binary_schema(std::size_t k) {
  FeatureSchema s;
  for (std::size_t j = 0; j < k; ++j) {
    s.features.push_back({"f" + std::to_string(j + 1), FeatureKind::Binary, "binary", "0 or 1"});
  }
  return s;
}

}  // namespace eopfair
