#pragma once

// Maximum-likelihood estimation of desert / utility weight vectors under the
// probit pairwise-comparison model, constrained to the unit ball:
//
//   minimize  sum_q -log Phi(a_q * w . delta_q)   s.t.  |w|_2 <= 1
//
// where delta_q is the attribute difference between the two subjects of
// question q and a_q in {-2,-1,+1,+2} the signed, confidence-weighted answer.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eopfair/domain.hpp"
#include "eopfair/errors.hpp"
#include "eopfair/probit.hpp"

namespace eopfair {

struct ComparisonRow {
  Vector delta;
  int answer = 1;

  bool operator==(const ComparisonRow&) const = default;
};

struct SolverConfig {
  int max_iterations = 10000;
  double gradient_tolerance = 1e-6;
  double initial_step = 1.0;
  double backtracking_factor = 0.5;
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (max_iterations <= 0) throw ValidationError("max_iterations must be positive");
    if (!(gradient_tolerance > 0)) throw ValidationError("gradient_tolerance must be positive");
    if (!(initial_step > 0)) throw ValidationError("initial_step must be positive");
    if (!(backtracking_factor > 0 && backtracking_factor < 1)) {
      throw ValidationError("backtracking_factor must lie in (0, 1)");
    }
  }
};

struct FitResult {
  WeightVector weights;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

namespace detail {

inline void check_rows(std::span<const double> w, std::span<const ComparisonRow> rows) {
  for (const auto& r : rows) {
    if (r.delta.size() != w.size()) {
      throw ShapeError("row delta has length " + std::to_string(r.delta.size()) + ", weights have " +
                       std::to_string(w.size()));
    }
    if (r.answer != 1 && r.answer != -1 && r.answer != 2 && r.answer != -2) {
      throw ValidationError("row answer must be one of -2, -1, +1, +2; got " + std::to_string(r.answer));
    }
  }
}

}  // namespace detail

inline double negative_log_likelihood(std::span<const double> w, std::span<const ComparisonRow> rows) {
  detail::check_rows(w, rows);
  double total = 0.0;
  for (const auto& r : rows) total -= probit::log_std_normal_cdf(r.answer * dot(w, r.delta));
  return total;
}

inline Vector nll_gradient(std::span<const double> w, std::span<const ComparisonRow> rows) {
  detail::check_rows(w, rows);
  Vector g(w.size(), 0.0);
  for (const auto& r : rows) {
    const double scale = -r.answer * probit::inverse_mills(r.answer * dot(w, r.delta));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * r.delta[i];
  }
  return g;
}

/// Radial projection onto the closed unit ball.
inline Vector project_unit_ball(std::span<const double> w) {
  Vector out(w.begin(), w.end());
  const double n = norm2(w);
  if (n > 1.0) {
    for (double& v : out) v /= n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projected gradient descent
// ---------------------------------------------------------------------------

struct DescentResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Projected gradient descent with a backtracking line search on the
/// sufficient-decrease condition f(x+) <= f(x) + g.(x+ - x) + |x+ - x|^2 / (2t).
/// Convergence is declared when the unit-step gradient mapping
/// |x - P(x - grad f(x))| falls below the tolerance. Iterates never increase f.
template <class Objective, class Gradient, class Projection>
DescentResult projected_gradient_descent(Objective&& f, Gradient&& grad, Projection&& project, Vector x0,
                                         const SolverConfig& cfg) {
  cfg.validate();
  DescentResult res;
  res.x = project(x0);
  res.value = f(res.x);
  double step = cfg.initial_step;
  const std::size_t n = res.x.size();
  Vector trial_point(n);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const Vector g = grad(res.x);
    {
      for (std::size_t i = 0; i < n; ++i) trial_point[i] = res.x[i] - g[i];
      if (distance(res.x, project(trial_point)) <= cfg.gradient_tolerance) {
        res.converged = true;
        res.iterations = it;
        return res;
      }
    }

    bool accepted = false;
    double t = step;
    while (t > 1e-30) {
      for (std::size_t i = 0; i < n; ++i) trial_point[i] = res.x[i] - t * g[i];
      Vector candidate = project(trial_point);
      double gd = 0.0;
      double dd = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = candidate[i] - res.x[i];
        gd += g[i] * d;
        dd += d * d;
      }
      const double fc = f(candidate);
      if (fc <= res.value + gd + dd / (2.0 * t) && fc <= res.value) {
        accepted = dd > 0.0 || fc < res.value;
        res.x = std::move(candidate);
        res.value = fc;
        break;
      }
      t *= cfg.backtracking_factor;
    }
    res.iterations = it + 1;
    if (!accepted) {
      // No representable progress along the projected direction.
      for (std::size_t i = 0; i < n; ++i) trial_point[i] = res.x[i] - g[i];
      res.converged = distance(res.x, project(trial_point)) <= cfg.gradient_tolerance;
      return res;
    }
    step = std::min(t / cfg.backtracking_factor, 1e8);
  }

  const Vector g = grad(res.x);
  for (std::size_t i = 0; i < n; ++i) trial_point[i] = res.x[i] - g[i];
  res.converged = distance(res.x, project(trial_point)) <= cfg.gradient_tolerance;
  return res;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

/// Unit-ball-constrained MLE, started from the zero vector.
inline FitResult estimate_weights(std::span<const ComparisonRow> rows, std::size_t dim, const SolverConfig& cfg = {},
                                  Part kind = Part::Desert) {
  if (rows.empty()) throw InsufficientDataError("estimate_weights: no comparison rows");
  const Vector zero(dim, 0.0);
  detail::check_rows(zero, rows);

  auto res = projected_gradient_descent([&](const Vector& w) { return negative_log_likelihood(w, rows); },
                                        [&](const Vector& w) { return nll_gradient(w, rows); },
                                        [](const Vector& w) { return project_unit_ball(w); }, zero, cfg);
  FitResult out;
  out.weights = WeightVector(std::move(res.x), kind);
  out.log_likelihood = -res.value;
  out.iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

/// Equality-of-odds baseline: the MLE restricted to w = t * e_label, |t| <= 1.
/// `label_index` defaults to the last coordinate (y for desert rows, y_hat for
/// utility rows).
inline FitResult estimate_eoo_baseline(std::span<const ComparisonRow> rows, const SolverConfig& cfg = {},
                                       std::optional<std::size_t> label_index = std::nullopt,
                                       Part kind = Part::Desert) {
  if (rows.empty()) throw InsufficientDataError("estimate_eoo_baseline: no comparison rows");
  const std::size_t dim = rows.front().delta.size();
  const Vector zero(dim, 0.0);
  detail::check_rows(zero, rows);
  const std::size_t idx = label_index.value_or(dim - 1);
  if (idx >= dim) throw ShapeError("label index out of range");

  std::vector<ComparisonRow> reduced;
  reduced.reserve(rows.size());
  for (const auto& r : rows) reduced.push_back({Vector{r.delta[idx]}, r.answer});
  const FitResult one_d = estimate_weights(reduced, 1, cfg, kind);

  Vector w(dim, 0.0);
  w[idx] = one_d.weights[0];
  FitResult out;
  out.log_likelihood = -negative_log_likelihood(w, rows);
  out.weights = WeightVector(std::move(w), kind);
  out.iterations = one_d.iterations;
  out.converged = one_d.converged;
  return out;
}

// ---------------------------------------------------------------------------
// Participant-level estimation
// ---------------------------------------------------------------------------

/// Comparison row for one answered question: delta = features(subject_1) - features(subject_2).
inline ComparisonRow make_row(const PairwiseQuestion& q, Answer answer, Part part) {
  if (answer.is_no_preference()) throw ValidationError("no-preference answers carry no comparison");
  const Vector a = augmented_features(q.subject_1, part);
  const Vector b = augmented_features(q.subject_2, part);
  ComparisonRow row;
  row.delta.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) row.delta[i] = a[i] - b[i];
  row.answer = answer.value();
  return row;
}

/// Likelihood rows for a list of responses. Attention checks and
/// no-preference answers are skipped; a response naming an unknown question
/// is a validation error.
inline std::vector<ComparisonRow> build_rows(std::span<const Response> responses,
                                             std::span<const PairwiseQuestion> questions, Part part) {
  std::unordered_map<std::string, const PairwiseQuestion*> index;
  for (const auto& q : questions) index.emplace(q.question_id, &q);
  std::vector<ComparisonRow> rows;
  for (const auto& r : responses) {
    const auto it = index.find(r.question_id);
    if (it == index.end()) throw ValidationError("response references unknown question " + r.question_id);
    if (it->second->is_attention_check || r.answer.is_no_preference()) continue;
    rows.push_back(make_row(*it->second, r.answer, part));
  }
  return rows;
}

inline std::size_t question_feature_count(std::span<const PairwiseQuestion> questions) {
  if (questions.empty()) throw InsufficientDataError("no questions");
  return questions.front().subject_1.x.size();
}

inline FitResult estimate_desert(const Participant& p, std::span<const PairwiseQuestion> questions,
                                 const SolverConfig& cfg = {}) {
  const auto rows = build_rows(p.desert_responses, questions, Part::Desert);
  if (rows.empty()) {
    throw InsufficientDataError("participant " + p.participant_id + " has no usable desert responses");
  }
  return estimate_weights(rows, rows.front().delta.size(), cfg, Part::Desert);
}

inline FitResult estimate_utility(const Participant& p, std::span<const PairwiseQuestion> questions,
                                  const SolverConfig& cfg = {}) {
  const auto rows = build_rows(p.utility_responses, questions, Part::Utility);
  if (rows.empty()) {
    throw InsufficientDataError("participant " + p.participant_id + " has no usable utility responses");
  }
  return estimate_weights(rows, rows.front().delta.size(), cfg, Part::Utility);
}

}  // namespace eopfair
