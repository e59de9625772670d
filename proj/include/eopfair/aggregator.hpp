#pragma once

// Society-level aggregation of per-participant judgments.
//
//  * vote_circumstance: majority vote over the Likert answers.
//  * aggregate_average: coefficient-wise mean of the fitted weight vectors.
//  * aggregate_hierarchical: joint fit of a society vector theta and one
//    vector theta_p per participant with |theta_p - theta| <= lambda.
//  * group_by_demographic: per-segment averages.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eopfair/domain.hpp"
#include "eopfair/errors.hpp"
#include "eopfair/estimator.hpp"

namespace eopfair {

// ---------------------------------------------------------------------------
// Circumstance vote
// ---------------------------------------------------------------------------

/// Disagree and SomewhatDisagree deny that a feature may impact decisions.
inline bool is_irrelevant_vote(LikertLevel level) {
  return level == LikertLevel::Disagree || level == LikertLevel::SomewhatDisagree;
}

/// Feature j is circumstance iff strictly more than half of the participants
/// voted it morally irrelevant.
inline CircumstanceProfile vote_circumstance(std::span<const Participant> participants, std::size_t k) {
  if (participants.empty()) throw InsufficientDataError("vote_circumstance: no participants");
  std::vector<std::size_t> votes(k, 0);
  for (const auto& p : participants) {
    std::vector<bool> seen(k, false);
    for (const auto& l : p.likert) {
      if (l.feature_index >= k) {
        throw IncompleteDataError("participant " + p.participant_id + " rated unknown feature " +
                                  std::to_string(l.feature_index));
      }
      if (seen[l.feature_index]) {
        throw IncompleteDataError("participant " + p.participant_id + " rated feature " +
                                  std::to_string(l.feature_index) + " twice");
      }
      seen[l.feature_index] = true;
      if (is_irrelevant_vote(l.level)) ++votes[l.feature_index];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!seen[j]) {
        throw IncompleteDataError("participant " + p.participant_id + " has no Likert answer for feature " +
                                  std::to_string(j));
      }
    }
  }
  CircumstanceProfile profile;
  profile.irrelevant_flags.resize(k);
  for (std::size_t j = 0; j < k; ++j) profile.irrelevant_flags[j] = 2 * votes[j] > participants.size();
  return profile;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

enum class AggregationMethod { Average, Hierarchical };

inline std::string_view to_string(AggregationMethod m) {
  return m == AggregationMethod::Average ? "average" : "hierarchical";
}

struct AggregateResult {
  WeightVector society_weights;
  std::map<std::string, WeightVector> per_participant;
  AggregationMethod method = AggregationMethod::Average;
  /// Hierarchical only.
  std::optional<double> total_log_likelihood;
  /// Hierarchical only: total negative log-likelihood after initialisation and
  /// after each outer iteration.
  std::vector<double> objective_trace;
  int outer_iterations = 0;
};

// ---------------------------------------------------------------------------
// Average
// ---------------------------------------------------------------------------

inline WeightVector mean_vector(std::span<const WeightVector> vectors) {
  if (vectors.empty()) throw InsufficientDataError("cannot average an empty set of weight vectors");
  const std::size_t dim = vectors.front().size();
  const Part kind = vectors.front().kind();
  Vector mean(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.kind() != kind) throw ValidationError("cannot average desert and utility vectors together");
    if (v.size() != dim) throw ShapeError("weight vectors have different dimensions");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  }
  for (double& m : mean) m /= static_cast<double>(vectors.size());
  return WeightVector(std::move(mean), kind);
}

inline AggregateResult aggregate_average(std::span<const WeightVector> vectors) {
  AggregateResult r;
  r.society_weights = mean_vector(vectors);
  r.method = AggregationMethod::Average;
  return r;
}

inline AggregateResult aggregate_average(const std::map<std::string, WeightVector>& by_participant) {
  std::vector<WeightVector> vs;
  vs.reserve(by_participant.size());
  for (const auto& [id, v] : by_participant) vs.push_back(v);
  AggregateResult r = aggregate_average(vs);
  r.per_participant = by_participant;
  return r;
}

// ---------------------------------------------------------------------------
// Hierarchical
// ---------------------------------------------------------------------------

struct HierarchicalConfig {
  double lambda = 0.5;
  int outer_iterations = 200;
  SolverConfig inner;
  // Iteration budget for the joint step; its projection is approximate, so it
  // cannot reach the inner gradient tolerance.
  int joint_iterations = 200;
  double tolerance = 1e-6;

  void validate() const {
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a nonnegative number");
    if (outer_iterations <= 0) throw ValidationError("outer_iterations must be positive");
    if (joint_iterations <= 0) throw ValidationError("joint_iterations must be positive");
    if (!(tolerance > 0)) throw ValidationError("tolerance must be positive");
    inner.validate();
  }
};

namespace detail {

/// Moves `x` to within `radius` of `center`.
inline Vector clip_to_ball(std::span<const double> x, std::span<const double> center, double radius) {
  Vector out(x.begin(), x.end());
  const double d = distance(x, center);
  if (d > radius) {
    const double s = d > 0 ? radius / d : 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = center[i] + s * (x[i] - center[i]);
  }
  return out;
}

}  // namespace detail

/// Exact Euclidean projection onto {|y| <= 1} intersected with {|y - center| <= radius}.
/// `center` must lie in the unit ball, so the intersection is nonempty.
inline Vector project_two_balls(std::span<const double> x, std::span<const double> center, double radius) {
  const std::size_t n = x.size();
  if (norm2(x) <= 1.0 && distance(x, center) <= radius) return Vector(x.begin(), x.end());

  Vector a = project_unit_ball(x);
  if (distance(a, center) <= radius) return a;
  Vector b = radius == 0.0 ? Vector(center.begin(), center.end()) : detail::clip_to_ball(x, center, radius);
  if (norm2(b) <= 1.0) return b;

  // Both constraints active: the answer lies on the intersection of the two
  // spheres, a (n-2)-sphere of radius r centred at h * c_hat in the plane
  // orthogonal to c_hat.
  const double d = norm2(center);
  if (d == 0.0) return b;  // concentric balls: one contains the other
  Vector c_hat(n);
  for (std::size_t i = 0; i < n; ++i) c_hat[i] = center[i] / d;
  const double h = std::clamp((1.0 + d * d - radius * radius) / (2.0 * d), -1.0, 1.0);
  const double r = std::sqrt(std::max(0.0, 1.0 - h * h));
  Vector u(x.begin(), x.end());
  const double along = dot(u, c_hat);
  for (std::size_t i = 0; i < n; ++i) u[i] -= along * c_hat[i];
  double un = norm2(u);
  if (un == 0.0) {
    // x on the axis: every point of the circle is equidistant; pick one.
    std::fill(u.begin(), u.end(), 0.0);
    const std::size_t j = static_cast<std::size_t>(
        std::min_element(c_hat.begin(), c_hat.end(), [](double p, double q) { return std::abs(p) < std::abs(q); }) -
        c_hat.begin());
    u[j] = 1.0;
    const double uc = dot(u, c_hat);
    for (std::size_t i = 0; i < n; ++i) u[i] -= uc * c_hat[i];
    un = norm2(u);
  }
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = h * c_hat[i] + (un > 0 ? r * u[i] / un : 0.0);
  return y;
}

namespace detail {

/// Joint variable layout: [theta, theta_1, ..., theta_P], each of length dim.
struct JointLayout {
  std::size_t dim = 0;
  std::size_t participants = 0;

  std::span<double> block(Vector& z, std::size_t b) const { return {z.data() + b * dim, dim}; }
  std::span<const double> block(const Vector& z, std::size_t b) const { return {z.data() + b * dim, dim}; }
};

/// Projection onto the product of unit balls.
inline Vector project_balls(const Vector& z, const JointLayout& L) {
  Vector out = z;
  for (std::size_t b = 0; b <= L.participants; ++b) {
    auto blk = L.block(out, b);
    const double n = norm2(blk);
    if (n > 1.0) {
      for (double& v : blk) v /= n;
    }
  }
  return out;
}

/// Projection onto {|theta_p - theta| <= lambda for all p}. The optimal centre
/// minimises  f(t) = |t - v|^2 / 2 + sum_p (|u_p - t| - lambda)_+^2 / 2,
/// which is smooth and strongly convex; damped Newton on t, then clip each u_p.
inline Vector project_coupling(const Vector& z, const JointLayout& L, double lambda) {
  const std::size_t dim = L.dim;
  const std::size_t P = L.participants;
  const auto v = L.block(z, 0);
  auto objective = [&](const Vector& t) {
    double f = 0.0;
    for (std::size_t i = 0; i < dim; ++i) f += 0.5 * (t[i] - v[i]) * (t[i] - v[i]);
    for (std::size_t p = 0; p < P; ++p) {
      const double e = std::max(0.0, distance(L.block(z, p + 1), t) - lambda);
      f += 0.5 * e * e;
    }
    return f;
  };

  Vector theta(v.begin(), v.end());
  double f = objective(theta);
  Vector g(dim), step(dim), trial(dim), d(dim);
  std::vector<double> H(dim * dim);
  for (int it = 0; it < 100; ++it) {
    for (std::size_t i = 0; i < dim; ++i) g[i] = theta[i] - v[i];
    std::fill(H.begin(), H.end(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) H[i * dim + i] = 1.0;
    for (std::size_t p = 0; p < P; ++p) {
      const auto u = L.block(z, p + 1);
      for (std::size_t i = 0; i < dim; ++i) d[i] = theta[i] - u[i];
      const double r = norm2(d);
      if (r <= lambda) continue;
      const double a = 1.0 - lambda / r;
      const double c = lambda / (r * r * r);
      for (std::size_t i = 0; i < dim; ++i) {
        g[i] += a * d[i];
        H[i * dim + i] += a;
        for (std::size_t j = 0; j < dim; ++j) H[i * dim + j] += c * d[i] * d[j];
      }
    }
    if (norm2(g) <= 1e-13) break;

    // Cholesky solve H step = g; H is I plus PSD terms.
    for (std::size_t j = 0; j < dim; ++j) {
      double diag = H[j * dim + j];
      for (std::size_t k = 0; k < j; ++k) diag -= H[j * dim + k] * H[j * dim + k];
      diag = std::sqrt(std::max(diag, 1e-300));
      H[j * dim + j] = diag;
      for (std::size_t i = j + 1; i < dim; ++i) {
        double x = H[i * dim + j];
        for (std::size_t k = 0; k < j; ++k) x -= H[i * dim + k] * H[j * dim + k];
        H[i * dim + j] = x / diag;
      }
    }
    for (std::size_t i = 0; i < dim; ++i) {
      double x = g[i];
      for (std::size_t k = 0; k < i; ++k) x -= H[i * dim + k] * step[k];
      step[i] = x / H[i * dim + i];
    }
    for (std::size_t i = dim; i-- > 0;) {
      double x = step[i];
      for (std::size_t k = i + 1; k < dim; ++k) x -= H[k * dim + i] * step[k];
      step[i] = x / H[i * dim + i];
    }

    double slope = 0.0;
    for (std::size_t i = 0; i < dim; ++i) slope += g[i] * step[i];
    double t = 1.0;
    double ft = f;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = theta[i] - t * step[i];
      ft = objective(trial);
      if (ft <= f - 1e-4 * t * slope) break;
    }
    if (!(ft < f)) break;
    theta = trial;
    f = ft;
  }

  Vector out(z.size());
  std::copy(theta.begin(), theta.end(), out.begin());
  for (std::size_t p = 0; p < P; ++p) {
    const Vector clipped = clip_to_ball(L.block(z, p + 1), theta, lambda);
    std::copy(clipped.begin(), clipped.end(), L.block(out, p + 1).begin());
  }
  return out;
}

/// Projection onto the joint feasible set by Dykstra's alternating
/// projections, followed by an exact repair so that the returned point is
/// feasible even when the sweeps stop early.
inline Vector project_joint(const Vector& z, const JointLayout& L, double lambda) {
  constexpr int kMaxSweeps = 100;
  constexpr double kExitMovement = 1e-10;
  Vector x = z;
  Vector p(z.size(), 0.0);
  Vector q(z.size(), 0.0);
  Vector tmp(z.size());
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + p[i];
    Vector y = project_balls(tmp, L);
    for (std::size_t i = 0; i < x.size(); ++i) p[i] = tmp[i] - y[i];
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = y[i] + q[i];
    Vector next = project_coupling(tmp, L, lambda);
    for (std::size_t i = 0; i < x.size(); ++i) q[i] = tmp[i] - next[i];
    const double moved = distance(next, x);
    x = std::move(next);
    if (moved <= kExitMovement) break;
  }
  // Repair.
  Vector out(z.size());
  const Vector theta = project_unit_ball(L.block(x, 0));
  std::copy(theta.begin(), theta.end(), out.begin());
  for (std::size_t b = 1; b <= L.participants; ++b) {
    const Vector tp = project_two_balls(L.block(x, b), theta, lambda);
    std::copy(tp.begin(), tp.end(), L.block(out, b).begin());
  }
  return out;
}

inline bool within(std::span<const Vector> thetas, std::span<const double> center, double lambda) {
  for (const auto& t : thetas) {
    if (distance(t, center) > lambda) return false;
  }
  return true;
}

/// Moves theta toward the projected mean of the theta_p as far as every
/// coupling constraint allows. The likelihood does not involve theta, so this
/// never changes the objective.
inline Vector recenter(const Vector& theta, std::span<const Vector> thetas, double lambda) {
  const std::size_t dim = theta.size();
  Vector mean(dim, 0.0);
  for (const auto& t : thetas) {
    for (std::size_t i = 0; i < dim; ++i) mean[i] += t[i];
  }
  for (double& v : mean) v /= static_cast<double>(thetas.size());
  const Vector target = project_unit_ball(mean);
  if (within(thetas, target, lambda)) return target;

  auto at = [&](double s) {
    Vector c(dim);
    for (std::size_t i = 0; i < dim; ++i) c[i] = theta[i] + s * (target[i] - theta[i]);
    return c;
  };
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (within(thetas, at(mid), lambda) ? lo : hi) = mid;
  }
  return lo > 0.0 ? at(lo) : theta;
}

}  // namespace detail

/// Hierarchical aggregation. Each outer iteration
///  (a) refits every theta_p with theta fixed, over the unit ball intersected
///      with the lambda-ball around theta;
///  (b) runs projected gradient descent on all vectors jointly, which lets
///      theta move (required when lambda is small);
///  (c) recentres theta on the projected mean of the theta_p, as far as the
///      coupling constraints allow.
/// The total negative log-likelihood never increases across iterations; the
/// loop stops once an iteration improves it by less than `tolerance`.
inline AggregateResult aggregate_hierarchical(const std::map<std::string, std::vector<ComparisonRow>>& response_sets,
                                              const HierarchicalConfig& cfg = {}, Part kind = Part::Desert) {
  cfg.validate();
  if (response_sets.empty()) throw InsufficientDataError("aggregate_hierarchical: no participants");
  std::size_t dim = 0;
  for (const auto& [id, rows] : response_sets) {
    if (rows.empty()) throw InsufficientDataError("participant " + id + " has no comparison rows");
    if (dim == 0) dim = rows.front().delta.size();
    for (const auto& r : rows) {
      if (r.delta.size() != dim) throw ShapeError("participant " + id + " has rows of a different dimension");
    }
  }

  std::vector<std::string> ids;
  std::vector<const std::vector<ComparisonRow>*> sets;
  for (const auto& [id, rows] : response_sets) {
    ids.push_back(id);
    sets.push_back(&rows);
  }
  const std::size_t P = ids.size();
  const double lambda = cfg.lambda;
  const detail::JointLayout L{dim, P};

  Vector theta(dim, 0.0);
  std::vector<Vector> thetas(P, Vector(dim, 0.0));
  auto total = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < P; ++p) s += negative_log_likelihood(thetas[p], *sets[p]);
    return s;
  };

  AggregateResult res;
  res.method = AggregationMethod::Hierarchical;
  double objective = total();
  res.objective_trace.push_back(objective);

  for (int outer = 0; outer < cfg.outer_iterations; ++outer) {
    // (a)
    for (std::size_t p = 0; p < P; ++p) {
      const auto& rows = *sets[p];
      auto fit = projected_gradient_descent([&](const Vector& w) { return negative_log_likelihood(w, rows); },
                                            [&](const Vector& w) { return nll_gradient(w, rows); },
                                            [&](const Vector& w) { return project_two_balls(w, theta, lambda); },
                                            thetas[p], cfg.inner);
      thetas[p] = std::move(fit.x);
    }

    // (b)
    Vector z(dim * (P + 1));
    std::copy(theta.begin(), theta.end(), z.begin());
    for (std::size_t p = 0; p < P; ++p) std::copy(thetas[p].begin(), thetas[p].end(), L.block(z, p + 1).begin());
    auto joint_f = [&](const Vector& v) {
      double s = 0.0;
      for (std::size_t p = 0; p < P; ++p) s += negative_log_likelihood(L.block(v, p + 1), *sets[p]);
      return s;
    };
    auto joint_g = [&](const Vector& v) {
      Vector g(v.size(), 0.0);
      for (std::size_t p = 0; p < P; ++p) {
        const Vector gp = nll_gradient(L.block(v, p + 1), *sets[p]);
        std::copy(gp.begin(), gp.end(), L.block(g, p + 1).begin());
      }
      return g;
    };
    SolverConfig joint_cfg = cfg.inner;
    joint_cfg.max_iterations = std::min(joint_cfg.max_iterations, cfg.joint_iterations);
    auto joint = projected_gradient_descent(joint_f, joint_g,
                                            [&](const Vector& v) { return detail::project_joint(v, L, lambda); },
                                            z, joint_cfg);
    // Keep the previous point if the (inexact) projection of the start moved
    // it uphill.
    if (joint.value <= total()) {
      auto th = L.block(joint.x, 0);
      theta.assign(th.begin(), th.end());
      for (std::size_t p = 0; p < P; ++p) {
        auto blk = L.block(joint.x, p + 1);
        thetas[p].assign(blk.begin(), blk.end());
      }
    }

    // (c)
    theta = detail::recenter(theta, thetas, lambda);

    const double next = total();
    res.objective_trace.push_back(next);
    res.outer_iterations = outer + 1;
    const double gain = objective - next;
    objective = next;
    if (gain < cfg.tolerance) break;
  }

  res.society_weights = WeightVector(theta, kind);
  for (std::size_t p = 0; p < P; ++p) res.per_participant.emplace(ids[p], WeightVector(thetas[p], kind));
  res.total_log_likelihood = -objective;
  return res;
}

// ---------------------------------------------------------------------------
// Demographic grouping
// ---------------------------------------------------------------------------

/// Maps a raw demographic answer to a group label; nullopt drops the participant.
using BucketingRule = std::function<std::optional<std::string>(const std::string&)>;

inline BucketingRule identity_bucketing() {
  return [](const std::string& v) -> std::optional<std::string> {
    if (v.empty()) return std::nullopt;
    return v;
  };
}

/// Age brackets such as "25-40", "25–40" or "65+" are bucketed by their lower
/// bound: below `threshold` is "young", otherwise "old".
inline BucketingRule age_bucketing(int threshold = 40) {
  return [threshold](const std::string& v) -> std::optional<std::string> {
    std::size_t i = 0;
    while (i < v.size() && !std::isdigit(static_cast<unsigned char>(v[i]))) ++i;
    if (i == v.size()) return std::nullopt;
    int lower = 0;
    while (i < v.size() && std::isdigit(static_cast<unsigned char>(v[i]))) lower = lower * 10 + (v[i++] - '0');
    return lower < threshold ? "young" : "old";
  };
}

struct DemographicGroups {
  std::map<std::string, WeightVector> means;
  std::map<std::string, std::size_t> counts;
  std::size_t skipped = 0;
};

inline DemographicGroups group_by_demographic(std::span<const Participant> participants,
                                              const std::map<std::string, WeightVector>& fits,
                                              const std::string& attribute, const BucketingRule& bucket) {
  const auto& known = demographic_attributes();
  if (std::find(known.begin(), known.end(), attribute) == known.end()) {
    throw ValidationError("unknown demographic attribute: " + attribute);
  }
  std::map<std::string, std::vector<WeightVector>> members;
  DemographicGroups out;
  for (const auto& p : participants) {
    const auto fit = fits.find(p.participant_id);
    if (fit == fits.end() || !p.demographics) {
      ++out.skipped;
      continue;
    }
    const auto it = p.demographics->find(attribute);
    if (it == p.demographics->end()) {
      ++out.skipped;
      continue;
    }
    const auto group = bucket(it->second);
    if (!group) {
      ++out.skipped;
      continue;
    }
    members[*group].push_back(fit->second);
  }
  for (const auto& [g, vs] : members) {
    out.means.emplace(g, mean_vector(vs));
    out.counts.emplace(g, vs.size());
  }
  return out;
}

inline DemographicGroups group_by_demographic(std::span<const Participant> participants,
                                              const std::map<std::string, FitResult>& fits,
                                              const std::string& attribute, const BucketingRule& bucket) {
  std::map<std::string, WeightVector> ws;
  for (const auto& [id, f] : fits) ws.emplace(id, f.weights);
  return group_by_demographic(participants, ws, attribute, bucket);
}

/// Default rule per attribute: lower-bound split at 40 for age, identity otherwise.
inline BucketingRule default_bucketing(const std::string& attribute) {
  return attribute == "age_bracket" ? age_bucketing(40) : identity_bucketing();
}

}  // namespace eopfair
