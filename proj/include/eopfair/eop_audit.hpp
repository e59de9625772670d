#pragma once

// Equality-of-opportunity audit: within each desert level, the distribution of
// utility must not depend on the circumstance. Desert is binned into quantile
// bins; within a bin every pair of sufficiently large circumstance groups is
// compared with the two-sample Kolmogorov-Smirnov statistic.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eopfair/domain.hpp"
#include "eopfair/errors.hpp"

namespace eopfair {

/// subject_id -> predicted label.
using PolicyPredictions = std::map<std::string, int>;

struct AuditConfig {
  int n_desert_bins = 5;
  double divergence_threshold = 0.1;
  int min_cell_size = 10;

  void validate() const {
    if (n_desert_bins <= 0) throw ValidationError("n_desert_bins must be positive");
    if (!(divergence_threshold >= 0 && divergence_threshold <= 1)) {
      throw ValidationError("divergence_threshold must lie in [0, 1]");
    }
    if (min_cell_size <= 0) throw ValidationError("min_cell_size must be positive");
  }
};

using CircumstanceKey = std::vector<double>;

struct GroupSize {
  CircumstanceKey key;
  std::size_t size = 0;
};

struct BinReport {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<GroupSize> group_sizes;
  /// Max KS statistic over evaluated group pairs; 0 when none was evaluated.
  double max_pairwise_divergence = 0.0;
  std::size_t evaluated_pairs = 0;
};

struct SkippedCell {
  std::size_t bin = 0;
  CircumstanceKey key;
  std::size_t size = 0;
};

struct EopReport {
  std::vector<BinReport> bins;
  double overall_violation = 0.0;
  bool passes = true;
  /// Only one circumstance class exists, so there is nothing to compare.
  bool trivial = false;
  std::vector<SkippedCell> skipped_cells;
};

inline double compute_desert(const WeightVector& delta, const Subject& s) {
  if (delta.size() != s.x.size() + 1) throw ShapeError("desert weights do not match the subject's features");
  return dot(delta.coefficients(), augmented_features(s, Part::Desert));
}

inline double compute_utility(const WeightVector& upsilon, const Subject& s, int y_hat) {
  if (upsilon.size() != s.x.size() + 2) throw ShapeError("utility weights do not match the subject's features");
  Vector v = s.x;
  v.push_back(s.y);
  v.push_back(y_hat);
  return dot(upsilon.coefficients(), v);
}

/// Values of the circumstance features; equal keys mean the same circumstance.
inline CircumstanceKey circumstance_key(const CircumstanceProfile& profile, const Subject& s) {
  if (profile.irrelevant_flags.size() != s.x.size()) throw ShapeError("circumstance profile length mismatch");
  CircumstanceKey key;
  for (std::size_t j = 0; j < s.x.size(); ++j) {
    if (profile.irrelevant_flags[j]) key.push_back(s.x[j]);
  }
  return key;
}

/// Largest absolute gap between the empirical CDFs of two samples.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientDataError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Assigns each desert value to one of up to `n_bins` quantile bins. Equal
/// values always share a bin, so the assignment is independent of input order.
inline std::vector<std::size_t> quantile_bins(std::span<const double> values, int n_bins) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> cuts;
  for (int b = 1; b < n_bins; ++b) {
    const std::size_t idx = static_cast<std::size_t>(b) * n / static_cast<std::size_t>(n_bins);
    if (idx < n) cuts.push_back(sorted[idx]);
  }
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  // A cut equal to the minimum would leave the first bin empty.
  if (!cuts.empty() && n > 0 && cuts.front() == sorted.front()) cuts.erase(cuts.begin());
  std::vector<std::size_t> bins(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    bins[i] = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), values[i]) - cuts.begin());
  }
  return bins;
}

inline EopReport check_eop(std::span<const Subject> subjects, const PolicyPredictions& predictions,
                           const WeightVector& delta, const WeightVector& upsilon, const CircumstanceProfile& profile,
                           const AuditConfig& cfg = {}) {
  cfg.validate();
  if (subjects.empty()) throw InsufficientDataError("check_eop: no subjects");

  std::vector<double> deserts;
  std::vector<double> utilities;
  std::vector<CircumstanceKey> keys;
  for (const auto& s : subjects) {
    const auto it = predictions.find(s.id);
    if (it == predictions.end()) throw ValidationError("no prediction for subject " + s.id);
    if (it->second != 0 && it->second != 1) throw ValidationError("prediction for " + s.id + " is not 0/1");
    deserts.push_back(compute_desert(delta, s));
    utilities.push_back(compute_utility(upsilon, s, it->second));
    keys.push_back(circumstance_key(profile, s));
  }

  const auto bin_of = quantile_bins(deserts, cfg.n_desert_bins);
  const std::size_t n_bins = *std::max_element(bin_of.begin(), bin_of.end()) + 1;

  EopReport report;
  {
    std::map<CircumstanceKey, int> distinct;
    for (const auto& k : keys) distinct[k];
    report.trivial = distinct.size() < 2;
  }

  for (std::size_t b = 0; b < n_bins; ++b) {
    std::map<CircumstanceKey, std::vector<double>> groups;
    BinReport br;
    bool any = false;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      if (bin_of[i] != b) continue;
      groups[keys[i]].push_back(utilities[i]);
      if (!any || deserts[i] < br.lower) br.lower = deserts[i];
      if (!any || deserts[i] > br.upper) br.upper = deserts[i];
      any = true;
    }
    if (!any) continue;
    std::vector<const std::vector<double>*> large;
    for (const auto& [key, us] : groups) {
      br.group_sizes.push_back({key, us.size()});
      if (us.size() < static_cast<std::size_t>(cfg.min_cell_size)) {
        report.skipped_cells.push_back({report.bins.size(), key, us.size()});
      } else {
        large.push_back(&us);
      }
    }
    for (std::size_t i = 0; i < large.size(); ++i) {
      for (std::size_t j = i + 1; j < large.size(); ++j) {
        br.max_pairwise_divergence = std::max(br.max_pairwise_divergence, ks_statistic(*large[i], *large[j]));
        ++br.evaluated_pairs;
      }
    }
    report.overall_violation = std::max(report.overall_violation, br.max_pairwise_divergence);
    report.bins.push_back(std::move(br));
  }
  report.passes = report.overall_violation <= cfg.divergence_threshold;
  return report;
}

}  // namespace eopfair
