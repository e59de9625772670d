#pragma once

// Shared fixtures for the test binaries.

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eopfair/domain.hpp"
#include "eopfair/estimator.hpp"
#include "eopfair/probit.hpp"

namespace testsupport {

/// Small recidivism-style table exercising every encoding.
inline const char* kCompasCsv =
    "id,sex,age,race,c_charge_degree,priors_count,two_year_recid,decile_score\n"
    "a1,Male,24,African-American,F,0,1,8\n"
    "a2,Female,25,Caucasian,M,3,0,2\n"
    "a3,Male,40,Hispanic,F,12,1,5\n"
    "a4,male,19,caucasian,m,10,0,4\n";

/// Independent log Phi for oracles: plain erfc, valid where Phi does not underflow.
inline double oracle_log_cdf(double z) { return std::log(0.5 * std::erfc(-z / std::sqrt(2.0))); }

inline double oracle_nll(double w0, double w1, const std::vector<eopfair::ComparisonRow>& rows) {
  double s = 0.0;
  for (const auto& r : rows) s -= oracle_log_cdf(r.answer * (w0 * r.delta[0] + w1 * r.delta[1]));
  return s;
}

/// Minimum of the 2-D objective over a `res` x `res` grid of cell centres
/// covering [-1, 1]^2, restricted to the unit disk.
inline double grid_minimum(const std::vector<eopfair::ComparisonRow>& rows, int res = 400) {
  double best = INFINITY;
  for (int i = 0; i < res; ++i) {
    const double a = -1.0 + (2.0 * i + 1.0) / res;
    for (int j = 0; j < res; ++j) {
      const double b = -1.0 + (2.0 * j + 1.0) / res;
      if (a * a + b * b > 1.0) continue;
      best = std::min(best, oracle_nll(a, b, rows));
    }
  }
  return best;
}

/// Rows with integer-valued deltas in {-1,0,1}^dim and probit answers under `truth`.
inline std::vector<eopfair::ComparisonRow> probit_rows(const eopfair::Vector& truth, int n, std::mt19937_64& rng,
                                                       double threshold = 0.6745) {
  std::uniform_int_distribution<int> cell(-1, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<eopfair::ComparisonRow> rows;
  while (static_cast<int>(rows.size()) < n) {
    eopfair::Vector d(truth.size());
    bool nonzero = false;
    for (double& v : d) {
      v = cell(rng);
      nonzero = nonzero || v != 0.0;
    }
    if (!nonzero) continue;
    const double score = eopfair::dot(truth, d);
    const int sign = u(rng) < eopfair::probit::std_normal_cdf(score) ? 1 : -1;
    rows.push_back({d, sign * (std::abs(score) > threshold ? 2 : 1)});
  }
  return rows;
}

inline eopfair::Vector random_unit(std::size_t dim, std::mt19937_64& rng, double radius = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  eopfair::Vector v(dim);
  for (double& c : v) c = g(rng);
  const double n = eopfair::norm2(v);
  for (double& c : v) c *= radius / n;
  return v;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  const auto p = std::filesystem::temp_directory_path() / ("eopfair-" + name + "-" + std::to_string(rng()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
