#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "eopfair/probit.hpp"

using namespace eopfair;
using namespace eopfair::probit;

namespace {

// 50-digit values from tests/oracles/probit_values.py.
struct Ref {
  double z;
  double cdf;
  double log_cdf;
  double inv_mills;
};

constexpr Ref kRefs[] = {
    {-40.0, 0.0, -804.60844201375379, 40.024968847207264},
    {-37.5, 4.6053530095819548e-308, -707.66898931750719, 37.526628874883654},
    {-37.0, 5.7255712225245768e-300, -689.03058557689059, 37.02698768612699},
    {-30.0, 4.9067139271481871e-198, -454.3212439563432, 30.033259667433677},
    {-20.0, 2.7536241186062337e-89, -203.91715537109726, 20.049753068527851},
    {-10.0, 7.6198530241605261e-24, -53.231285150512471, 10.098093233962512},
    {-5.0, 2.8665157187919391e-7, -15.064998393988726, 5.1865039671258421},
    {-1.0, 0.15865525393145705, -1.8410216450092635, 1.5251352761609812},
    {0.0, 0.5, -0.69314718055994531, 0.79788456080286536},
    {1.0, 0.84134474606854295, -0.17275377902344989, 0.28759997093917836},
    {1.959964, 0.9750000009035576, -0.025317807057564134, 0.05994365946659739},
    {5.0, 0.99999971334842812, -2.8665161296376359e-7, 1.4867199409049057e-6},
    {10.0, 1.0, -7.6198530241605261e-24, 7.6945986267064193e-23},
    {30.0, 1.0, -4.9067139271481871e-198, 1.4736461348785475e-196},
};

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace

TEST(Probit, CdfMatchesReference) {
  for (const auto& r : kRefs) {
    if (r.cdf == 0.0 || r.cdf < 1e-300) continue;  // subnormal or below
    EXPECT_LE(rel(std_normal_cdf(r.z), r.cdf), 1e-10) << "z=" << r.z;
  }
}

TEST(Probit, LogCdfMatchesReference) {
  for (const auto& r : kRefs) EXPECT_LE(rel(log_std_normal_cdf(r.z), r.log_cdf), 1e-10) << "z=" << r.z;
}

TEST(Probit, InverseMillsMatchesReference) {
  for (const auto& r : kRefs) EXPECT_LE(rel(inverse_mills(r.z), r.inv_mills), 1e-10) << "z=" << r.z;
}

TEST(Probit, PdfAtZero) { EXPECT_NEAR(std_normal_pdf(0.0), 0.3989422804014327, 1e-16); }

TEST(Probit, FarTailStaysFinite) {
  for (double z : {-50.0, -100.0, -1e3, -1e6}) {
    const double l = log_std_normal_cdf(z);
    EXPECT_TRUE(std::isfinite(l)) << z;
    // log Phi(z) ~ -z^2/2 - log(-z) - log(sqrt(2 pi))
    const double approx = -0.5 * z * z - std::log(-z) - 0.5 * std::log(2 * M_PI);
    EXPECT_NEAR(l / approx, 1.0, 1e-3) << z;
    EXPECT_NEAR(inverse_mills(z) / -z, 1.0, 1e-3) << z;
  }
  EXPECT_EQ(log_std_normal_cdf(60.0), -0.0);
}

TEST(Probit, SmoothAcrossTailSwitch) {
  const double h = 1e-6;
  const double left = log_std_normal_cdf(kTailSwitch - h);
  const double right = log_std_normal_cdf(kTailSwitch + h);
  // Slope there is the inverse Mills ratio, about 37.027.
  EXPECT_NEAR((right - left) / (2 * h), inverse_mills(kTailSwitch), 1e-3);
  EXPECT_NEAR(inverse_mills(kTailSwitch - 1e-12), inverse_mills(kTailSwitch + 1e-12), 1e-9);
}

TEST(Probit, DerivativeOfLogCdfIsInverseMills) {
  for (double z = -45.0; z <= 8.0; z += 0.37) {
    const double h = 1e-5 * std::max(1.0, std::abs(z));
    const double fd = (log_std_normal_cdf(z + h) - log_std_normal_cdf(z - h)) / (2 * h);
    EXPECT_NEAR(fd / inverse_mills(z), 1.0, 1e-5) << z;
  }
}

TEST(Probit, MonotoneLogCdf) {
  double prev = log_std_normal_cdf(-60.0);
  for (double z = -59.9; z < 10.0; z += 0.1) {
    const double cur = log_std_normal_cdf(z);
    EXPECT_GE(cur, prev) << z;
    prev = cur;
  }
}

TEST(Probit, NonFiniteInputRejected) {
  EXPECT_THROW(std_normal_cdf(NAN), DomainError);
  EXPECT_THROW(log_std_normal_cdf(INFINITY), DomainError);
  EXPECT_THROW(inverse_mills(-INFINITY), DomainError);
}
