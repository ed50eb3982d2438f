#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fedrlr/airlink.hpp"
#include "fedrlr/errors.hpp"
#include "test_util.hpp"

using namespace fedrlr;
using namespace fedrlr::airlink;
using fedrlr::testing::gaussian;

namespace {

// Running mean and standard error, entrywise.
struct MeanTracker {
  Matrix sum, sum_sq;
  long n = 0;
  MeanTracker(Index r, Index c) : sum(Matrix::Zero(r, c)), sum_sq(Matrix::Zero(r, c)) {}
  void add(const Matrix& x) {
    sum += x;
    sum_sq += x.cwiseAbs2();
    ++n;
  }
  Matrix mean() const { return sum / static_cast<double>(n); }
  Matrix stderr_() const {
    const Matrix m = mean();
    return ((sum_sq / static_cast<double>(n) - m.cwiseAbs2()) / static_cast<double>(n))
        .cwiseMax(0.0)
        .cwiseSqrt();
  }
};

void expect_within_3se(const MeanTracker& t, const Matrix& expected) {
  const Matrix m = t.mean();
  const Matrix se = t.stderr_();
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      EXPECT_LE(std::abs(m(i, j) - expected(i, j)), 3.0 * se(i, j) + 1e-12)
          << "(" << i << "," << j << ") mean " << m(i, j) << " expected " << expected(i, j);
}

}  // namespace

TEST(Precoder, EntriesAreScaledSigns) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Matrix f = draw_precoder(1, 0, i, rng).f;
    EXPECT_EQ(std::abs(f(0, 0)), 1.0);
  }
  const Matrix f = draw_precoder(4, 0, 0, rng).f;
  EXPECT_TRUE((f.cwiseAbs().array() == 0.5).all());
  EXPECT_THROW(draw_precoder(0, 0, 0, rng), DimensionMismatch);
}

TEST(Precoder, SignFrequenciesAndChiSquare) {
  Rng rng(2);
  const Index r = 4;
  const int draws = 100000;
  Matrix positive = Matrix::Zero(r, r);
  for (int i = 0; i < draws; ++i) positive += (draw_precoder(r, 0, i, rng).f.array() > 0).cast<double>().matrix();
  const double sigma = std::sqrt(0.25 / draws);
  double chi2 = 0.0;
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < r; ++i) {
      const double p = positive(i, j) / draws;
      EXPECT_LE(std::abs(p - 0.5), 3 * sigma);
      const double z = (p - 0.5) / sigma;
      chi2 += z * z;
    }
  }
  // 16 degrees of freedom, 0.999 quantile.
  EXPECT_LT(chi2, 39.25);
}

TEST(Precoder, OuterProductMeanIsIdentity) {
  Rng rng(3);
  const Index r = 4;
  const int draws = 100000;
  MeanTracker t(r, r);
  for (int i = 0; i < draws; ++i) {
    const Matrix f = draw_precoder(r, 0, i, rng).f;
    t.add(f * f.transpose());
  }
  const double sigma = 1.0 / std::sqrt(static_cast<double>(r) * draws);
  const Matrix m = t.mean();
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < r; ++i) EXPECT_LE(std::abs(m(i, j) - (i == j ? 1.0 : 0.0)), 3 * sigma + 1e-14);
}

TEST(Precoder, KeyedDrawsAreDeterministicAndSeparated) {
  const Matrix a = draw_precoder(6, 3, 17, 42, 1).f;
  EXPECT_EQ(a, draw_precoder(6, 3, 17, 42, 1).f);
  EXPECT_NE(a, draw_precoder(6, 4, 17, 42, 1).f);
  EXPECT_NE(a, draw_precoder(6, 3, 18, 42, 1).f);
  EXPECT_NE(a, draw_precoder(6, 3, 17, 42, 2).f);
  EXPECT_NE(a, draw_precoder(6, 3, 17, 43, 1).f);
}

TEST(Precode, ProductsAndShapes) {
  Rng rng(4);
  const Matrix u = gaussian(7, 3, rng), v = gaussian(5, 3, rng);
  const RlcPrecoder f = draw_precoder(3, 0, 0, rng);
  const TransmitFrame frame = precode(u, v, f);
  EXPECT_LE((frame.s_u * frame.s_v - u * f.f * f.f.transpose() * v.transpose()).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_EQ(frame.symbols(), (7 + 5) * 3);
  EXPECT_EQ(precode(Matrix::Zero(7, 3), v, f).s_u.norm(), 0.0);
  const double smax = Eigen::JacobiSVD<Matrix>(f.f).singularValues()(0);
  EXPECT_LE(frame.s_u.norm(), u.norm() * smax + 1e-12);
  EXPECT_THROW(precode(gaussian(7, 2, rng), v, f), DimensionMismatch);
  EXPECT_EQ(precode(u, v, f, Vector::Ones(4)).symbols(), 40);
}

TEST(PolicyCoeffs, PhaseAlignAndInversion) {
  const PowerPolicy gbma{PowerPolicy::Kind::kGbmaPhaseAlign, 0.2};
  const PolicyCoeffs a = policy_coeffs(gbma, Complex(0.7, 0.0), 4.0);
  EXPECT_NEAR(std::abs(a.p - Complex(2.0, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(a.p * Complex(0.7, 0.0) - Complex(1.4, 0.0)), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(a.rho, 2.0);

  const PolicyCoeffs b = policy_coeffs(gbma, Complex(0.0, 1.0), 4.0);
  EXPECT_NEAR(std::abs(b.p - std::polar(2.0, -std::numbers::pi / 2)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(b.p * Complex(0.0, 1.0) - Complex(2.0, 0.0)), 0.0, 1e-15);

  const PowerPolicy inv{PowerPolicy::Kind::kChannelInversion, 0.2};
  const Complex h = std::polar(0.5, 1.1);
  EXPECT_NEAR(std::abs(policy_coeffs(inv, h, 9.0).p * h - Complex(3.0, 0.0)), 0.0, 1e-14);
  const Complex deep = std::polar(0.1, -2.0);
  EXPECT_NEAR(std::abs(policy_coeffs(inv, deep, 9.0).p * deep - Complex(1.5, 0.0)), 0.0, 1e-14);

  const PolicyCoeffs e = policy_coeffs(PowerPolicy{PowerPolicy::Kind::kErrorFree, 0.2}, h, 9.0);
  EXPECT_EQ(e.p, Complex(1.0, 0.0));
  EXPECT_EQ(e.rho, 1.0);
}

TEST(MacSuperpose, ErrorFreeIsExactSum) {
  Rng rng(5);
  std::vector<TransmitFrame> frames;
  Matrix su = Matrix::Zero(6, 2), sv = Matrix::Zero(2, 4);
  for (int k = 0; k < 3; ++k) {
    frames.push_back(precode(gaussian(6, 2, rng), gaussian(4, 2, rng), draw_precoder(2, k, 0, rng),
                             Vector::Constant(3, k)));
    su += frames.back().s_u;
    sv += frames.back().s_v;
  }
  const ChannelRealization chan = draw_channel(3, 1.0, 1.0, rng);
  Rng noise(6);
  const ReceivedSignal rx = mac_superpose(frames, chan, PowerPolicy{PowerPolicy::Kind::kErrorFree, 0.2}, noise);
  EXPECT_EQ(ls_estimate(rx.y_u, 1.0), su);
  EXPECT_EQ(ls_estimate(rx.y_v, 1.0), sv);
  EXPECT_EQ(ls_estimate(rx.y_bias, 1.0), Vector::Constant(3, 3.0));
  EXPECT_EQ(rx.y_u.imag().norm(), 0.0);
  Rng untouched(6);
  EXPECT_EQ(noise(), untouched());
}

TEST(MacSuperpose, SingleUnitChannelNoNoise) {
  Rng rng(7);
  const TransmitFrame f = precode(gaussian(5, 2, rng), gaussian(3, 2, rng), draw_precoder(2, 0, 0, rng));
  ChannelRealization chan{{Complex(1.0, 0.0)}, 0.0, 1.0};
  Rng noise(8);
  const ReceivedSignal rx =
      mac_superpose(std::span(&f, 1), chan, PowerPolicy{PowerPolicy::Kind::kGbmaPhaseAlign, 0.2}, noise);
  EXPECT_LE((ls_estimate(rx.y_u, 1.0) - f.s_u).norm(), 1e-15);
  EXPECT_LE((ls_estimate(rx.y_v, 1.0) - f.s_v).norm(), 1e-15);
}

TEST(MacSuperpose, NoiseVarianceMatches) {
  const double sigma_z2 = 2.5;
  const TransmitFrame zero{Matrix::Zero(100, 10), Matrix::Zero(10, 100), Vector()};
  ChannelRealization chan{{Complex(1.0, 0.0)}, sigma_z2, 1.0};
  Rng noise(9);
  const ReceivedSignal rx = mac_superpose(std::span(&zero, 1), chan,
                                          PowerPolicy{PowerPolicy::Kind::kGbmaPhaseAlign, 0.2}, noise);
  // 10^3 + 10^3 entries per call; |Z|^2 is exponential with mean sigma_z2.
  double sum = 0.0, sum_re = 0.0;
  long n = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const ReceivedSignal r = rep == 0 ? rx : mac_superpose(std::span(&zero, 1), chan,
                                                           PowerPolicy{PowerPolicy::Kind::kGbmaPhaseAlign, 0.2}, noise);
    sum += r.y_u.cwiseAbs2().sum() + r.y_v.cwiseAbs2().sum();
    sum_re += r.y_u.real().cwiseAbs2().sum() + r.y_v.real().cwiseAbs2().sum();
    n += r.y_u.size() + r.y_v.size();
  }
  ASSERT_EQ(n, 100000);
  EXPECT_LE(std::abs(sum / n - sigma_z2), 3 * sigma_z2 / std::sqrt(static_cast<double>(n)));
  // Real part carries half the variance; chi-square(1) scaled has sd sqrt(2) * mean.
  EXPECT_LE(std::abs(sum_re / n - sigma_z2 / 2),
            3 * std::sqrt(2.0) * (sigma_z2 / 2) / std::sqrt(static_cast<double>(n)));
}

TEST(LsEstimate, RealPartOverRho) {
  ComplexMatrix y(2, 2);
  y << Complex(0, 1), Complex(0, -3), Complex(0, 2), Complex(0, 5);
  EXPECT_EQ(ls_estimate(y, 2.0).norm(), 0.0);
  y(0, 0) = Complex(4, 1);
  EXPECT_EQ(ls_estimate(y, 2.0)(0, 0), 2.0);
  EXPECT_THROW(ls_estimate(y, 0.0), Error);
}

TEST(Channel, DeterministicAndUnitPower) {
  Rng a(10), b(10);
  const auto c1 = draw_channel(5, 1.0, 1.0, a);
  const auto c2 = draw_channel(5, 1.0, 1.0, b);
  EXPECT_EQ(c1.h, c2.h);
  Rng rng(11);
  double power = 0.0;
  const int n = 20000;
  for (int i = 0; i < n / 5; ++i)
    for (const Complex& h : draw_channel(5, 1.0, 1.0, rng).h) power += std::norm(h);
  EXPECT_LE(std::abs(power / n - 1.0), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Unbiasedness, InversionRecoversSumOfFactors) {
  // X_U estimate under exact inversion (no clipping) averages to sum_k S_Uk.
  Rng rng(12);
  const int k_dev = 4;
  const PowerPolicy inv{PowerPolicy::Kind::kChannelInversion, 0.0};
  std::vector<TransmitFrame> frames;
  Matrix expected = Matrix::Zero(6, 3);
  for (int k = 0; k < k_dev; ++k) {
    frames.push_back(precode(gaussian(6, 3, rng), gaussian(5, 3, rng), draw_precoder(3, k, 0, rng)));
    expected += frames.back().s_u;
  }
  MeanTracker t(6, 3);
  for (int i = 0; i < 10000; ++i) {
    const ChannelRealization chan = draw_channel(k_dev, 1.0, 4.0, rng);
    const ReceivedSignal rx = mac_superpose(frames, chan, inv, rng);
    t.add(ls_estimate(rx.y_u, policy_coeffs(inv, chan.h[0], chan.gamma).rho));
  }
  expect_within_3se(t, expected);
}

TEST(Unbiasedness, ClippedInversionGainMatchesClosedForm) {
  const double h_min = 0.2;
  const PowerPolicy inv{PowerPolicy::Kind::kChannelInversion, h_min};
  Rng rng(13);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Complex h = draw_channel(1, 1.0, 1.0, rng).h[0];
    const double g = (policy_coeffs(inv, h, 1.0).p * h).real();
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_LE(std::abs(mean - inversion_mean_gain(h_min)), 3 * se);
  EXPECT_EQ(inversion_mean_gain(0.0), 1.0);
  EXPECT_LT(inversion_mean_gain(h_min), 1.0);
}

TEST(Unbiasedness, PrecoderCrossTermsCancel) {
  Rng rng(14);
  const int k_dev = 3;
  const Index m = 6, n = 5, r = 3;
  std::vector<Matrix> ut, vt;
  Matrix expected = Matrix::Zero(m, n);
  for (int k = 0; k < k_dev; ++k) {
    ut.push_back(gaussian(m, r, rng));
    vt.push_back(gaussian(n, r, rng));
    expected += ut.back() * vt.back().transpose() / k_dev;
  }
  MeanTracker t(m, n);
  for (int i = 0; i < 10000; ++i) {
    Matrix xu = Matrix::Zero(m, r), xv = Matrix::Zero(r, n);
    for (int k = 0; k < k_dev; ++k) {
      const TransmitFrame f = precode(ut[k], vt[k], draw_precoder(r, k, i, rng));
      xu += f.s_u;
      xv += f.s_v;
    }
    t.add(xu * xv / k_dev);
  }
  expect_within_3se(t, expected);
}

TEST(Unbiasedness, EndToEndProductUnderInversion) {
  Rng rng(15);
  const int k_dev = 4;
  const Index m = 5, n = 4, r = 2;
  const PowerPolicy inv{PowerPolicy::Kind::kChannelInversion, 0.0};
  std::vector<Matrix> ut, vt;
  Matrix expected = Matrix::Zero(m, n);
  for (int k = 0; k < k_dev; ++k) {
    ut.push_back(gaussian(m, r, rng));
    vt.push_back(gaussian(n, r, rng));
    expected += ut.back() * vt.back().transpose();
  }
  MeanTracker t(m, n);
  for (int i = 0; i < 10000; ++i) {
    std::vector<TransmitFrame> frames;
    for (int k = 0; k < k_dev; ++k) frames.push_back(precode(ut[k], vt[k], draw_precoder(r, k, i, rng)));
    const ChannelRealization chan = draw_channel(k_dev, 1.0, 25.0, rng);
    const ReceivedSignal rx = mac_superpose(frames, chan, inv, rng);
    const double rho = policy_coeffs(inv, chan.h[0], chan.gamma).rho;
    t.add(ls_estimate(rx.y_u, rho) * ls_estimate(rx.y_v, rho));
  }
  expect_within_3se(t, expected);
}

TEST(Power, CalibrationHitsTarget) {
  Rng rng(16);
  const PowerPolicy inv{PowerPolicy::Kind::kChannelInversion, 0.2};
  const ChannelRealization chan = draw_channel(6, 1.0, 1.0, rng);
  std::vector<TransmitFrame> frames;
  std::vector<double> energy;
  for (int k = 0; k < 6; ++k) {
    frames.push_back(precode(gaussian(8, 2, rng), gaussian(7, 2, rng), draw_precoder(2, k, 0, rng),
                             gaussian(3, 1, rng).col(0)));
    energy.push_back(frames.back().energy());
  }
  const double target = 316.0;
  const double gamma = calibrate_gamma(inv, chan.h, energy, target);
  double mean_power = 0.0;
  for (int k = 0; k < 6; ++k) mean_power += transmit_power(policy_coeffs(inv, chan.h[k], gamma), frames[k]);
  EXPECT_NEAR(mean_power / 6, target, 1e-9 * target);
  EXPECT_EQ(calibrate_gamma(PowerPolicy{PowerPolicy::Kind::kErrorFree, 0.2}, chan.h, energy, target), 1.0);
}
