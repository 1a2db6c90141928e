#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dstune/lti.hpp"
#include "oracles.hpp"

using namespace dstune;
using dstune::testing::random_hurwitz;
using dstune::testing::random_stable_system;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

ClosedLoopSystem first_order(double gain) {
  return {mat({{-1.0}}), mat({{1.0}}), mat({{gain}}), mat({{0.0}})};
}

std::vector<double> sorted_real_parts(const std::vector<std::complex<double>>& ev) {
  std::vector<double> r;
  for (const auto& l : ev) r.push_back(l.real());
  std::sort(r.begin(), r.end());
  return r;
}

}  // namespace

TEST(Eigenvalues, Diagonal) {
  const auto ev = eigenvalues(mat({{-1, 0}, {0, -2}}));
  ASSERT_EQ(ev.size(), 2u);
  const auto re = sorted_real_parts(ev);
  EXPECT_NEAR(re[0], -2.0, 1e-14);
  EXPECT_NEAR(re[1], -1.0, 1e-14);
  for (const auto& l : ev) EXPECT_EQ(l.imag(), 0.0);
}

TEST(Eigenvalues, RotationGenerator) {
  const auto ev = eigenvalues(mat({{0, 1}, {-1, 0}}));
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_NEAR(ev[0].real(), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(ev[0].imag()), 1.0, 1e-14);
  EXPECT_EQ(ev[0], std::conj(ev[1]));
}

TEST(Eigenvalues, CompanionOfFactoredPolynomial) {
  // s^2 + 3s + 2 = (s + 1)(s + 2)
  const auto re = sorted_real_parts(eigenvalues(mat({{0, 1}, {-2, -3}})));
  EXPECT_NEAR(re[0], -2.0, 1e-12);
  EXPECT_NEAR(re[1], -1.0, 1e-12);
}

TEST(Eigenvalues, Errors) {
  EXPECT_THROW(eigenvalues(Matrix::Zero(2, 3)), DimensionError);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(eigenvalues(bad), ArgumentError);
}

TEST(Eigenvalues, ConjugatePairsOnRandomMatrices) {
  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    const Matrix m = rng.matrix(6, 6, -1.0, 1.0);
    const auto ev = eigenvalues(m);
    for (const auto& l : ev) {
      if (l.imag() == 0.0) continue;
      const bool paired = std::any_of(ev.begin(), ev.end(), [&](const auto& o) {
        return std::abs(o - std::conj(l)) <= 1e-9 * m.norm();
      });
      EXPECT_TRUE(paired);
    }
  }
}

TEST(SpectralAbscissa, Examples) {
  EXPECT_DOUBLE_EQ(spectral_abscissa(mat({{-1, 0}, {0, -2}})), -1.0);
  // roots of s^2 + s - 2 are 1 and -2
  EXPECT_NEAR(spectral_abscissa(mat({{0, 1}, {2, -1}})), 1.0, 1e-12);
}

TEST(SpectralAbscissa, ShiftProperty) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto n = 1 + static_cast<Eigen::Index>(rng.unit() * 6);
    const Matrix a = rng.matrix(n, n, -2.0, 2.0);
    const double c = rng.uniform(-3.0, 3.0);
    Matrix shifted = a;
    shifted.diagonal().array() += c;
    EXPECT_NEAR(spectral_abscissa(shifted), spectral_abscissa(a) + c, 1e-9);
  }
}

TEST(SpectralAbscissa, BlockDiagonal) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Matrix a1 = rng.matrix(3, 3, -1.0, 1.0);
    const Matrix a2 = rng.matrix(2, 2, -1.0, 1.0);
    Matrix blk = Matrix::Zero(5, 5);
    blk.topLeftCorner(3, 3) = a1;
    blk.bottomRightCorner(2, 2) = a2;
    EXPECT_NEAR(spectral_abscissa(blk), std::max(spectral_abscissa(a1), spectral_abscissa(a2)),
                1e-12);
  }
}

TEST(CloseLoop, ZeroGainKeepsOpenLoopChannels) {
  Rng rng(5);
  StateSpaceModel m;
  m.a = rng.matrix(3, 3, -1, 1);
  m.b = rng.matrix(3, 2, -1, 1);
  m.c = rng.matrix(2, 3, -1, 1);
  m.b1 = rng.matrix(3, 1, -1, 1);
  m.c1 = rng.matrix(2, 3, -1, 1);
  m.d11 = rng.matrix(2, 1, -1, 1);
  m.d12 = rng.matrix(2, 2, -1, 1);
  m.d21 = rng.matrix(2, 1, -1, 1);
  const auto cl = close_loop(m, GainMatrix{Matrix::Zero(2, 2)});
  EXPECT_EQ(cl.a_cl, m.a);
  EXPECT_EQ(cl.b_cl, m.b1);
  EXPECT_EQ(cl.c_cl, m.c1);
  EXPECT_EQ(cl.d_cl, m.d11);
}

TEST(CloseLoop, ScalarModel) {
  const auto m = make_model(mat({{0}}), mat({{1}}), mat({{1}}));
  EXPECT_DOUBLE_EQ(close_loop(m, GainMatrix{mat({{-2}})}).a_cl(0, 0), -2.0);
}

TEST(CloseLoop, TwoStateHandExpansion) {
  StateSpaceModel m;
  m.a = mat({{1, 2}, {3, 4}});
  m.b = mat({{1}, {2}});
  m.c = mat({{3, 1}});
  m.b1 = mat({{0.5}, {-1}});
  m.c1 = mat({{1, -1}});
  m.d11 = mat({{0.25}});
  m.d12 = mat({{2}});
  m.d21 = mat({{3}});
  const double k = -0.5;
  const auto cl = close_loop(m, GainMatrix{mat({{k}})});
  // a_cl = A + B k C
  EXPECT_DOUBLE_EQ(cl.a_cl(0, 0), 1 + 1 * k * 3);
  EXPECT_DOUBLE_EQ(cl.a_cl(0, 1), 2 + 1 * k * 1);
  EXPECT_DOUBLE_EQ(cl.a_cl(1, 0), 3 + 2 * k * 3);
  EXPECT_DOUBLE_EQ(cl.a_cl(1, 1), 4 + 2 * k * 1);
  // b_cl = B1 + B k D21
  EXPECT_DOUBLE_EQ(cl.b_cl(0, 0), 0.5 + 1 * k * 3);
  EXPECT_DOUBLE_EQ(cl.b_cl(1, 0), -1 + 2 * k * 3);
  // c_cl = C1 + D12 k C
  EXPECT_DOUBLE_EQ(cl.c_cl(0, 0), 1 + 2 * k * 3);
  EXPECT_DOUBLE_EQ(cl.c_cl(0, 1), -1 + 2 * k * 1);
  // d_cl = D11 + D12 k D21
  EXPECT_DOUBLE_EQ(cl.d_cl(0, 0), 0.25 + 2 * k * 3);
}

TEST(CloseLoop, ShapeMismatch) {
  const auto m = make_model(mat({{0}}), mat({{1}}), mat({{1}}));
  EXPECT_THROW(close_loop(m, GainMatrix{Matrix::Zero(2, 1)}), DimensionError);
}

TEST(Lyapunov, ScalarAndZero) {
  EXPECT_DOUBLE_EQ(lyapunov_solve(mat({{-1}}), mat({{1}}))(0, 0), 0.5);
  Rng rng(6);
  const Matrix a = random_hurwitz(rng, 4, -0.3);
  EXPECT_TRUE(lyapunov_solve(a, Matrix::Zero(4, 4)).isZero(0.0));
}

TEST(Lyapunov, ResidualSymmetryAndPsd) {
  Rng rng(7);
  for (int t = 0; t < 40; ++t) {
    const auto n = 1 + static_cast<Eigen::Index>(rng.unit() * 8);
    const Matrix a = random_hurwitz(rng, n, -rng.uniform(0.05, 1.0));
    const Matrix f = rng.matrix(n, n, -1, 1);
    const Matrix q = f * f.transpose();
    const Matrix p = lyapunov_solve(a, q);
    const double res = (a.transpose() * p + p * a + q).norm();
    EXPECT_LE(res, 1e-8 * (a.norm() * p.norm() + q.norm()));
    EXPECT_TRUE(p == p.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(p).eigenvalues().minCoeff(),
              -1e-10 * p.norm());
  }
}

TEST(Lyapunov, RejectsNonHurwitz) {
  EXPECT_THROW(lyapunov_solve(mat({{1}}), mat({{1}})), InfeasibleError);
  EXPECT_THROW(lyapunov_solve(mat({{0, 1}, {-1, 0}}), Matrix::Identity(2, 2)), InfeasibleError);
}

TEST(H2Norm, FirstOrderMatchesImpulseEnergy) {
  const auto s = first_order(1.0);
  const double h2 = h2_norm(s).value();
  EXPECT_NEAR(h2, 1.0 / std::sqrt(2.0), 1e-12);
  // int_0^inf e^{-2t} dt = 1/2
  EXPECT_NEAR(h2 * h2, dstune::testing::impulse_energy(s, 40.0, 40000), 1e-9);
}

TEST(H2Norm, ZeroOutputAndUnstable) {
  auto s = first_order(0.0);
  EXPECT_EQ(h2_norm(s), ObjectiveValue(0.0));
  s = first_order(1.0);
  s.a_cl(0, 0) = 1.0;
  EXPECT_TRUE(h2_norm(s).is_worst());
  s = first_order(1.0);
  s.d_cl(0, 0) = 1e-6;
  EXPECT_TRUE(h2_norm(s).is_worst());
  s.d_cl(0, 0) = 1e-13;
  EXPECT_FALSE(h2_norm(s).is_worst());
}

TEST(H2Norm, GramianDuality) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const auto n = 1 + static_cast<Eigen::Index>(rng.unit() * 6);
    const auto s = random_stable_system(rng, n, 2, 3);
    const double obs = h2_norm(s).value();
    // controllability Gramian: A W + W A^T + B B^T = 0
    const Matrix w = lyapunov_solve(s.a_cl.transpose(), s.b_cl * s.b_cl.transpose());
    const double ctrb = std::sqrt((s.c_cl * w * s.c_cl.transpose()).trace());
    EXPECT_NEAR(obs, ctrb, 1e-6 * ctrb);
  }
}

TEST(H2Norm, RandomSystemsMatchImpulseEnergy) {
  Rng rng(9);
  for (int t = 0; t < 5; ++t) {
    const auto s = random_stable_system(rng, 4, 2, 2);
    const double h2 = h2_norm(s).value();
    // poles at Re <= -0.5: tail beyond t = 60 is ~e^{-60}
    EXPECT_NEAR(h2 * h2, dstune::testing::impulse_energy(s, 60.0, 60000), 1e-6 * h2 * h2);
  }
}

TEST(FrequencySweep, Examples) {
  const auto s = first_order(1.0);
  const std::vector<double> dc{0.0};
  EXPECT_DOUBLE_EQ(frequency_sweep_max(s, dc), 1.0);
  const std::vector<double> two{0.0, 1.0};
  EXPECT_DOUBLE_EQ(frequency_sweep_max(s, two), 1.0);
  const std::vector<double> one{1.0};
  EXPECT_NEAR(frequency_sweep_max(s, one), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(FrequencySweep, SkipsSingularPoints) {
  // poles at +-j: w = 1 hits the resolvent singularity
  const ClosedLoopSystem s{mat({{0, 1}, {-1, 0}}), mat({{0}, {1}}), mat({{1, 0}}), mat({{0}})};
  SweepDiagnostics diag;
  const std::vector<double> grid{0.0, 1.0};
  EXPECT_NEAR(frequency_sweep_max(s, grid, &diag), 1.0, 1e-14);
  ASSERT_EQ(diag.skipped.size(), 1u);
  EXPECT_EQ(diag.skipped[0], 1.0);
  const std::vector<double> only{1.0};
  EXPECT_THROW(frequency_sweep_max(s, only, &diag), NumericalError);
}

TEST(HinfNorm, FirstOrderExamples) {
  EXPECT_NEAR(hinf_norm(first_order(1.0), 1e-7).value(), 1.0, 1e-6);
  EXPECT_NEAR(hinf_norm(first_order(5.0), 1e-7).value(), 5.0, 5e-6);
  EXPECT_EQ(hinf_norm(first_order(0.0), 1e-7), ObjectiveValue(0.0));
  auto s = first_order(1.0);
  s.a_cl(0, 0) = 0.5;
  EXPECT_TRUE(hinf_norm(s, 1e-6).is_worst());
  EXPECT_THROW(hinf_norm(first_order(1.0), 0.0), ArgumentError);
}

TEST(HinfNorm, ResonantPeak) {
  // w_n = 1, zeta = 0.1: peak 1 / (2 zeta sqrt(1 - zeta^2))
  const double zeta = 0.1;
  const ClosedLoopSystem s{mat({{0, 1}, {-1, -2 * zeta}}), mat({{0}, {1}}), mat({{1, 0}}),
                           mat({{0}})};
  const double expected = 1.0 / (2 * zeta * std::sqrt(1 - zeta * zeta));
  EXPECT_NEAR(hinf_norm(s, 1e-8).value(), expected, 1e-6 * expected);
}

TEST(HinfNorm, WithFeedthrough) {
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const auto s = random_stable_system(rng, 3, 2, 2, /*feedthrough=*/true);
    const double ref = dstune::testing::peak_gain(s);
    EXPECT_NEAR(hinf_norm(s, 1e-7).value(), ref, 1e-5 * ref);
  }
}

TEST(HinfNorm, SandwichedBySweep) {
  Rng rng(12);
  const auto grid = log_grid(1e-3, 1e3, 400);
  const double tol = 1e-6;
  for (int t = 0; t < 50; ++t) {
    const auto n = 1 + static_cast<Eigen::Index>(rng.unit() * 6);
    const auto s = random_stable_system(rng, n, 2, 2);
    const double sweep = frequency_sweep_max(s, grid);
    const double hinf = hinf_norm(s, tol).value();
    EXPECT_LE(sweep, hinf);
    EXPECT_LE(hinf, sweep * 1.001) << "system " << t;
  }
}

TEST(HinfNorm, MatchesRefinedPeakOracle) {
  Rng rng(13);
  for (int t = 0; t < 8; ++t) {
    const auto s = random_stable_system(rng, 1 + t % 5, 1 + t % 2, 2);
    const double ref = dstune::testing::peak_gain(s);
    EXPECT_NEAR(hinf_norm(s, 1e-7).value(), ref, 2e-6 * ref);
  }
}
