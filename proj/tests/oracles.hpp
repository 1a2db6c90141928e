#pragma once

// Independent reference computations used only by the tests. None of these
// share a code path with the library routines they check.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>

#include "dstune/generator.hpp"
#include "dstune/lti.hpp"
#include "dstune/sof.hpp"

namespace dstune::testing {

/// Random matrix with spectral abscissa forced to `abscissa`.
inline Matrix random_hurwitz(Rng& rng, Eigen::Index n, double abscissa) {
  Matrix m = rng.matrix(n, n, -1.0, 1.0);
  m.diagonal().array() += abscissa - spectral_abscissa(m);
  return m;
}

/// Random stable closed loop, poles with real part <= -0.5, no feedthrough
/// unless requested.
inline ClosedLoopSystem random_stable_system(Rng& rng, Eigen::Index n, Eigen::Index m1,
                                             Eigen::Index p1, bool feedthrough = false) {
  ClosedLoopSystem s;
  s.a_cl = random_hurwitz(rng, n, -rng.uniform(0.5, 1.5));
  s.b_cl = rng.matrix(n, m1, -1.0, 1.0);
  s.c_cl = rng.matrix(p1, n, -1.0, 1.0);
  s.d_cl = feedthrough ? rng.matrix(p1, m1, -0.5, 0.5) : Matrix::Zero(p1, m1);
  return s;
}

/// int_0^T ||C e^{At} B||_F^2 dt by composite Simpson on `intervals` (even)
/// sub-intervals, with e^{Ah} from Eigen's matrix exponential.
inline double impulse_energy(const ClosedLoopSystem& s, double horizon, int intervals) {
  const double h = horizon / intervals;
  const Matrix step = (s.a_cl * h).exp();
  Matrix state = s.b_cl;  // e^{A t} B
  double sum = 0.0;
  for (int k = 0; k <= intervals; ++k) {
    const double g = (s.c_cl * state).squaredNorm();
    const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    sum += w * g;
    state = step * state;
  }
  return sum * h / 3.0;
}

/// sigma_max(G(jw)) through an explicit complex inverse and the eigenvalues
/// of G^H G.
inline double gain_at(const ClosedLoopSystem& s, double w) {
  using cd = std::complex<double>;
  const auto n = s.a_cl.rows();
  Eigen::MatrixXcd res = Eigen::MatrixXcd::Identity(n, n) * cd(0.0, w) - s.a_cl.cast<cd>();
  const Eigen::MatrixXcd g = s.c_cl.cast<cd>() * res.inverse() * s.b_cl.cast<cd>() +
                             s.d_cl.cast<cd>();
  const Eigen::MatrixXcd gh = g.adjoint() * g;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gh);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

/// Peak gain: dense log sweep over [1e-4, 1e4] plus w = 0, then
/// golden-section refinement around the best grid point.
inline double peak_gain(const ClosedLoopSystem& s) {
  double best_w = 0.0, best = gain_at(s, 0.0);
  const int pts = 20000;
  for (int i = 0; i < pts; ++i) {
    const double w = std::pow(10.0, -4.0 + 8.0 * i / (pts - 1));
    const double g = gain_at(s, w);
    if (g > best) {
      best = g;
      best_w = w;
    }
  }
  if (best_w == 0.0) return best;
  double lo = best_w / 1.001, hi = best_w * 1.001;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100; ++it) {
    const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    if (gain_at(s, a) > gain_at(s, b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return std::max(best, gain_at(s, 0.5 * (lo + hi)));
}

/// Eigenvalues of a 2x2 real matrix from trace and determinant.
inline double abscissa_2x2(const Matrix& m) {
  const double tr = m(0, 0) + m(1, 1);
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double disc = tr * tr / 4.0 - det;
  if (disc < 0.0) return tr / 2.0;
  return tr / 2.0 + std::sqrt(disc);
}


struct GridMinimum {
  double k = 0.0;
  double value = std::numeric_limits<double>::infinity();
  double lo = 0.0, hi = 0.0;
  bool bracketed = false;  // minimizer strictly inside [lo, hi]
};

/// Adds a measurement-noise input of the given weight: one extra column of
/// B1 (zero) and D21 (weight). With D12 != 0 this puts K into the
/// feedthrough, so the H-inf norm grows without bound in |K| and the 1x1
/// minimizer is finite.
inline StateSpaceModel with_sensor_noise(StateSpaceModel m, double weight) {
  const auto n = m.states(), m1 = m.disturbances(), p = m.outputs(), p1 = m.performance_outputs();
  m.b1.conservativeResize(n, m1 + 1);
  m.b1.col(m1).setZero();
  m.d11.conservativeResize(p1, m1 + 1);
  m.d11.col(m1).setZero();
  m.d21.conservativeResize(p, m1 + 1);
  m.d21.col(m1).setConstant(weight);
  return m;
}

/// Exhaustive minimum of the closed-loop norm of a 1x1 gain over `pts` grid
/// points. The bracket starts at center +- radius and is widened until the
/// minimizer is off both ends. Norms come from the same routines the solver
/// uses, so this checks the search, not the norm.
inline GridMinimum grid_minimum_1x1(const SofProblem& problem, double center, double radius,
                                    int pts = 10000) {
  GridMinimum g;
  for (int widen = 0; widen < 6; ++widen, radius *= 2.0) {
    g = GridMinimum{};
    g.lo = center - radius;
    g.hi = center + radius;
    int best_i = -1;
    for (int i = 0; i < pts; ++i) {
      const double k = g.lo + (g.hi - g.lo) * i / (pts - 1);
      const Vector x{{k}};
      if (closed_loop_abscissa(problem.model, x) >= 0.0) continue;
      const ClosedLoopSystem cl = close_loop(problem.model, GainMatrix{Matrix::Constant(1, 1, k)});
      const double v = problem.kind == SofKind::H2 ? h2_norm(cl).value()
                                                   : hinf_norm(cl, problem.norm_tol).value();
      if (v < g.value) {
        g.value = v;
        g.k = k;
        best_i = i;
      }
    }
    if (best_i > 0 && best_i < pts - 1) {
      g.bracketed = true;
      return g;
    }
  }
  return g;
}

}  // namespace dstune::testing
