#pragma once

// Dense continuous-time LTI machinery: state-space models, spectra,
// Lyapunov solves and closed-loop H2 / H-infinity norms.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dstune/error.hpp"
#include "dstune/objective_value.hpp"

namespace dstune {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Plant with control channel (B, C) and performance channel (B1, C1, D**).
///
///   x' = A x + B1 w + B u
///   z  = C1 x + D11 w + D12 u
///   y  = C x + D21 w            (D22 = 0)
struct StateSpaceModel {
  Matrix a, b1, b, c1, c, d11, d12, d21;
  std::string name;

  Eigen::Index states() const { return a.rows(); }
  Eigen::Index inputs() const { return b.cols(); }
  Eigen::Index outputs() const { return c.rows(); }
  Eigen::Index disturbances() const { return b1.cols(); }
  Eigen::Index performance_outputs() const { return c1.rows(); }

  /// Throws DimensionError / ArgumentError on inconsistent or non-finite data.
  void validate() const;
};

/// Model with only (A, B, C); the performance channel is a zero 1x1 channel.
inline StateSpaceModel make_model(Matrix a, Matrix b, Matrix c, std::string name = {}) {
  StateSpaceModel m;
  const auto n = a.rows();
  m.b1 = Matrix::Zero(n, 1);
  m.c1 = Matrix::Zero(1, n);
  m.d11 = Matrix::Zero(1, 1);
  m.d12 = Matrix::Zero(1, b.cols());
  m.d21 = Matrix::Zero(c.rows(), 1);
  m.a = std::move(a);
  m.b = std::move(b);
  m.c = std::move(c);
  m.name = std::move(name);
  return m;
}

struct ClosedLoopSystem {
  Matrix a_cl, b_cl, c_cl, d_cl;

  void validate() const;
};

/// Static output feedback gain u = K y, K in R^{m x p}.
struct GainMatrix {
  Matrix k;
};

namespace detail {

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                          const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ArgumentError(std::string(what) + " has non-finite entries");
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + " is not square (" + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()) + ")");
  }
}

}  // namespace detail

inline void StateSpaceModel::validate() const {
  using detail::require_shape;
  const auto n = a.rows(), m = b.cols(), p = c.rows(), m1 = b1.cols(), p1 = c1.rows();
  if (n < 1 || m < 1 || p < 1) throw DimensionError("model needs n, m, p >= 1");
  require_shape(a, n, n, "A");
  require_shape(b, n, m, "B");
  require_shape(c, p, n, "C");
  require_shape(b1, n, m1, "B1");
  require_shape(c1, p1, n, "C1");
  require_shape(d11, p1, m1, "D11");
  require_shape(d12, p1, m, "D12");
  require_shape(d21, p, m1, "D21");
  for (auto [mat, nm] : {std::pair{&a, "A"}, {&b, "B"}, {&c, "C"}, {&b1, "B1"}, {&c1, "C1"},
                         {&d11, "D11"}, {&d12, "D12"}, {&d21, "D21"}}) {
    detail::require_finite(*mat, nm);
  }
}

inline void ClosedLoopSystem::validate() const {
  using detail::require_shape;
  const auto n = a_cl.rows();
  require_shape(a_cl, n, n, "A_cl");
  require_shape(b_cl, n, b_cl.cols(), "B_cl");
  require_shape(c_cl, c_cl.rows(), n, "C_cl");
  require_shape(d_cl, c_cl.rows(), b_cl.cols(), "D_cl");
}

/// All eigenvalues with multiplicity. Conjugate pairs come out exactly
/// conjugate (real Schur form).
inline std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
  detail::require_square(m, "eigenvalue input");
  detail::require_finite(m, "eigenvalue input");
  if (m.rows() == 0) return {};
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigenvalue iteration did not converge for " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matrix");
  }
  const auto& ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

/// max Re(lambda). Negative iff m is Hurwitz.
inline double spectral_abscissa(const Matrix& m) {
  const auto ev = eigenvalues(m);
  if (ev.empty()) throw DimensionError("spectral abscissa of an empty matrix");
  double best = ev.front().real();
  for (const auto& l : ev) best = std::max(best, l.real());
  return best;
}

inline ClosedLoopSystem close_loop(const StateSpaceModel& model, const GainMatrix& k) {
  detail::require_shape(k.k, model.inputs(), model.outputs(), "gain K");
  const Matrix bk = model.b * k.k;
  const Matrix d12k = model.d12 * k.k;
  return ClosedLoopSystem{
      .a_cl = model.a + bk * model.c,
      .b_cl = model.b1 + bk * model.d21,
      .c_cl = model.c1 + d12k * model.c,
      .d_cl = model.d11 + d12k * model.d21,
  };
}

/// Solves A^T P + P A + Q = 0 for Hurwitz A via the Kronecker form
/// (I (x) A^T + A^T (x) I) vec(P) = -vec(Q). Dense n^2 x n^2, fine for n <~ 30.
inline Matrix lyapunov_solve(const Matrix& a, const Matrix& q) {
  detail::require_square(a, "Lyapunov A");
  detail::require_shape(q, a.rows(), a.rows(), "Lyapunov Q");
  detail::require_finite(q, "Lyapunov Q");
  if (spectral_abscissa(a) >= 0.0) throw InfeasibleError("Lyapunov solve: A is not Hurwitz");

  const auto n = a.rows();
  const Matrix at = a.transpose();
  Matrix kron = Matrix::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    // column block j of vec(P) is P(:, j)
    kron.block(j * n, j * n, n, n) += at;
    for (Eigen::Index i = 0; i < n; ++i) {
      kron.block(i * n, j * n, n, n).diagonal().array() += at(i, j);
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(q.data(), n * n);
  Eigen::PartialPivLU<Matrix> lu(kron);
  if (!(lu.rcond() > 1e-15)) throw NumericalError("Lyapunov system is numerically singular");
  const Vector vp = lu.solve(rhs);
  Matrix p = Eigen::Map<const Matrix>(vp.data(), n, n);
  return 0.5 * (p + p.transpose());
}

namespace detail {

inline bool has_feedthrough(const ClosedLoopSystem& sys) {
  return sys.d_cl.size() > 0 && sys.d_cl.cwiseAbs().maxCoeff() > 1e-12;
}

inline double max_singular_value(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double max_singular_value(const ComplexMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace detail

/// H2 norm via the observability Gramian. WORST when the norm is unbounded
/// (unstable loop or nonzero feedthrough).
inline ObjectiveValue h2_norm(const ClosedLoopSystem& sys) {
  sys.validate();
  if (spectral_abscissa(sys.a_cl) >= 0.0 || detail::has_feedthrough(sys)) {
    return ObjectiveValue::worst();
  }
  const Matrix p = lyapunov_solve(sys.a_cl, sys.c_cl.transpose() * sys.c_cl);
  const double tr = (sys.b_cl.transpose() * p * sys.b_cl).trace();
  return std::sqrt(std::max(tr, 0.0));
}

/// Diagnostics for frequency_sweep_max; when not supplied, skipped points
/// are reported on std::clog.
struct SweepDiagnostics {
  std::vector<double> skipped;
};

/// sigma_max(G(jw)) with G(s) = C (sI - A)^{-1} B + D. Returns false when the
/// resolvent is singular at w.
inline bool frequency_response_gain(const ClosedLoopSystem& sys, double w, double& gain) {
  using cd = std::complex<double>;
  ComplexMatrix res = -sys.a_cl.cast<cd>();
  res.diagonal().array() += cd(0.0, w);
  Eigen::PartialPivLU<ComplexMatrix> lu(res);
  if (!(lu.rcond() > 1e-14)) return false;
  const ComplexMatrix x = lu.solve(sys.b_cl.cast<cd>());
  const ComplexMatrix g = sys.c_cl.cast<cd>() * x + sys.d_cl.cast<cd>();
  gain = detail::max_singular_value(g);
  return true;
}

/// Max over the grid of sigma_max(G(jw)); a lower bound on the H-inf norm.
inline double frequency_sweep_max(const ClosedLoopSystem& sys, std::span<const double> grid,
                                  SweepDiagnostics* diag = nullptr) {
  sys.validate();
  double best = 0.0;
  bool any = false;
  for (double w : grid) {
    double g = 0.0;
    if (!frequency_response_gain(sys, w, g)) {
      if (diag) {
        diag->skipped.push_back(w);
      } else {
        std::clog << "warning: singular resolvent at w = " << w << ", point skipped\n";
      }
      continue;
    }
    any = true;
    best = std::max(best, g);
  }
  if (!any) throw NumericalError("frequency sweep: no usable grid point");
  return best;
}

/// count points log-spaced over [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  std::vector<double> g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return g;
}

namespace detail {

// True when gamma <= ||G||_inf, read off the Hamiltonian for level gamma.
// Eigenvalues within tolerance of the imaginary axis are only candidates:
// their frequencies and the midpoints between neighbours (where sigma_max
// sits above gamma between two crossings) are checked by evaluating G
// directly, so round-off in a badly scaled H cannot fake a crossing.
// Requires gamma > sigma_max(D).
inline bool hamiltonian_touches_axis(const ClosedLoopSystem& sys, double gamma) {
  const auto n = sys.a_cl.rows();
  const auto p1 = sys.c_cl.rows();
  const Matrix& a = sys.a_cl;
  const Matrix& b = sys.b_cl;
  const Matrix& c = sys.c_cl;
  const Matrix& d = sys.d_cl;

  Matrix r = -d.transpose() * d;
  r.diagonal().array() += gamma * gamma;
  Eigen::LDLT<Matrix> r_fact(r);
  const Matrix r_inv_dt_c = r_fact.solve(d.transpose() * c);
  const Matrix r_inv_bt = r_fact.solve(b.transpose());

  const Matrix a_h = a + b * r_inv_dt_c;
  const Matrix q = Matrix::Identity(p1, p1) + d * r_fact.solve(d.transpose());

  Matrix h(2 * n, 2 * n);
  h.topLeftCorner(n, n) = a_h;
  h.topRightCorner(n, n) = b * r_inv_bt;
  h.bottomLeftCorner(n, n) = -c.transpose() * q * c;
  h.bottomRightCorner(n, n) = -a_h.transpose();

  // 1e-7 relative to |lambda|, plus a round-off floor scaled by ||H||.
  const double floor = 100.0 * std::numeric_limits<double>::epsilon() * h.norm();
  std::vector<double> freqs;
  for (const auto& l : eigenvalues(h)) {
    if (std::abs(l.real()) <= 1e-7 * std::max(1.0, std::abs(l)) + floor) freqs.push_back(l.imag());
  }
  if (freqs.empty()) return false;
  std::sort(freqs.begin(), freqs.end());
  std::vector<double> probes{0.0};
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    probes.push_back(std::abs(freqs[i]));
    if (i + 1 < freqs.size()) probes.push_back(std::abs(0.5 * (freqs[i] + freqs[i + 1])));
  }
  for (double w : probes) {
    double g = 0.0;
    if (frequency_response_gain(sys, w, g) && g >= gamma) return true;
  }
  return false;
}

}  // namespace detail

/// H-infinity norm by bisection on gamma with the Hamiltonian imaginary-axis
/// test. Result is an upper bracket within relative tolerance `tol`.
inline ObjectiveValue hinf_norm(const ClosedLoopSystem& sys, double tol) {
  if (!(tol > 0.0)) throw ArgumentError("hinf_norm: tol must be > 0");
  sys.validate();
  if (spectral_abscissa(sys.a_cl) >= 0.0) return ObjectiveValue::worst();

  const double sigma_d = detail::max_singular_value(sys.d_cl);
  if (sys.c_cl.isZero(0.0) || sys.b_cl.isZero(0.0)) return sigma_d;

  // Coarse sweep including the frequencies of the poles.
  std::vector<double> grid = log_grid(1e-3, 1e3, 60);
  grid.push_back(0.0);
  for (const auto& l : eigenvalues(sys.a_cl)) grid.push_back(std::abs(l.imag()));
  SweepDiagnostics diag;
  const double sweep = frequency_sweep_max(sys, grid, &diag);

  double lo = std::max(sigma_d, sweep);
  double hi = 2.0 * std::max(lo, 1e-300);
  for (int expand = 0; detail::hamiltonian_touches_axis(sys, hi); ++expand) {
    if (expand >= 200) throw NumericalError("hinf_norm: could not find a valid upper bracket");
    lo = hi;
    hi *= 2.0;
  }
  if (lo <= sigma_d) lo = sigma_d + tol * std::max(sigma_d, 1e-300);

  for (int step = 0; step < 80; ++step) {
    if (hi - lo <= tol * hi) return hi;
    const double mid = 0.5 * (lo + hi);
    if (detail::hamiltonian_touches_axis(sys, mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  if (hi - lo <= tol * hi) return hi;
  throw NumericalError("hinf_norm: bisection did not close after 80 steps");
}

}  // namespace dstune
