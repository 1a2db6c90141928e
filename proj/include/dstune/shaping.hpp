#pragma once

// Time-response shaping of a PID loop: f(x) = t_r + lambda * max_dev over
// x = (kp, ki, kd), measured on the unit-step response against a constant
// settling band [z_min, z_max].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dstune/lti.hpp"
#include "dstune/nelder_mead.hpp"

namespace dstune {

struct PidParams {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double derivative_filter_n = 100.0;

  void validate() const {
    if (!(derivative_filter_n > 0.0)) throw ArgumentError("derivative filter N must be > 0");
    if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd) ||
        !std::isfinite(derivative_filter_n))
      throw ArgumentError("PID parameters must be finite");
  }
};

struct Envelope {
  double z_min = 0.98;
  double z_max = 1.02;
  double horizon_t = 20.0;
  double lambda = 1.0;

  void validate() const {
    if (!(z_min < z_max)) throw ArgumentError("envelope needs z_min < z_max");
    if (!(horizon_t > 0.0)) throw ArgumentError("envelope horizon must be > 0");
    if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
  }
};

struct SimTrace {
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return times.size(); }
};

struct ShapingOutcome {
  double t_r = 0.0;
  double max_dev = 0.0;
  double f = 0.0;
  SimTrace trace;
};

/// Classic Ziegler-Nichols PID from ultimate gain and period.
inline PidParams zn_initial(double ku, double tu) {
  if (!(ku > 0.0) || !(tu > 0.0)) throw ArgumentError("Ziegler-Nichols needs ku > 0 and tu > 0");
  return {.kp = 0.6 * ku, .ki = 1.2 * ku / tu, .kd = 0.075 * ku * tu};
}

/// G(s) = 1 / (s + 1)^3 in controllable companion form.
inline StateSpaceModel default_plant() {
  Matrix a(3, 3);
  a << 0, 1, 0,  //
      0, 0, 1,   //
      -1, -3, -3;
  Matrix b(3, 1);
  b << 0, 0, 1;
  Matrix c(1, 3);
  c << 1, 0, 0;
  return make_model(std::move(a), std::move(b), std::move(c), "lag3");
}

namespace detail {

inline void require_siso_strictly_proper(const StateSpaceModel& plant) {
  if (plant.a.rows() < 1 || plant.a.cols() != plant.a.rows())
    throw ArgumentError("plant A must be square and non-empty");
  if (plant.b.cols() != 1 || plant.c.rows() != 1)
    throw ArgumentError("PID loop needs a SISO plant");
  if (plant.b.rows() != plant.a.rows() || plant.c.cols() != plant.a.rows())
    throw ArgumentError("plant B / C do not match A");
  // d22 is zero by construction of StateSpaceModel; nothing else to check.
}

}  // namespace detail

/// Unity feedback, e = r - y, with PID on the error:
///   u = kp e + ki xi + kd N (e - p),   xi' = e,   p' = N (e - p).
/// States are [plant; xi; p]; the b_cl channel is the step reference and the
/// output is the plant output.
inline ClosedLoopSystem build_pid_closed_loop(const StateSpaceModel& plant, const PidParams& pid) {
  detail::require_siso_strictly_proper(plant);
  pid.validate();
  const auto n = plant.a.rows();
  const double nf = pid.derivative_filter_n;
  const double ke = pid.kp + pid.kd * nf;  // gain on e
  const Matrix& a = plant.a;
  const Matrix& b = plant.b;
  const Matrix& c = plant.c;

  ClosedLoopSystem cl;
  cl.a_cl = Matrix::Zero(n + 2, n + 2);
  cl.a_cl.topLeftCorner(n, n) = a - ke * b * c;
  cl.a_cl.block(0, n, n, 1) = pid.ki * b;
  cl.a_cl.block(0, n + 1, n, 1) = -pid.kd * nf * b;
  cl.a_cl.block(n, 0, 1, n) = -c;
  cl.a_cl.block(n + 1, 0, 1, n) = -nf * c;
  cl.a_cl(n + 1, n + 1) = -nf;

  cl.b_cl = Matrix::Zero(n + 2, 1);
  cl.b_cl.topRows(n) = ke * b;
  cl.b_cl(n, 0) = 1.0;
  cl.b_cl(n + 1, 0) = nf;

  cl.c_cl = Matrix::Zero(1, n + 2);
  cl.c_cl.leftCols(n) = c;
  cl.d_cl = Matrix::Zero(1, 1);
  return cl;
}

inline constexpr double kDivergenceClamp = 1e12;

/// Unit-step response from rest by fixed-step classical RK4. For the LTI
/// system x' = A x + b, one RK4 step is exactly
///   x+ = Phi x + Gamma,  Phi = sum_{k<=4} (hA)^k / k!,
///   Gamma = h sum_{k<=3} (hA)^k / (k+1)! b,
/// so the step map is formed once. States and outputs are clamped to
/// +-1e12 to keep diverging loops finite.
inline SimTrace simulate_step(const ClosedLoopSystem& sys, double horizon_t, double h) {
  if (!(h > 0.0) || !(horizon_t >= 2.0 * h))
    throw ArgumentError("simulate_step needs h > 0 and horizon >= 2h");
  sys.validate();
  if (sys.b_cl.cols() != 1 || sys.c_cl.rows() != 1)
    throw ArgumentError("simulate_step needs a single reference input and output");

  const auto n = sys.a_cl.rows();
  const Matrix ha = h * sys.a_cl;
  Matrix phi = Matrix::Identity(n, n);
  Matrix gamma_series = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  double fact = 1.0;
  for (int k = 1; k <= 4; ++k) {
    term = term * ha;
    fact *= k;
    phi += term / fact;
    if (k <= 3) gamma_series += term / (fact * (k + 1));
  }
  const Vector gamma = h * gamma_series * sys.b_cl.col(0);
  const Eigen::RowVectorXd c = sys.c_cl.row(0);
  const double d = sys.d_cl(0, 0);

  const auto steps = static_cast<std::size_t>(std::floor(horizon_t / h + 1e-9));
  SimTrace tr;
  tr.times.resize(steps + 1);
  tr.values.resize(steps + 1);

  auto clamp = [](double v) {
    if (std::isnan(v)) return kDivergenceClamp;
    return std::clamp(v, -kDivergenceClamp, kDivergenceClamp);
  };

  Vector x = Vector::Zero(n);
  Vector next(n);
  for (std::size_t k = 0; k <= steps; ++k) {
    tr.times[k] = static_cast<double>(k) * h;
    tr.values[k] = clamp(c.dot(x) + d);
    if (k == steps) break;
    next.noalias() = phi * x;
    next += gamma;
    for (Eigen::Index i = 0; i < n; ++i) next(i) = clamp(next(i));
    x.swap(next);
  }
  return tr;
}

/// First sampled time inside [z_min, z_max]; horizon_t if never.
inline double rise_time(const SimTrace& trace, const Envelope& env) {
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const double z = trace.values[k];
    if (z >= env.z_min && z <= env.z_max) return trace.times[k];
  }
  return env.horizon_t;
}

/// Largest excursion outside the band: above z_max over t > 0, below z_min
/// only for t > t_r.
inline double max_deviation(const SimTrace& trace, const Envelope& env, double t_r) {
  double dev = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const double t = trace.times[k];
    const double z = trace.values[k];
    if (t > 0.0) dev = std::max(dev, z - env.z_max);
    if (t > t_r) dev = std::max(dev, env.z_min - z);
  }
  return dev;
}

inline double default_step(const Envelope& env) { return env.horizon_t / 5000.0; }

inline ShapingOutcome evaluate_shaping(const StateSpaceModel& plant, const Envelope& env,
                                       const PidParams& pid, double h) {
  ShapingOutcome out;
  out.trace = simulate_step(build_pid_closed_loop(plant, pid), env.horizon_t, h);
  out.t_r = rise_time(out.trace, env);
  out.max_dev = max_deviation(out.trace, env, out.t_r);
  out.f = env.lambda == 0.0 ? out.t_r : out.t_r + env.lambda * out.max_dev;
  return out;
}

inline PidParams pid_from_vec(const Vector& x, double filter_n) {
  if (x.size() != 3) throw DimensionError("PID search vector must have length 3");
  return {.kp = x(0), .ki = x(1), .kd = x(2), .derivative_filter_n = filter_n};
}

inline Vector pid_to_vec(const PidParams& p) { return Vector{{p.kp, p.ki, p.kd}}; }

/// Objective over x = (kp, ki, kd). Total on finite x: destabilizing gains
/// give large but finite values.
class ShapingObjective {
 public:
  ShapingObjective(StateSpaceModel plant, Envelope env, double filter_n = 100.0, double h = 0.0)
      : plant_(std::move(plant)), env_(env), filter_n_(filter_n),
        h_(h > 0.0 ? h : default_step(env)) {
    env_.validate();
    detail::require_siso_strictly_proper(plant_);
  }

  ObjectiveValue operator()(const Vector& x) const { return outcome(x).f; }

  ShapingOutcome outcome(const Vector& x) const {
    return evaluate_shaping(plant_, env_, pid_from_vec(x, filter_n_), h_);
  }

  const Envelope& envelope() const { return env_; }
  double step() const { return h_; }
  double filter_n() const { return filter_n_; }

 private:
  StateSpaceModel plant_;
  Envelope env_;
  double filter_n_;
  double h_;
};

struct ShapingFrame {
  std::int64_t eval_index;
  Vector x;
  double f;
  SimTrace trace;
};

struct ShapingResult {
  PidParams pid;
  ShapingOutcome outcome;
  double f_initial = 0.0;
  std::int64_t evals = 0;
  int restarts = 0;
  std::vector<ShapingFrame> frames;
};

inline constexpr std::size_t kMaxFrames = 500;

/// Indices of the improvements in a trace (strict decrease of the running
/// best), thinned evenly to at most max_frames, first and last kept.
inline std::vector<std::size_t> improvement_indices(const OptimizationTrace& trace,
                                                    std::size_t max_frames) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i == 0 || trace.best_so_far[i] < trace.best_so_far[i - 1]) idx.push_back(i);
  }
  if (idx.size() <= max_frames || max_frames < 2) return idx;
  std::vector<std::size_t> thin;
  thin.reserve(max_frames);
  const double stride = static_cast<double>(idx.size() - 1) / static_cast<double>(max_frames - 1);
  for (std::size_t k = 0; k < max_frames; ++k) {
    thin.push_back(idx[static_cast<std::size_t>(std::llround(static_cast<double>(k) * stride))]);
  }
  thin.erase(std::unique(thin.begin(), thin.end()), thin.end());
  return thin;
}

inline ShapingResult optimize_shaping(const StateSpaceModel& plant, const Envelope& env,
                                      const Vector& x0, const NmConfig& nm_cfg,
                                      const RestartConfig& rs_cfg, double filter_n = 100.0) {
  const ShapingObjective objective(plant, env, filter_n);
  auto run = restarted_nm(objective, x0, nm_cfg, rs_cfg);

  ShapingResult res;
  res.pid = pid_from_vec(run.best_point, filter_n);
  res.outcome = objective.outcome(run.best_point);
  res.f_initial = run.trace.records.front().value.value();
  res.evals = run.evals;
  res.restarts = run.restarts_used;
  for (std::size_t i : improvement_indices(run.trace, kMaxFrames)) {
    const auto& rec = run.trace.records[i];
    res.frames.push_back(
        {rec.eval_index, rec.point, rec.value.value(), objective.outcome(rec.point).trace});
  }
  return res;
}

/// Ultimate gain and period under proportional feedback, found by bisection
/// on the closed-loop spectral abscissa. Throws when the plant does not go
/// unstable for gains up to kp_max.
struct UltimatePoint {
  double ku;
  double tu;
};

inline UltimatePoint ultimate_gain(const StateSpaceModel& plant, double kp_max = 1e6) {
  detail::require_siso_strictly_proper(plant);
  auto abscissa = [&](double k) { return spectral_abscissa(plant.a - k * plant.b * plant.c); };
  if (abscissa(0.0) >= 0.0) throw InfeasibleError("plant is not open-loop stable");
  double lo = 0.0, hi = 1.0;
  while (abscissa(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > kp_max) throw InfeasibleError("no ultimate gain below kp_max");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (abscissa(mid) < 0.0 ? lo : hi) = mid;
  }
  double w = 0.0;
  for (const auto& l : eigenvalues(plant.a - hi * plant.b * plant.c)) {
    if (std::abs(l.real()) < 1e-4 * std::max(1.0, std::abs(l))) w = std::max(w, std::abs(l.imag()));
  }
  if (!(w > 0.0)) throw InfeasibleError("crossing at the ultimate gain is not oscillatory");
  return {hi, 2.0 * std::numbers::pi / w};
}

}  // namespace dstune
