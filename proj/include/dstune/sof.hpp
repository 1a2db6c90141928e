#pragma once

// Static output feedback problems over x = vec(K) (row-major): closed-loop
// stabilization and H2 / H-infinity minimization under the stability
// constraint, solved by restarted Nelder-Mead.

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

#include "dstune/lti.hpp"
#include "dstune/nelder_mead.hpp"

namespace dstune {

enum class SofKind { Stabilize, H2, Hinf };

inline std::string_view to_string(SofKind k) {
  switch (k) {
    case SofKind::Stabilize: return "stabilize";
    case SofKind::H2: return "h2";
    case SofKind::Hinf: return "hinf";
  }
  return "?";
}

struct SofProblem {
  StateSpaceModel model;
  SofKind kind = SofKind::Stabilize;
  double norm_tol = 1e-6;  // bisection tolerance, Hinf only
  double stab_margin = 1e-3;

  void validate() const {
    model.validate();
    if (kind == SofKind::Hinf && !(norm_tol > 0.0)) throw ArgumentError("norm_tol must be > 0");
    if (!(stab_margin >= 0.0)) throw ArgumentError("stab_margin must be >= 0");
  }
};

struct SofResult {
  GainMatrix k;
  ObjectiveValue objective = ObjectiveValue::worst();
  bool stabilized = false;
  double phase1_abscissa = 0.0;
  std::int64_t evals = 0;
  int restarts = 0;
  std::chrono::nanoseconds wall_time{0};
  // objective at the phase-2 starting gain (Stabilize: at x0)
  ObjectiveValue initial_objective = ObjectiveValue::worst();
  OptimizationTrace trace;  // last phase
};

inline Vector gain_to_vec(const GainMatrix& k) {
  Vector x(k.k.size());
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < k.k.rows(); ++r)
    for (Eigen::Index c = 0; c < k.k.cols(); ++c) x(i++) = k.k(r, c);
  return x;
}

inline GainMatrix vec_to_gain(const Vector& x, Eigen::Index m, Eigen::Index p) {
  if (m < 1 || p < 1 || x.size() != m * p) {
    throw DimensionError("gain vector of length " + std::to_string(x.size()) +
                         " does not match " + std::to_string(m) + "x" + std::to_string(p));
  }
  GainMatrix k{Matrix(m, p)};
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < p; ++c) k.k(r, c) = x(i++);
  return k;
}

inline double closed_loop_abscissa(const StateSpaceModel& model, const Vector& x) {
  const GainMatrix k = vec_to_gain(x, model.inputs(), model.outputs());
  return spectral_abscissa(model.a + model.b * k.k * model.c);
}

/// x -> spectral abscissa of A + B K C. Always finite.
inline auto stabilization_objective(const StateSpaceModel& model) {
  return [&model](const Vector& x) -> ObjectiveValue { return closed_loop_abscissa(model, x); };
}

/// x -> closed-loop H2 or H-inf norm, WORST when the loop is unstable.
inline auto norm_objective(const SofProblem& problem) {
  if (problem.kind == SofKind::Stabilize) {
    throw ArgumentError("norm_objective needs an H2 or Hinf problem");
  }
  return [&problem](const Vector& x) -> ObjectiveValue {
    const auto& m = problem.model;
    const ClosedLoopSystem cl = close_loop(m, vec_to_gain(x, m.inputs(), m.outputs()));
    if (spectral_abscissa(cl.a_cl) >= 0.0) return ObjectiveValue::worst();
    return problem.kind == SofKind::H2 ? h2_norm(cl) : hinf_norm(cl, problem.norm_tol);
  };
}

/// Stabilize: restarted NM on the abscissa, stopping once it is below
/// -stab_margin. H2/Hinf: the same stabilization phase, then restarted NM on
/// the norm starting from the stabilizing gain.
inline SofResult solve_sof(const SofProblem& problem, const Vector& x0, const NmConfig& nm_cfg,
                           const RestartConfig& rs_cfg) {
  problem.validate();
  const auto& model = problem.model;
  const auto m = model.inputs(), p = model.outputs();
  if (x0.size() != m * p) throw DimensionError("x0 length does not match m*p");

  const auto t0 = std::chrono::steady_clock::now();
  SofResult res;

  auto stab = stabilization_objective(model);
  const StopRule stop{-problem.stab_margin};
  auto phase1 = restarted_nm(stab, x0, nm_cfg, rs_cfg, stop);
  res.phase1_abscissa = phase1.best_value.value();
  res.evals = phase1.evals;
  res.restarts = phase1.restarts_used;
  res.k = vec_to_gain(phase1.best_point, m, p);

  const bool feasible = phase1.best_value.value() < 0.0;
  if (problem.kind == SofKind::Stabilize) {
    res.objective = phase1.best_value;
    res.initial_objective = phase1.trace.records.front().value;
    res.trace = std::move(phase1.trace);
  } else if (!feasible) {
    res.objective = ObjectiveValue::worst();
    res.initial_objective = ObjectiveValue::worst();
    res.trace = std::move(phase1.trace);
  } else {
    auto norm = norm_objective(problem);
    auto phase2 = restarted_nm(norm, phase1.best_point, nm_cfg, rs_cfg);
    res.initial_objective = phase2.trace.records.front().value;
    res.objective = phase2.best_value;
    res.k = vec_to_gain(phase2.best_point, m, p);
    res.evals += phase2.evals;
    res.restarts += phase2.restarts_used;
    res.trace = std::move(phase2.trace);
  }

  res.stabilized = closed_loop_abscissa(model, gain_to_vec(res.k)) < 0.0;
  res.wall_time = std::chrono::steady_clock::now() - t0;
  return res;
}

}  // namespace dstune
