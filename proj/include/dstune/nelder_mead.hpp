#pragma once

// Nelder-Mead simplex search and the restart-at-incumbent driver.
//
// Everything here is deterministic: no randomness, evaluation order fixed.
// Values are compared only through ObjectiveValue ordering, so WORST never
// enters any arithmetic.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dstune/error.hpp"
#include "dstune/objective_value.hpp"

namespace dstune {

using Point = Eigen::VectorXd;

struct NmConfig {
  double reflection = 1.0;   // alpha
  double expansion = 2.0;    // gamma
  double contraction = 0.5;  // beta
  double shrink = 0.5;       // delta
  std::int64_t max_evals = 0;  // <= 0 means 400 * n
  double tol_simplex_diameter = 1e-8;
  double tol_value_spread = 1e-10;

  void validate() const {
    if (!(reflection > 0.0)) throw ArgumentError("NM reflection must be > 0");
    if (!(expansion > 1.0 && expansion > reflection))
      throw ArgumentError("NM expansion must exceed max(1, reflection)");
    if (!(contraction > 0.0 && contraction < 1.0))
      throw ArgumentError("NM contraction must lie in (0, 1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ArgumentError("NM shrink must lie in (0, 1)");
    if (!(tol_simplex_diameter > 0.0 && tol_value_spread > 0.0))
      throw ArgumentError("NM tolerances must be > 0");
  }

  std::int64_t budget(Eigen::Index n) const {
    return max_evals > 0 ? max_evals : 400 * static_cast<std::int64_t>(n);
  }
};

struct RestartConfig {
  double restart_tol = 1e-6;  // minimum relative improvement to keep restarting
  int max_restarts = 20;      // total number of NM runs, including the first
  double initial_step = 0.1;

  void validate() const {
    if (!(restart_tol > 0.0)) throw ArgumentError("restart_tol must be > 0");
    if (max_restarts < 1) throw ArgumentError("max_restarts must be >= 1");
    if (!(initial_step > 0.0)) throw ArgumentError("initial_step must be > 0");
  }
};

/// Optional early termination: stop as soon as an evaluated value is
/// strictly below `stop_below`.
struct StopRule {
  std::optional<double> stop_below;

  bool satisfied_by(const ObjectiveValue& v) const {
    return stop_below && v.is_finite() && v.value() < *stop_below;
  }
};

enum class TracePhase { nm_step, restart_boundary };

struct TraceRecord {
  std::int64_t eval_index;
  Point point;
  ObjectiveValue value;
  TracePhase phase;
};

struct OptimizationTrace {
  std::vector<TraceRecord> records;
  std::vector<ObjectiveValue> best_so_far;

  std::size_t size() const { return records.size(); }

  void push(Point x, ObjectiveValue v, TracePhase phase) {
    const auto idx = static_cast<std::int64_t>(records.size());
    const ObjectiveValue best =
        best_so_far.empty() ? v : std::min(best_so_far.back(), v, [](auto& a, auto& b) {
          return a < b;
        });
    records.push_back({idx, std::move(x), v, phase});
    best_so_far.push_back(best);
  }
};

/// Raised when the objective throws; carries the point being evaluated. The
/// original exception is nested.
class ObjectiveError : public Error {
 public:
  ObjectiveError(const std::string& what, Point point)
      : Error(what), point_(std::move(point)) {}

  const Point& point() const noexcept { return point_; }

 private:
  Point point_;
};

struct Vertex {
  Point point;
  ObjectiveValue value;
  std::int64_t birth = 0;  // evaluation order, for tie-breaking
};

/// n + 1 vertices, kept sorted best-first. On equal values the older vertex
/// ranks first.
struct Simplex {
  std::vector<Vertex> vertices;

  Eigen::Index dimension() const {
    return vertices.empty() ? 0 : vertices.front().point.size();
  }
  const Vertex& best() const { return vertices.front(); }
  const Vertex& worst() const { return vertices.back(); }

  void sort() {
    std::stable_sort(vertices.begin(), vertices.end(), [](const Vertex& a, const Vertex& b) {
      if (a.value < b.value) return true;
      if (b.value < a.value) return false;
      return a.birth < b.birth;
    });
  }

  /// max_i ||x_i - x_best||_inf
  double diameter() const {
    double d = 0.0;
    for (const auto& v : vertices) {
      d = std::max(d, (v.point - best().point).cwiseAbs().maxCoeff());
    }
    return d;
  }

  /// f_worst - f_best, or nullopt when any vertex is WORST.
  std::optional<double> value_spread() const {
    for (const auto& v : vertices) {
      if (v.value.is_worst()) return std::nullopt;
    }
    return worst().value.value() - best().value.value();
  }
};

/// x0 plus n axis-perturbed points: h_i = step*|x0_i|, or step when x0_i ~ 0.
inline std::vector<Point> init_simplex(const Point& x0, double step) {
  if (x0.size() < 1) throw ArgumentError("init_simplex: empty starting point");
  if (!(step > 0.0)) throw ArgumentError("init_simplex: step must be > 0");
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(x0.size()) + 1);
  pts.push_back(x0);
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Point x = x0;
    const double mag = std::abs(x0(i));
    x(i) += mag > 1e-8 ? step * mag : step;
    pts.push_back(std::move(x));
  }
  return pts;
}

/// Counts evaluations and records them in a trace. Wraps objective errors.
template <typename F>
class Evaluator {
 public:
  Evaluator(F& f, OptimizationTrace& trace)
      : f_(f), trace_(trace), birth_offset_(static_cast<std::int64_t>(trace.size())) {}
  Evaluator(F& f, OptimizationTrace& trace, std::int64_t birth_offset)
      : f_(f), trace_(trace), birth_offset_(birth_offset) {}

  ObjectiveValue operator()(const Point& x, TracePhase phase = TracePhase::nm_step) {
    ObjectiveValue v;
    try {
      v = ObjectiveValue(f_(x));
    } catch (...) {
      std::ostringstream os;
      os << "objective failed at x = [" << x.transpose() << "]";
      std::throw_with_nested(ObjectiveError(os.str(), x));
    }
    trace_.push(x, v, phase);
    ++count_;
    return v;
  }

  Vertex vertex(const Point& x, TracePhase phase = TracePhase::nm_step) {
    const auto birth = birth_offset_ + count_;
    ObjectiveValue v = (*this)(x, phase);
    return {x, v, birth};
  }

  std::int64_t count() const { return count_; }

 private:
  F& f_;
  OptimizationTrace& trace_;
  std::int64_t birth_offset_;
  std::int64_t count_ = 0;
};

namespace detail {

template <typename F>
Simplex nm_iterate_impl(Simplex s, Evaluator<F>& eval, const NmConfig& cfg) {
  const auto n = s.dimension();
  const auto last = static_cast<std::size_t>(n);

  Point centroid = Point::Zero(n);
  for (std::size_t i = 0; i < last; ++i) centroid += s.vertices[i].point;
  centroid /= static_cast<double>(n);

  const Vertex& worst = s.vertices[last];
  const ObjectiveValue f_best = s.vertices.front().value;
  const ObjectiveValue f_second = s.vertices[last - 1].value;
  const Point dir = centroid - worst.point;

  Vertex refl = eval.vertex(centroid + cfg.reflection * dir);
  bool do_shrink = false;

  if (refl.value < f_best) {
    Vertex exp = eval.vertex(centroid + cfg.expansion * dir);
    s.vertices[last] = exp.value < refl.value ? std::move(exp) : std::move(refl);
  } else if (refl.value < f_second) {
    s.vertices[last] = std::move(refl);
  } else if (refl.value < worst.value) {
    Vertex outside = eval.vertex(centroid + cfg.contraction * (refl.point - centroid));
    if (!(refl.value < outside.value)) {
      s.vertices[last] = std::move(outside);
    } else {
      do_shrink = true;
    }
  } else {
    Vertex inside = eval.vertex(centroid + cfg.contraction * (worst.point - centroid));
    if (inside.value < worst.value) {
      s.vertices[last] = std::move(inside);
    } else {
      do_shrink = true;
    }
  }

  if (do_shrink) {
    const Point best = s.vertices.front().point;
    for (std::size_t i = 1; i <= last; ++i) {
      s.vertices[i] = eval.vertex(best + cfg.shrink * (s.vertices[i].point - best));
    }
  }
  s.sort();
  return s;
}

template <typename F>
Simplex evaluate_simplex(const Point& x0, double step, Evaluator<F>& eval, TracePhase first) {
  Simplex s;
  const auto pts = init_simplex(x0, step);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    s.vertices.push_back(eval.vertex(pts[i], i == 0 ? first : TracePhase::nm_step));
  }
  s.sort();
  return s;
}

inline void require_evaluated(const Simplex& s) {
  const auto n = s.dimension();
  if (n < 1) throw ArgumentError("simplex has no dimension");
  if (s.vertices.size() != static_cast<std::size_t>(n) + 1)
    throw DimensionError("simplex must have n + 1 vertices");
  for (const auto& v : s.vertices) {
    if (v.point.size() != n) throw DimensionError("simplex vertices differ in dimension");
  }
}

}  // namespace detail

/// One Nelder-Mead iteration (reflect / expand / contract / shrink). New
/// evaluations are appended to `trace`.
template <typename F>
Simplex nm_iterate(Simplex simplex, F&& f, const NmConfig& cfg, OptimizationTrace& trace) {
  cfg.validate();
  detail::require_evaluated(simplex);
  simplex.sort();
  // New vertices must be younger than every existing one.
  std::int64_t next_birth = static_cast<std::int64_t>(trace.size());
  for (const auto& v : simplex.vertices) next_birth = std::max(next_birth, v.birth + 1);
  Evaluator<std::remove_reference_t<F>> eval(f, trace, next_birth);
  return detail::nm_iterate_impl(std::move(simplex), eval, cfg);
}

template <typename F>
Simplex nm_iterate(Simplex simplex, F&& f, const NmConfig& cfg) {
  OptimizationTrace scratch;
  return nm_iterate(std::move(simplex), f, cfg, scratch);
}

struct NmResult {
  Point best_point;
  ObjectiveValue best_value;
  OptimizationTrace trace;
  std::int64_t evals = 0;
  bool converged = false;  // tolerance test met (vs. budget or stop rule)
  bool stopped_early = false;
};

namespace detail {

template <typename F>
NmResult nm_run_into(F& f, const Point& x0, const NmConfig& cfg, double step,
                     const StopRule& stop, OptimizationTrace& trace, TracePhase first) {
  Evaluator<F> eval(f, trace);
  const std::int64_t budget = cfg.budget(x0.size());
  Simplex s = evaluate_simplex(x0, step, eval, first);

  NmResult r;
  while (true) {
    if (stop.satisfied_by(s.best().value)) {
      r.stopped_early = true;
      break;
    }
    if (const auto spread = s.value_spread();
        spread && *spread <= cfg.tol_value_spread && s.diameter() <= cfg.tol_simplex_diameter) {
      r.converged = true;
      break;
    }
    if (eval.count() >= budget) break;
    s = nm_iterate_impl(std::move(s), eval, cfg);
  }
  r.best_point = s.best().point;
  r.best_value = s.best().value;
  r.evals = eval.count();
  return r;
}

}  // namespace detail

/// Iterates Nelder-Mead from the axis simplex at x0 until the simplex is
/// small in both diameter and value spread, or the evaluation budget is used.
/// The last iteration may overshoot the budget by at most n + 1 evaluations.
template <typename F>
NmResult nm_run(F&& f, const Point& x0, const NmConfig& cfg, double step,
                const StopRule& stop = {}) {
  if (x0.size() < 1) throw ArgumentError("nm_run: x0 has dimension 0");
  cfg.validate();
  NmResult r;
  auto res = detail::nm_run_into(f, x0, cfg, step, stop, r.trace, TracePhase::nm_step);
  res.trace = std::move(r.trace);
  return res;
}

struct RestartResult {
  Point best_point;
  ObjectiveValue best_value;
  OptimizationTrace trace;
  int restarts_used = 0;  // number of NM runs performed
  std::int64_t evals = 0;
  bool stopped_early = false;
};

/// Relative improvement test used between restarts. Any move from WORST to a
/// finite value counts as sufficient improvement.
inline bool improved_enough(const ObjectiveValue& prev, const ObjectiveValue& next,
                            double restart_tol) {
  if (prev.is_worst()) return next.is_finite();
  if (next.is_worst()) return false;
  const double p = prev.value();
  return (p - next.value()) / std::max(1.0, std::abs(p)) >= restart_tol;
}

/// Nelder-Mead restarted at the incumbent with a fresh simplex until a run no
/// longer improves by restart_tol (relative), or max_restarts runs are done.
/// The first evaluation of every run after the first is tagged
/// restart_boundary in the concatenated trace.
template <typename F>
RestartResult restarted_nm(F&& f, const Point& x0, const NmConfig& nm_cfg,
                           const RestartConfig& rs_cfg, const StopRule& stop = {}) {
  if (x0.size() < 1) throw ArgumentError("restarted_nm: x0 has dimension 0");
  nm_cfg.validate();
  rs_cfg.validate();

  RestartResult out;
  auto run = detail::nm_run_into(f, x0, nm_cfg, rs_cfg.initial_step, stop, out.trace,
                                 TracePhase::nm_step);
  out.best_point = run.best_point;
  out.best_value = run.best_value;
  out.evals = run.evals;
  out.restarts_used = 1;
  out.stopped_early = run.stopped_early;

  while (!out.stopped_early && out.restarts_used < rs_cfg.max_restarts) {
    run = detail::nm_run_into(f, out.best_point, nm_cfg, rs_cfg.initial_step, stop, out.trace,
                              TracePhase::restart_boundary);
    ++out.restarts_used;
    out.evals += run.evals;
    out.stopped_early = run.stopped_early;
    const ObjectiveValue prev = out.best_value;
    if (run.best_value < prev) {
      out.best_point = run.best_point;
      out.best_value = run.best_value;
    }
    if (!improved_enough(prev, run.best_value, rs_cfg.restart_tol)) break;
  }
  return out;
}

}  // namespace dstune
