#pragma once

// Batch runner: problems x starts, timed, one CSV row per run.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dstune/generator.hpp"
#include "dstune/model_io.hpp"
#include "dstune/shaping.hpp"
#include "dstune/sof.hpp"

namespace dstune {

enum class Task { stabilize, h2, hinf, shape };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::stabilize: return "stabilize";
    case Task::h2: return "h2";
    case Task::hinf: return "hinf";
    case Task::shape: return "shape";
  }
  return "?";
}

inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "stabilize") return Task::stabilize;
  if (s == "h2") return Task::h2;
  if (s == "hinf") return Task::hinf;
  if (s == "shape") return Task::shape;
  return std::nullopt;
}

inline SofKind sof_kind(Task t) {
  switch (t) {
    case Task::h2: return SofKind::H2;
    case Task::hinf: return SofKind::Hinf;
    default: return SofKind::Stabilize;
  }
}

enum class StartKind { zero, random, zn, file };

inline std::string_view to_string(StartKind k) {
  switch (k) {
    case StartKind::zero: return "zero";
    case StartKind::random: return "random";
    case StartKind::zn: return "zn";
    case StartKind::file: return "file";
  }
  return "?";
}

/// Instance generator settings; dimensions are upper bounds, each instance
/// draws n in [1, n], m in [1, m], p in [1, p].
struct GeneratorSpec {
  int count = 1;
  int n = 6;
  int m = 2;
  int p = 2;
  std::uint64_t seed = 1;
};

struct BenchmarkConfig {
  Task task = Task::stabilize;
  std::vector<std::string> model_paths;
  std::optional<GeneratorSpec> generator;
  NmConfig nm;
  RestartConfig rs;
  int multistart = 1;
  std::uint64_t seed = 1;  // seeds the random starts
  int jobs = 1;
  bool record_timing = true;
  double norm_tol = 1e-6;
  // shape task
  Envelope envelope;
  double filter_n = 100.0;

  void validate() const {
    if (multistart < 1) throw ArgumentError("multistart must be >= 1");
    if (jobs < 1) throw ArgumentError("jobs must be >= 1");
    if (generator && generator->count < 1) throw ArgumentError("generator count must be >= 1");
    nm.validate();
    rs.validate();
    if (task == Task::shape) envelope.validate();
  }
};

struct RunRecord {
  std::string problem_id;
  Task task = Task::stabilize;
  StartKind x0_kind = StartKind::zero;
  std::uint64_t seed = 0;
  ObjectiveValue f_initial = ObjectiveValue::worst();
  ObjectiveValue f_final = ObjectiveValue::worst();
  bool stabilized = false;
  std::int64_t evals = 0;
  int restarts = 0;
  double wall_time_ms = 0.0;
  std::string status;
  std::size_t problem_index = 0;
  int start_index = 0;
  Vector x_final;  // SOF: vec(K); shape: (kp, ki, kd)
};

struct BenchProblem {
  std::string id;
  StateSpaceModel model;
};

inline std::string generated_id(int index) {
  std::ostringstream id;
  id << "gen_" << std::setw(4) << std::setfill('0') << index;
  return id.str();
}

/// Instance `index` of the generator stream; independent of spec.count.
inline SofInstance generated_instance(const GeneratorSpec& spec, int index) {
  const std::uint64_t s = mix_seed(spec.seed, static_cast<std::uint64_t>(index));
  Rng dims(s);
  const int n = 1 + static_cast<int>(dims.unit() * spec.n);
  const int m = 1 + static_cast<int>(dims.unit() * spec.m);
  const int p = 1 + static_cast<int>(dims.unit() * spec.p);
  auto inst = random_sof_instance(mix_seed(s, 1), n, m, p);
  inst.model.name = generated_id(index);
  return inst;
}

inline std::vector<BenchProblem> generate_problems(const GeneratorSpec& spec) {
  std::vector<BenchProblem> out;
  for (int i = 0; i < spec.count; ++i) {
    auto inst = generated_instance(spec, i);
    out.push_back({inst.model.name, std::move(inst.model)});
  }
  return out;
}

/// Random PID start: uniform in [0, 10]^3, optionally redrawn until the loop
/// is unstable.
inline Vector random_pid_start(const StateSpaceModel& plant, std::uint64_t seed,
                               bool require_unstable, double filter_n = 100.0) {
  Rng rng(seed);
  for (int i = 0; i < 1000; ++i) {
    Vector x{{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)}};
    if (!require_unstable) return x;
    const auto cl = build_pid_closed_loop(plant, pid_from_vec(x, filter_n));
    if (spectral_abscissa(cl.a_cl) >= 0.0) return x;
  }
  throw InfeasibleError("no destabilizing PID start found in 1000 draws");
}

inline std::uint64_t start_seed(std::uint64_t master, std::size_t problem, int start) {
  return mix_seed(mix_seed(master, problem), static_cast<std::uint64_t>(start));
}

namespace detail {

inline std::string error_status(std::exception_ptr ep) {
  // Report the innermost cause of nested objective errors.
  std::string status = "error";
  try {
    std::rethrow_exception(ep);
  } catch (const std::nested_exception& nested) {
    try {
      nested.rethrow_nested();
    } catch (const NumericalError&) {
      status = "numerical_error";
    } catch (...) {
    }
  } catch (const NumericalError&) {
    status = "numerical_error";
  } catch (...) {
  }
  return status;
}

inline RunRecord run_one(const BenchmarkConfig& cfg, const BenchProblem& prob,
                         std::size_t problem_index, int start_index) {
  RunRecord rec;
  rec.problem_id = prob.id;
  rec.task = cfg.task;
  rec.problem_index = problem_index;
  rec.start_index = start_index;
  const std::uint64_t seed = start_seed(cfg.seed, problem_index, start_index);

  try {
    if (cfg.task == Task::shape) {
      Vector x0;
      if (start_index == 0) {
        const auto up = ultimate_gain(prob.model);
        rec.x0_kind = StartKind::zn;
        x0 = pid_to_vec(zn_initial(up.ku, up.tu));
      } else {
        rec.x0_kind = StartKind::random;
        rec.seed = seed;
        x0 = random_pid_start(prob.model, seed, /*require_unstable=*/false, cfg.filter_n);
      }
      const auto t0 = std::chrono::steady_clock::now();
      auto res = optimize_shaping(prob.model, cfg.envelope, x0, cfg.nm, cfg.rs, cfg.filter_n);
      const auto dt = std::chrono::steady_clock::now() - t0;
      rec.f_initial = res.f_initial;
      rec.f_final = res.outcome.f;
      rec.evals = res.evals;
      rec.restarts = res.restarts;
      rec.x_final = pid_to_vec(res.pid);
      rec.stabilized =
          spectral_abscissa(build_pid_closed_loop(prob.model, res.pid).a_cl) < 0.0;
      rec.status = res.outcome.t_r < cfg.envelope.horizon_t ? "ok" : "failed";
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(dt).count();
    } else {
      const auto mp = prob.model.inputs() * prob.model.outputs();
      Vector x0 = Vector::Zero(mp);
      if (start_index > 0) {
        rec.x0_kind = StartKind::random;
        rec.seed = seed;
        Rng rng(seed);
        for (Eigen::Index i = 0; i < mp; ++i) x0(i) = rng.uniform(-1.0, 1.0);
      }
      SofProblem sp{prob.model, sof_kind(cfg.task), cfg.norm_tol};
      auto res = solve_sof(sp, x0, cfg.nm, cfg.rs);
      rec.f_initial = res.initial_objective;
      rec.f_final = res.objective;
      rec.stabilized = res.stabilized;
      rec.evals = res.evals;
      rec.restarts = res.restarts;
      rec.x_final = gain_to_vec(res.k);
      rec.status = res.stabilized ? "ok" : "failed";
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(res.wall_time).count();
    }
  } catch (...) {
    rec.status = error_status(std::current_exception());
  }
  if (!cfg.record_timing) rec.wall_time_ms = 0.0;
  return rec;
}

}  // namespace detail

/// Runs every (problem, start) pair on up to cfg.jobs threads. The result is
/// ordered by (problem index, start index) whatever the parallelism.
inline std::vector<RunRecord> run_benchmark(const BenchmarkConfig& cfg,
                                            const std::vector<BenchProblem>& problems) {
  cfg.validate();
  const std::size_t starts = static_cast<std::size_t>(cfg.multistart);
  const std::size_t total = problems.size() * starts;
  std::vector<RunRecord> records(total);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      records[i] = detail::run_one(cfg, problems[i / starts], i / starts,
                                   static_cast<int>(i % starts));
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), std::max<std::size_t>(total, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return records;
}

/// Problems from model files, from the generator, or (shape task only) the
/// default plant when neither is given.
inline std::vector<BenchProblem> load_problems(const BenchmarkConfig& cfg) {
  std::vector<BenchProblem> problems;
  for (const auto& path : cfg.model_paths) {
    auto model = load_model(path);
    model.validate();
    problems.push_back({model.name, std::move(model)});
  }
  if (cfg.generator) {
    auto gen = generate_problems(*cfg.generator);
    problems.insert(problems.end(), std::make_move_iterator(gen.begin()),
                    std::make_move_iterator(gen.end()));
  }
  if (problems.empty() && cfg.task == Task::shape) {
    problems.push_back({"lag3", default_plant()});
  }
  return problems;
}

inline constexpr std::string_view kCsvHeader =
    "problem_id,task,x0_kind,seed,f_initial,f_final,stabilized,evals,restarts,wall_time_ms,status";

inline std::string format_objective(const ObjectiveValue& v) {
  return v.is_worst() ? "inf" : format_double(v.value());
}

struct BenchSummary {
  std::size_t problems = 0;
  std::size_t runs = 0;
  std::size_t problems_solved = 0;  // any start ok
  std::size_t runs_ok = 0;
  double mean_time_ms = 0.0;
  double median_time_ms = 0.0;

  double success_rate() const {
    return problems ? static_cast<double>(problems_solved) / static_cast<double>(problems) : 0.0;
  }
};

inline BenchSummary summarize(const std::vector<RunRecord>& records) {
  BenchSummary s;
  s.runs = records.size();
  std::vector<double> times;
  std::size_t current = static_cast<std::size_t>(-1);
  bool solved = false;
  for (const auto& r : records) {
    if (r.problem_index != current) {
      if (current != static_cast<std::size_t>(-1) && solved) ++s.problems_solved;
      current = r.problem_index;
      solved = false;
      ++s.problems;
    }
    if (r.status == "ok") {
      solved = true;
      ++s.runs_ok;
    }
    times.push_back(r.wall_time_ms);
  }
  if (solved) ++s.problems_solved;
  if (!times.empty()) {
    double sum = 0.0;
    for (double t : times) sum += t;
    s.mean_time_ms = sum / static_cast<double>(times.size());
    std::sort(times.begin(), times.end());
    const auto mid = times.size() / 2;
    s.median_time_ms = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  }
  return s;
}

/// CSV text: header, one row per record, then '#'-prefixed summary lines
/// (omitted when there are no records).
inline std::string format_csv(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : records) {
    os << r.problem_id << ',' << to_string(r.task) << ',' << to_string(r.x0_kind) << ','
       << r.seed << ',' << format_objective(r.f_initial) << ',' << format_objective(r.f_final)
       << ',' << (r.stabilized ? "true" : "false") << ',' << r.evals << ',' << r.restarts << ','
       << format_double(r.wall_time_ms) << ',' << r.status << "\n";
  }
  if (!records.empty()) {
    const auto s = summarize(records);
    os << "# problems=" << s.problems << " runs=" << s.runs
       << " success_rate=" << format_double(s.success_rate())
       << " run_success_rate="
       << format_double(static_cast<double>(s.runs_ok) / static_cast<double>(s.runs)) << "\n";
    os << "# mean_time_ms=" << format_double(s.mean_time_ms)
       << " median_time_ms=" << format_double(s.median_time_ms) << "\n";
  }
  return os.str();
}

}  // namespace dstune
