// dstune: direct-search controller tuning from the command line.
//
//   dstune stabilize|h2|hinf --model plant.txt [--multistart 3] [--out runs.csv]
//   dstune shape [--plant builtin] [--zn auto | --x0 kp,ki,kd | --x0 random] [--frames dir]
//   dstune gen --count 10 --n 4 --m 2 --p 2 --seed 7 --out models/
//   dstune bench stabilize --count 200 --multistart 3 --out bench.csv
//
// Exit codes: 0 success, 1 infeasible / failed optimization, 2 usage or parse
// error, 3 numerical error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dstune/dstune.hpp"

namespace {

using namespace dstune;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct EngineOptions {
  std::uint64_t seed = 1;
  int multistart = 1;
  int restarts = 20;
  double tol = 1e-6;
  std::int64_t max_evals = 0;
  std::string out;
  int jobs = 1;
  double norm_tol = 1e-6;
  bool no_timing = false;

  void apply(BenchmarkConfig& cfg) const {
    cfg.seed = seed;
    cfg.multistart = multistart;
    cfg.rs.max_restarts = restarts;
    cfg.rs.restart_tol = tol;
    cfg.nm.max_evals = max_evals;
    cfg.jobs = jobs;
    cfg.norm_tol = norm_tol;
    cfg.record_timing = !no_timing;
  }
};

void add_engine_flags(CLI::App* cmd, EngineOptions& o, bool batch = true) {
  cmd->add_option("--seed", o.seed, "Seed for random starts (and the generator)");
  if (batch) {
    cmd->add_option("--multistart", o.multistart, "Starts per problem (first is x0 = 0 / ZN)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", o.jobs, "Problems solved concurrently")->check(CLI::PositiveNumber);
    cmd->add_option("--norm-tol", o.norm_tol, "Relative tolerance of the H-inf bisection")
        ->check(CLI::PositiveNumber);
  }
  cmd->add_option("--restarts", o.restarts, "Maximum Nelder-Mead runs per optimization")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tol", o.tol, "Relative improvement needed to keep restarting")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-evals", o.max_evals, "Evaluation budget per NM run (default 400 n)");
  cmd->add_option("--out", o.out, "Results CSV path");
  cmd->add_flag("--no-timing", o.no_timing, "Write wall_time_ms = 0 (byte-reproducible CSV)");
}

std::vector<double> parse_list(const std::string& text, std::size_t expected, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ArgumentError(std::string(flag) + ": not a number: '" + item + "'");
    }
  }
  if (out.size() != expected)
    throw ArgumentError(std::string(flag) + " expects " + std::to_string(expected) +
                        " comma-separated values");
  return out;
}

void write_or_print_csv(const std::string& path, const std::vector<RunRecord>& records) {
  const std::string csv = format_csv(records);
  if (path.empty() || path == "-") {
    std::cout << csv;
  } else {
    write_text_file(path, csv);
  }
}

void print_summary(const std::vector<RunRecord>& records) {
  const auto s = summarize(records);
  std::cout << "problems: " << s.problems << "  runs: " << s.runs
            << "  success rate: " << s.success_rate() * 100.0 << "%"
            << "  mean time: " << s.mean_time_ms << " ms"
            << "  median time: " << s.median_time_ms << " ms\n";
}

int cmd_sof(Task task, const std::string& model_path, const EngineOptions& opts) {
  BenchmarkConfig cfg;
  cfg.task = task;
  cfg.model_paths = {model_path};
  opts.apply(cfg);
  const auto problems = load_problems(cfg);
  const auto records = run_benchmark(cfg, problems);

  const RunRecord* best = nullptr;
  for (const auto& r : records) {
    if (r.status.rfind("error", 0) == 0 || r.status == "numerical_error") continue;
    if (!best || (r.stabilized && !best->stabilized) ||
        (r.stabilized == best->stabilized && r.f_final < best->f_final))
      best = &r;
  }
  if (!opts.out.empty()) write_or_print_csv(opts.out, records);
  if (!best) {
    std::cerr << "error: every start failed (" << records.front().status << ")\n";
    return records.front().status == "numerical_error" ? kExitNumerical : kExitFailed;
  }
  const auto& model = problems.front().model;
  const GainMatrix k = vec_to_gain(best->x_final, model.inputs(), model.outputs());
  const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, " ", "\n", "  ", "");
  std::cout << "model: " << model.name << "  task: " << to_string(task) << "\n"
            << "objective: " << format_objective(best->f_final)
            << "  (initial " << format_objective(best->f_initial) << ")\n"
            << "stabilized: " << (best->stabilized ? "yes" : "no")
            << "  evals: " << best->evals << "  restarts: " << best->restarts << "\n"
            << "K =\n"
            << k.k.format(fmt) << "\n";
  return best->stabilized ? kExitOk : kExitFailed;
}

struct ShapeOptions {
  std::string plant = "builtin";
  std::string zn;
  std::string x0;
  double lambda = 1.0;
  double horizon = 20.0;
  double zmin = 0.98;
  double zmax = 1.02;
  double filter_n = 100.0;
  std::string frames;
};

int cmd_shape(const ShapeOptions& so, const EngineOptions& eo) {
  const StateSpaceModel plant = so.plant == "builtin" ? default_plant() : load_model(so.plant);
  const Envelope env{.z_min = so.zmin, .z_max = so.zmax, .horizon_t = so.horizon, .lambda = so.lambda};
  env.validate();

  Vector x0;
  StartKind kind = StartKind::zn;
  std::uint64_t seed = 0;
  if (!so.x0.empty()) {
    if (so.x0 == "random") {
      kind = StartKind::random;
      seed = eo.seed;
      x0 = random_pid_start(plant, eo.seed, /*require_unstable=*/true, so.filter_n);
    } else {
      kind = StartKind::file;
      const auto v = parse_list(so.x0, 3, "--x0");
      x0 = Vector{{v[0], v[1], v[2]}};
    }
  } else if (so.zn.empty() || so.zn == "auto") {
    const auto up = ultimate_gain(plant);
    x0 = pid_to_vec(zn_initial(up.ku, up.tu));
  } else {
    const auto v = parse_list(so.zn, 2, "--zn");
    x0 = pid_to_vec(zn_initial(v[0], v[1]));
  }

  NmConfig nm;
  nm.max_evals = eo.max_evals;
  RestartConfig rs;
  rs.max_restarts = eo.restarts;
  rs.restart_tol = eo.tol;

  const auto t0 = std::chrono::steady_clock::now();
  const auto res = optimize_shaping(plant, env, x0, nm, rs, so.filter_n);
  const auto dt = std::chrono::steady_clock::now() - t0;

  std::cout << "plant: " << (plant.name.empty() ? so.plant : plant.name) << "  start: "
            << to_string(kind) << "\n"
            << "x0 = (" << x0(0) << ", " << x0(1) << ", " << x0(2) << ")\n"
            << "f initial: " << format_double(res.f_initial) << "\n"
            << "f final:   " << format_double(res.outcome.f) << "  (t_r = "
            << format_double(res.outcome.t_r) << ", max_dev = "
            << format_double(res.outcome.max_dev) << ")\n"
            << "kp = " << format_double(res.pid.kp) << "  ki = " << format_double(res.pid.ki)
            << "  kd = " << format_double(res.pid.kd) << "\n"
            << "evals: " << res.evals << "  restarts: " << res.restarts
            << "  frames: " << res.frames.size() << "\n";

  if (!so.frames.empty()) export_frames(res.frames, so.frames, env);

  const bool reached = res.outcome.t_r < env.horizon_t;
  if (!eo.out.empty()) {
    RunRecord rec;
    rec.problem_id = plant.name.empty() ? "plant" : plant.name;
    rec.task = Task::shape;
    rec.x0_kind = kind;
    rec.seed = seed;
    rec.f_initial = res.f_initial;
    rec.f_final = res.outcome.f;
    rec.stabilized = spectral_abscissa(build_pid_closed_loop(plant, res.pid).a_cl) < 0.0;
    rec.evals = res.evals;
    rec.restarts = res.restarts;
    rec.wall_time_ms = eo.no_timing ? 0.0 : std::chrono::duration<double, std::milli>(dt).count();
    rec.status = reached ? "ok" : "failed";
    write_or_print_csv(eo.out, {rec});
  }
  return reached ? kExitOk : kExitFailed;
}

int cmd_gen(const GeneratorSpec& spec, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (int i = 0; i < spec.count; ++i) {
    const auto inst = generated_instance(spec, i);
    std::ostringstream text;
    text << "# synthetic SOF instance " << i << " of seed " << spec.seed
         << "\n# stabilizing certificate K0 (row-major):";
    for (Eigen::Index r = 0; r < inst.certificate.k.rows(); ++r)
      for (Eigen::Index c = 0; c < inst.certificate.k.cols(); ++c)
        text << ' ' << format_double(inst.certificate.k(r, c));
    text << "\n" << serialize_model(inst.model);
    const auto path =
        (std::filesystem::path(out_dir) / (inst.model.name + ".txt")).string();
    write_text_file(path, text.str());
    std::cout << path << "\n";
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Direct-search (restarted Nelder-Mead) controller tuning"};
  app.require_subcommand(1);

  EngineOptions sof_opts;
  std::string model_path;
  std::vector<std::pair<Task, CLI::App*>> sof_cmds;
  for (Task t : {Task::stabilize, Task::h2, Task::hinf}) {
    const char* help = t == Task::stabilize ? "Find a stabilizing static output feedback gain"
                       : t == Task::h2      ? "Minimize the closed-loop H2 norm over K"
                                            : "Minimize the closed-loop H-infinity norm over K";
    auto* cmd = app.add_subcommand(std::string(to_string(t)), help);
    cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
    add_engine_flags(cmd, sof_opts);
    sof_cmds.emplace_back(t, cmd);
  }

  ShapeOptions shape_opts;
  EngineOptions shape_engine;
  auto* shape = app.add_subcommand("shape", "PID step-response shaping: min t_r + lambda max_dev");
  add_engine_flags(shape, shape_engine, /*batch=*/false);
  shape->add_option("--plant", shape_opts.plant, "Plant model file or 'builtin' (1/(s+1)^3)");
  auto* zn = shape->add_option("--zn", shape_opts.zn, "Ziegler-Nichols start: 'ku,tu' or 'auto'");
  shape->add_option("--x0", shape_opts.x0, "Start 'kp,ki,kd' or 'random' (non-stabilizing)")
      ->excludes(zn);
  shape->add_option("--lambda", shape_opts.lambda, "Trade-off weight on max deviation");
  shape->add_option("--horizon", shape_opts.horizon, "Simulation horizon [s]");
  shape->add_option("--zmin", shape_opts.zmin, "Lower edge of the settling band");
  shape->add_option("--zmax", shape_opts.zmax, "Upper edge of the settling band");
  shape->add_option("--filter-n", shape_opts.filter_n, "Derivative filter coefficient N");
  shape->add_option("--frames", shape_opts.frames, "Directory for per-iteration response frames");

  GeneratorSpec gen_spec;
  std::string gen_out = ".";
  auto* gen = app.add_subcommand("gen", "Write synthetic unstable-but-stabilizable SOF models");
  gen->add_option("--count", gen_spec.count, "Number of instances")->check(CLI::PositiveNumber);
  gen->add_option("--n", gen_spec.n, "Max states")->check(CLI::PositiveNumber);
  gen->add_option("--m", gen_spec.m, "Max inputs")->check(CLI::PositiveNumber);
  gen->add_option("--p", gen_spec.p, "Max outputs")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_spec.seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory");

  EngineOptions bench_opts;
  std::string bench_task;
  std::vector<std::string> bench_models;
  std::optional<int> bench_count;
  GeneratorSpec bench_gen;
  auto* bench = app.add_subcommand("bench", "Batch benchmark over model files or generated instances");
  bench->add_option("task", bench_task, "stabilize | h2 | hinf | shape")
      ->required()
      ->check(CLI::IsMember({"stabilize", "h2", "hinf", "shape"}));
  bench->add_option("--model", bench_models, "Model file(s)");
  bench->add_option("--count", bench_count, "Generate this many instances")->check(CLI::PositiveNumber);
  bench->add_option("--n", bench_gen.n, "Max states of generated instances")->check(CLI::PositiveNumber);
  bench->add_option("--m", bench_gen.m, "Max inputs of generated instances")->check(CLI::PositiveNumber);
  bench->add_option("--p", bench_gen.p, "Max outputs of generated instances")->check(CLI::PositiveNumber);
  add_engine_flags(bench, bench_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  for (auto& [task, cmd] : sof_cmds) {
    if (cmd->parsed()) return cmd_sof(task, model_path, sof_opts);
  }
  if (shape->parsed()) return cmd_shape(shape_opts, shape_engine);
  if (gen->parsed()) return cmd_gen(gen_spec, gen_out);
  if (bench->parsed()) {
    BenchmarkConfig cfg;
    cfg.task = *parse_task(bench_task);
    cfg.model_paths = bench_models;
    bench_opts.apply(cfg);
    if (bench_count) {
      bench_gen.count = *bench_count;
      bench_gen.seed = bench_opts.seed;
      cfg.generator = bench_gen;
    }
    const auto problems = load_problems(cfg);
    const auto records = run_benchmark(cfg, problems);
    write_or_print_csv(bench_opts.out, records);
    if (!bench_opts.out.empty()) print_summary(records);
    return kExitOk;
  }
  return kExitUsage;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const InfeasibleError*>(&e)) return kExitFailed;
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    return exit_code_for(inner);
  }
  if (dynamic_cast<const ObjectiveError*>(&e)) return kExitNumerical;
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
