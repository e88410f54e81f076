// Command-line front end: plan, bench, gradcheck, tune, render.

#include <narrowplan/cli/bench.hpp>
#include <narrowplan/cli/output.hpp>
#include <narrowplan/cli/scene_file.hpp>
#include <narrowplan/narrowplan.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace narrowplan;
using namespace narrowplan::cli;

namespace {

struct Common {
  std::string scene;
  std::optional<double> delta;
  std::optional<double> gamma;
  bool deterministic = false;
};

IsagoConfig make_config(const Common& c) {
  IsagoConfig cfg;
  if (c.delta) cfg.stoma.delta = *c.delta;
  if (c.gamma) cfg.stoma.gamma = *c.gamma;
  if (c.deterministic) cfg.max_wall_time = std::numeric_limits<double>::infinity();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--scene", c.scene, "scene file (YAML)")->required()->check(CLI::ExistingFile);
  app->add_option("--delta", c.delta, "STOMA trust-region size")->check(CLI::PositiveNumber);
  app->add_option("--gamma", c.gamma, "STOMA moment decay")->check(CLI::Range(0.0, 1.0));
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

Trajectory read_trajectory_csv(const std::string& path, int dof, double dt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<Vec> cols;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != static_cast<std::size_t>(2 + 2 * dof)) throw std::runtime_error("bad trajectory row in " + path);
    cols.push_back(Eigen::Map<const Vec>(v.data() + 2, 2 * dof));
  }
  Mat m(2 * dof, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = cols[i];
  return Trajectory(m, dt);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  if (out.empty()) throw CLI::ValidationError("empty list: " + s);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory optimization for planar arms in narrow passages"};
  app.require_subcommand(1);

  Common plan_c;
  std::string plan_task, plan_mode = "isago", plan_out = ".";
  std::uint64_t plan_seed = 0;
  bool plan_svg = false;
  auto* plan_cmd = app.add_subcommand("plan", "plan one task; exit 0 on success, 2 on planning failure");
  add_common(plan_cmd, plan_c);
  plan_cmd->add_option("--task", plan_task, "task id")->required();
  plan_cmd->add_option("--mode", plan_mode, "isago | sago | agd-only | stoma-only");
  plan_cmd->add_option("--seed", plan_seed, "run seed");
  plan_cmd->add_option("--out", plan_out, "output directory");
  plan_cmd->add_flag("--svg", plan_svg, "also render an SVG");
  plan_cmd->add_flag("--deterministic", plan_c.deterministic, "disable the wall-clock timeout");

  Common bench_c;
  std::vector<std::string> bench_modes, bench_tasks;
  int bench_repeats = 0;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "run every task under each mode with seeded repeats");
  add_common(bench_cmd, bench_c);
  bench_cmd->add_option("--mode", bench_modes, "modes to run (repeatable; default all four)");
  bench_cmd->add_option("--task", bench_tasks, "restrict to these task ids (repeatable)");
  bench_cmd->add_option("--repeats", bench_repeats, "repeats per task (default: from the scene file)");
  bench_cmd->add_option("--seed", bench_seed, "base seed");
  bench_cmd->add_option("--out", bench_out, "CSV path (default stdout)");
  bench_cmd->add_flag("--deterministic", bench_c.deterministic, "write times as 0 and disable timeouts");

  Common grad_c;
  int grad_trials = 20;
  std::uint64_t grad_seed = 0;
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(grad_cmd, grad_c);
  grad_cmd->add_option("--trials", grad_trials, "number of random trajectories")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_seed, "seed");

  Common tune_c;
  std::string tune_deltas = "0.8,0.4,0.08,0.04", tune_gammas = "0.5,0.9,0.99", tune_out;
  int tune_repeats = 0;
  std::uint64_t tune_seed = 0;
  auto* tune_cmd = app.add_subcommand("tune", "success rate and time over a (delta, gamma) grid");
  tune_cmd->add_option("--scene", tune_c.scene, "scene file (YAML)")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--delta", tune_deltas, "comma-separated delta values");
  tune_cmd->add_option("--gamma", tune_gammas, "comma-separated gamma values");
  tune_cmd->add_option("--repeats", tune_repeats, "repeats per task (default: from the scene file)");
  tune_cmd->add_option("--seed", tune_seed, "base seed");
  tune_cmd->add_option("--out", tune_out, "CSV path (default stdout)");
  tune_cmd->add_flag("--deterministic", tune_c.deterministic, "write times as 0 and disable timeouts");

  std::string render_scene, render_task, render_traj, render_out = "scene.svg";
  auto* render_cmd = app.add_subcommand("render", "draw a task (and optionally a planned trajectory) as SVG");
  render_cmd->add_option("--scene", render_scene, "scene file (YAML)")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--task", render_task, "task id")->required();
  render_cmd->add_option("--trajectory", render_traj, "trajectory CSV written by plan")->check(CLI::ExistingFile);
  render_cmd->add_option("--out", render_out, "SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*plan_cmd) {
      const SceneFile file = load_scene(plan_c.scene);
      const TaskSpec& task = file.task(plan_task);
      const PlanMode mode = parse_mode(plan_mode);
      const PlanProblem problem = file.problem(task);
      const PlanResult res = plan(problem, make_config(plan_c), plan_seed, mode);
      const fs::path dir(plan_out);
      const std::string stem = task.id + "_" + to_string(mode) + "_" + std::to_string(plan_seed);
      {
        auto out = open_out(dir / (stem + "_result.txt"));
        write_result(out, task.id, mode, plan_seed, res);
      }
      {
        auto out = open_out(dir / (stem + "_trajectory.csv"));
        write_trajectory_csv(out, res.trajectory);
      }
      if (plan_svg) {
        auto out = open_out(dir / (stem + ".svg"));
        render_svg(out, problem.arm, problem.scene, res.trajectory);
      }
      write_result(std::cout, task.id, mode, plan_seed, res);
      return res.status == PlanStatus::success ? 0 : 2;
    }

    if (*bench_cmd) {
      const SceneFile file = load_scene(bench_c.scene);
      BenchOptions opt;
      if (!bench_modes.empty()) {
        opt.modes.clear();
        for (const auto& m : bench_modes) opt.modes.push_back(parse_mode(m));
      }
      opt.repeats = bench_repeats;
      opt.base_seed = bench_seed;
      opt.tasks = bench_tasks;
      for (const auto& id : opt.tasks) file.task(id);
      const auto recs = run_bench(file, make_config(bench_c), opt);
      if (bench_out.empty()) {
        write_bench_csv(std::cout, recs, opt.modes, bench_c.deterministic);
      } else {
        auto out = open_out(bench_out);
        write_bench_csv(out, recs, opt.modes, bench_c.deterministic);
      }
      return 0;
    }

    if (*grad_cmd) {
      const SceneFile file = load_scene(grad_c.scene);
      const GradCheckResult r = run_gradcheck(file, grad_trials, grad_seed);
      std::cout << "trials: " << r.trials << "\nmax_rel_error: " << r.max_rel_error << '\n';
      return r.max_rel_error <= 1e-4 ? 0 : 2;
    }

    if (*tune_cmd) {
      const SceneFile file = load_scene(tune_c.scene);
      BenchOptions opt;
      opt.repeats = tune_repeats;
      opt.base_seed = tune_seed;
      const auto cells = run_tune(file, make_config(tune_c), parse_list(tune_deltas), parse_list(tune_gammas), opt);
      if (tune_out.empty()) {
        write_tune_csv(std::cout, cells, tune_c.deterministic);
      } else {
        auto out = open_out(tune_out);
        write_tune_csv(out, cells, tune_c.deterministic);
      }
      return 0;
    }

    if (*render_cmd) {
      const SceneFile file = load_scene(render_scene);
      const PlanProblem problem = file.problem(file.task(render_task));
      const ObjectiveContext ctx = make_context(problem);
      const Trajectory traj =
          render_traj.empty() ? ctx.gp.mean() : read_trajectory_csv(render_traj, problem.arm.dof(), ctx.gp.dt());
      auto out = open_out(render_out);
      render_svg(out, problem.arm, problem.scene, traj);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
