#pragma once

#include <narrowplan/cli/scene_file.hpp>
#include <narrowplan/isago.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace narrowplan::cli {

/// FNV-1a over the bytes of `s`.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Seed of one benchmark run: FNV-1a-64 of "base|task|mode|repeat".
inline std::uint64_t run_seed(std::uint64_t base_seed, const std::string& task, PlanMode mode, int repeat) {
  return fnv1a64(std::to_string(base_seed) + "|" + task + "|" + to_string(mode) + "|" + std::to_string(repeat));
}

struct BenchRecord {
  std::string task;
  TaskClass task_class = TaskClass::A;
  PlanMode mode = PlanMode::isago;
  std::uint64_t seed = 0;
  int repeat = 0;
  bool success = false;
  double time_s = 0.0;
  double obs_cost = 0.0;
  int stuck_events = 0;
  int restarts = 0;
};

struct BenchJob {
  const TaskSpec* task;
  PlanMode mode;
  int repeat;
  std::uint64_t seed;
};

/// Worker count: hardware concurrency, capped by NARROWPLAN_THREADS when set.
inline int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("NARROWPLAN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

/// Runs `fn(i)` for i in [0, count) on up to `workers` threads.
template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct BenchOptions {
  std::vector<PlanMode> modes{PlanMode::isago, PlanMode::sago, PlanMode::agd_only, PlanMode::stoma_only};
  int repeats = 0;  // 0: per-task value from the scene file
  std::uint64_t base_seed = 0;
  std::vector<std::string> tasks;  // empty: all
  int workers = 0;                 // 0: worker_count()
};

/// Records come back ordered by (task order in file, mode order, repeat),
/// whatever the worker interleaving.
inline std::vector<BenchRecord> run_bench(const SceneFile& file, const IsagoConfig& cfg, const BenchOptions& opt) {
  std::vector<BenchJob> jobs;
  for (const auto& t : file.tasks) {
    if (!opt.tasks.empty() && std::find(opt.tasks.begin(), opt.tasks.end(), t.id) == opt.tasks.end()) continue;
    const int reps = opt.repeats > 0 ? opt.repeats : t.repeats;
    for (PlanMode m : opt.modes)
      for (int r = 0; r < reps; ++r) jobs.push_back({&t, m, r, run_seed(opt.base_seed, t.id, m, r)});
  }
  std::vector<BenchRecord> out(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), opt.workers > 0 ? opt.workers : worker_count(), [&](int i) {
    const BenchJob& j = jobs[static_cast<std::size_t>(i)];
    const PlanResult res = plan(file.problem(*j.task), cfg, j.seed, j.mode);
    BenchRecord& rec = out[static_cast<std::size_t>(i)];
    rec.task = j.task->id;
    rec.task_class = j.task->task_class;
    rec.mode = j.mode;
    rec.seed = j.seed;
    rec.repeat = j.repeat;
    rec.success = res.status == PlanStatus::success;
    rec.time_s = res.wall_time;
    rec.obs_cost = res.final_obs_cost;
    rec.stuck_events = res.counters.stuck_events;
    rec.restarts = res.counters.restarts;
  });
  return out;
}

struct GroupSummary {
  PlanMode mode = PlanMode::isago;
  std::string group;  // class label or "all"
  int runs = 0;
  int successes = 0;
  double scr = 0.0;  // success fraction
  double avt = 0.0;  // mean time of successful runs
  double sdt = 0.0;  // population std of those times
};

inline GroupSummary summarize(const std::vector<BenchRecord>& recs, PlanMode mode, const std::string& group) {
  GroupSummary g{mode, group};
  std::vector<double> times;
  for (const auto& r : recs) {
    if (r.mode != mode || (group != "all" && group != to_string(r.task_class))) continue;
    ++g.runs;
    if (r.success) {
      ++g.successes;
      times.push_back(r.time_s);
    }
  }
  if (g.runs) g.scr = static_cast<double>(g.successes) / g.runs;
  if (!times.empty()) {
    for (double t : times) g.avt += t;
    g.avt /= static_cast<double>(times.size());
    for (double t : times) g.sdt += (t - g.avt) * (t - g.avt);
    g.sdt = std::sqrt(g.sdt / static_cast<double>(times.size()));
  }
  return g;
}

/// Summary rows per (mode, class) for the classes present, then per mode overall.
inline std::vector<GroupSummary> summary_table(const std::vector<BenchRecord>& recs, const std::vector<PlanMode>& modes) {
  std::vector<GroupSummary> out;
  for (PlanMode m : modes) {
    for (const char* c : {"A", "B", "C"}) {
      const GroupSummary g = summarize(recs, m, c);
      if (g.runs) out.push_back(g);
    }
    out.push_back(summarize(recs, m, "all"));
  }
  return out;
}

inline const char* csv_header() { return "task,class,mode,seed,success,time_s,obs_cost,stuck_events,restarts"; }

inline std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

inline std::string sci(double v) {
  std::ostringstream ss;
  ss << std::scientific << std::setprecision(6) << v;
  return ss.str();
}

/// Writes the records and a '#'-prefixed summary block. With
/// `zero_times`, time columns are written as 0 so that reruns compare byte
/// for byte.
inline void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& recs, const std::vector<PlanMode>& modes,
                            bool zero_times) {
  os << csv_header() << '\n';
  for (const auto& r : recs)
    os << r.task << ',' << to_string(r.task_class) << ',' << to_string(r.mode) << ',' << r.seed << ','
       << (r.success ? 1 : 0) << ',' << fixed(zero_times ? 0.0 : r.time_s, 4) << ',' << sci(r.obs_cost) << ','
       << r.stuck_events << ',' << r.restarts << '\n';
  os << "# summary\n# mode,class,runs,successes,scr,avt_s,sdt_s\n";
  for (const auto& g : summary_table(recs, modes))
    os << "# " << to_string(g.mode) << ',' << g.group << ',' << g.runs << ',' << g.successes << ',' << fixed(g.scr, 4)
       << ',' << fixed(zero_times ? 0.0 : g.avt, 4) << ',' << fixed(zero_times ? 0.0 : g.sdt, 4) << '\n';
}

// ---------------------------------------------------------------------------
// Tuning grid
// ---------------------------------------------------------------------------

struct TuneCell {
  double delta = 0.0;
  double gamma = 0.0;
  GroupSummary summary;
};

/// Runs isago over every (delta, gamma) pair on all tasks of the file.
inline std::vector<TuneCell> run_tune(const SceneFile& file, const IsagoConfig& base, const std::vector<double>& deltas,
                                      const std::vector<double>& gammas, BenchOptions opt) {
  opt.modes = {PlanMode::isago};
  std::vector<TuneCell> out;
  for (double g : gammas)
    for (double d : deltas) {
      IsagoConfig cfg = base;
      cfg.stoma.delta = d;
      cfg.stoma.gamma = g;
      const auto recs = run_bench(file, cfg, opt);
      out.push_back({d, g, summarize(recs, PlanMode::isago, "all")});
    }
  return out;
}

inline void write_tune_csv(std::ostream& os, const std::vector<TuneCell>& cells, bool zero_times) {
  os << "delta,gamma,runs,successes,scr,avt_s,sdt_s\n";
  for (const auto& c : cells)
    os << c.delta << ',' << c.gamma << ',' << c.summary.runs << ',' << c.summary.successes << ','
       << fixed(c.summary.scr, 4) << ',' << fixed(zero_times ? 0.0 : c.summary.avt, 4) << ','
       << fixed(zero_times ? 0.0 : c.summary.sdt, 4) << '\n';
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradCheckResult {
  int trials = 0;
  double max_rel_error = 0.0;
  std::vector<double> errors;
};

/// Relative error |g - g_fd| / max(|g_fd|, floor) between the analytic
/// objective gradient and central differences of the frozen-weight cost.
inline double gradient_rel_error(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w, double rho,
                                 double h = 1e-6) {
  const Vec g = total_cost_grad(ctx, traj, w, rho, ctx.spec).grad;
  const auto frozen = arc_weights(ctx, traj, w, ctx.spec);
  const Vec x = traj.window_vector(w);
  Vec fd(x.size());
  Trajectory probe = traj;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    probe.set_window_vector(w, xp);
    const double fp = rho * gp_cost_grad(ctx.gp, probe, w).cost + obs_cost(ctx, probe, w, ctx.spec, &frozen);
    probe.set_window_vector(w, xm);
    const double fm = rho * gp_cost_grad(ctx.gp, probe, w).cost + obs_cost(ctx, probe, w, ctx.spec, &frozen);
    fd[i] = (fp - fm) / (2.0 * h);
  }
  return (g - fd).norm() / std::max(fd.norm(), 1e-12);
}

/// Draws trajectories around each task's straight line from the prior and
/// compares gradients on the whole trajectory, cycling through the tasks.
inline GradCheckResult run_gradcheck(const SceneFile& file, int trials, std::uint64_t seed, double rho = 1.25e-2) {
  require(!file.tasks.empty(), "scene has no tasks");
  std::mt19937_64 rng(seed);
  GradCheckResult res;
  for (int i = 0; i < trials; ++i) {
    const TaskSpec& t = file.tasks[static_cast<std::size_t>(i) % file.tasks.size()];
    const ObjectiveContext ctx = make_context(file.problem(t));
    const Trajectory traj = sample(ctx.gp, 1, rng).front();
    const double e = gradient_rel_error(ctx, traj, Window::whole(traj.num_support()), rho);
    res.errors.push_back(e);
    res.max_rel_error = std::max(res.max_rel_error, e);
    ++res.trials;
  }
  return res;
}

}  // namespace narrowplan::cli
