#pragma once

#include <narrowplan/agd.hpp>
#include <narrowplan/common.hpp>
#include <narrowplan/environment.hpp>
#include <narrowplan/gp.hpp>
#include <narrowplan/kinematics.hpp>
#include <narrowplan/objective.hpp>
#include <narrowplan/problem.hpp>
#include <narrowplan/stoma.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace narrowplan {

// ---------------------------------------------------------------------------
// Bayes-tree factors and significant waypoints
// ---------------------------------------------------------------------------

/// F evaluated on the three-state window {t-1, t, t+1} for t = 1..N.
struct BtFactors {
  std::vector<double> values;  // values[t-1] is factor t

  double mean() const {
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
  double stddev() const {
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size()));
  }
};

inline double bt_factor(const ObjectiveContext& ctx, const Trajectory& traj, double rho, int t) {
  return total_cost(ctx, traj, Window{t, t}, rho, ctx.spec);
}

inline BtFactors bt_factors(const ObjectiveContext& ctx, const Trajectory& traj, double rho) {
  const int n = traj.num_support();
  require(n >= 1, "trajectory needs support states");
  BtFactors f;
  f.values.reserve(static_cast<std::size_t>(n));
  for (int t = 1; t <= n; ++t) f.values.push_back(bt_factor(ctx, traj, rho, t));
  return f;
}

/// Refreshes the factors whose windows touch the states head_pad..tail_pad of `w`.
inline void update_bt_factors(BtFactors& f, const ObjectiveContext& ctx, const Trajectory& traj, double rho,
                              const Window& w) {
  const int n = traj.num_support();
  for (int t = std::max(1, w.head_pad() - 1); t <= std::min(n, w.tail_pad() + 1); ++t)
    f.values[static_cast<std::size_t>(t - 1)] = bt_factor(ctx, traj, rho, t);
}

/// Waypoints whose factor deviates from the mean by strictly more than
/// c_eta standard deviations (uniform weights). 1-based, ascending.
inline std::vector<int> select_significant(const BtFactors& f, double c_eta) {
  require(c_eta > 0.0, "c_eta must be positive");
  const double mu = f.mean();
  const double sd = f.stddev();
  std::vector<int> out;
  for (std::size_t i = 0; i < f.values.size(); ++i)
    if (std::abs(f.values[i] - mu) > c_eta * sd) out.push_back(static_cast<int>(i) + 1);
  return out;
}

/// A slice to re-optimize: free states `window`, fixed pads at
/// window.head_pad() and window.tail_pad().
struct SubProblem {
  Window window;
  std::vector<int> timestamps() const {
    std::vector<int> ts;
    for (int t = window.head_pad(); t <= window.tail_pad(); ++t) ts.push_back(t);
    return ts;
  }
};

/// Groups selected waypoints into maximal runs, pads each run with one
/// neighbor per side, and merges runs whose padded ranges overlap. Runs
/// touching 1 or N use the global start/goal as pad. Ascending order.
inline std::vector<SubProblem> slice_subtrajectories(std::vector<int> selected, int num_support) {
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  for (int t : selected) require(t >= 1 && t <= num_support, "selected timestamp out of range");
  std::vector<SubProblem> out;
  for (std::size_t i = 0; i < selected.size();) {
    std::size_t j = i;
    while (j + 1 < selected.size() && selected[j + 1] == selected[j] + 1) ++j;
    Window w{selected[i], selected[j]};
    // padded ranges [first-1, last+1] overlap iff the gap holds a single waypoint
    if (!out.empty() && out.back().window.tail_pad() >= w.head_pad())
      out.back().window.last = w.last;
    else
      out.push_back({w});
    i = j + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Penalty loop and planner
// ---------------------------------------------------------------------------

/// Doubled-density spec used to decide whether a trajectory is clear.
inline UpsampleSpec verification_spec(const ObjectiveContext& ctx) {
  UpsampleSpec s = ctx.spec;
  for (int& n : s.counts) n = std::max(1, 2 * n);
  return s;
}

/// Obstacle cost of a window under the verification spec.
inline double verified_obs_cost(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w) {
  return obs_cost(ctx, traj, w, verification_spec(ctx));
}

enum class PlanMode { isago, sago, agd_only, stoma_only };

inline const char* to_string(PlanMode m) {
  switch (m) {
    case PlanMode::isago: return "isago";
    case PlanMode::sago: return "sago";
    case PlanMode::agd_only: return "agd-only";
    case PlanMode::stoma_only: return "stoma-only";
  }
  return "?";
}

inline PlanMode parse_mode(std::string_view s) {
  if (s == "isago") return PlanMode::isago;
  if (s == "sago") return PlanMode::sago;
  if (s == "agd-only" || s == "agd") return PlanMode::agd_only;
  if (s == "stoma-only" || s == "stoma") return PlanMode::stoma_only;
  throw InvalidArgument("unknown mode: " + std::string(s));
}

struct IsagoConfig {
  double rho0 = 1.25e-2;
  double kappa_rho = 0.4;
  double c_eta = 2.0;
  double obs_tol = 1e-4;
  int max_outer = 10;      // N_uf
  int max_penalty = 5;     // N_rho
  // Also re-optimize waypoints whose own window is still in collision, not
  // only statistical outliers; without it a long colliding stretch has no
  // outliers and the planner stops early.
  bool select_colliding = true;
  // A slice that misses obs_tol is selected whole, pads included, in the next
  // round, so a stubborn region is re-optimized over a window one state wider
  // per side.
  bool grow_failed_slices = true;
  // Gradient handed to AGD; `exact` keeps it consistent with the cost AGD
  // evaluates in its restart test.
  WeightGradient agd_gradient = WeightGradient::exact;
  // An AGD run that stops on a stuck iterate, or converges while the window
  // still collides, hands the next penalty round to STOMA.
  bool converged_collision_is_stuck = true;
  // Optimize a window under the verification spec once its default-spec cost
  // is below obs_tol while verification still fails.
  bool densify_hidden_contacts = true;
  // End the outer loop as soon as the whole trajectory verifies clear instead
  // of re-optimizing remaining outliers of the factor costs.
  bool stop_when_clear = true;
  double max_wall_time = 120.0;  // seconds; exceeded -> timeout
  AgdConfig agd;
  StomaConfig stoma;
};

struct PenIterResult {
  bool met_obs_tol = false;
  int rounds = 0;
  int agd_calls = 0;
  int stoma_calls = 0;
  int stuck_events = 0;
  int restarts = 0;  // STOMA restarts + AGD Lipschitz restarts
  std::vector<double> rhos;
  bool first_call_stoma = false;
  bool reverted = false;  // no round improved on the input, which is returned
  bool densified = false;  // some round optimized under the verification spec
};

/// Penalty loop on one window: STOMA when stuck, AGD otherwise, until the
/// window's obstacle cost drops below obs_tol; rho shrinks by kappa_rho per round.
template <class Rng>
PenIterResult pen_iter(const ObjectiveContext& ctx, Trajectory& traj, const Window& w, const IsagoConfig& cfg,
                       PlanMode mode, Rng& rng) {
  PenIterResult r;
  double rho = cfg.rho0;
  SgOptions sg = cfg.stoma.sg;
  sg.obs_tol = cfg.obs_tol;
  // the window never leaves with more verified obstacle cost than it came in
  // with; a collision-free input is kept unless a round also ends clear
  const Trajectory input = traj;
  const double input_cost = verified_obs_cost(ctx, traj, w);
  Trajectory best = traj;
  double best_cost = input_cost;
  bool stoma_next = false;
  // optimization context; switches to the verification spec once the default
  // spec no longer sees the contacts that verification rejects
  const ObjectiveContext* opt = &ctx;
  std::optional<ObjectiveContext> dense;
  for (int round = 1; round <= cfg.max_penalty; ++round) {
    ++r.rounds;
    r.rhos.push_back(rho);
    if (cfg.densify_hidden_contacts && !dense && obs_cost(ctx, traj, w, ctx.spec) < cfg.obs_tol) {
      dense = ctx;
      dense->spec = verification_spec(ctx);
      opt = &*dense;
      r.densified = true;
    }
    const TrajectoryProblem prob(*opt, traj, w, rho, sg);
    const Vec x = prob.initial();
    bool use_stoma = false;
    if (mode == PlanMode::stoma_only) {
      use_stoma = true;
    } else if (mode != PlanMode::agd_only) {
      if (stoma_next || prob.stuck_report(x).is_stuck) {
        ++r.stuck_events;
        use_stoma = true;
      }
    }
    if (round == 1) r.first_call_stoma = use_stoma;
    if (use_stoma) {
      StomaConfig sc = cfg.stoma;
      sc.sg = sg;
      if (mode == PlanMode::stoma_only) sc.exit = StomaExit::collision_free;
      const StomaResult sres = stoma_run(prob, x, sc, rng);
      ++r.stoma_calls;
      r.restarts += sres.trace.restarts;
      traj.set_window_vector(w, sres.x);
      stoma_next = false;
    } else {
      AgdConfig ac = cfg.agd;
      ac.obs_tol = cfg.obs_tol;
      if (mode == PlanMode::agd_only) ac.stop_on_stuck = false;
      const TrajectoryProblem smooth(*opt, traj, w, rho, sg, cfg.agd_gradient);
      const AgdResult ares = agd_run(smooth, x, ac);
      ++r.agd_calls;
      r.restarts += ares.trace.restarts;
      traj.set_window_vector(w, ares.x);
      // a converged iterate that still collides is a local minimum of the penalized cost
      stoma_next = ares.status == AgdStatus::stuck ||
                   (cfg.converged_collision_is_stuck && ares.status == AgdStatus::converged &&
                    smooth.obs_cost(ares.x) > cfg.obs_tol);
    }
    const double cost = verified_obs_cost(ctx, traj, w);
    if (cost < cfg.obs_tol) {
      r.met_obs_tol = true;
      break;
    }
    if (cost < best_cost) {
      best = traj;
      best_cost = cost;
    }
    rho *= cfg.kappa_rho;
  }
  if (!r.met_obs_tol) {
    traj = best;
    r.reverted = best_cost == input_cost;
    r.met_obs_tol = best_cost < cfg.obs_tol;
  }
  return r;
}

/// Planning request: arm, scene, boundary configurations and discretization.
struct PlanProblem {
  ArmModel arm;
  Scene scene;
  Vec start;
  Vec goal;
  int num_support = 12;
  int n_ip = 8;
  double total_time = 1.0;
  double qc = 1.0;
};

enum class PlanStatus { success, failure, timeout, rejected };

inline const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::success: return "success";
    case PlanStatus::failure: return "failure";
    case PlanStatus::timeout: return "timeout";
    case PlanStatus::rejected: return "rejected";
  }
  return "?";
}

struct PlanCounters {
  int stuck_events = 0;
  int restarts = 0;
  int penalty_rounds = 0;
  int outer_rounds = 0;
  int agd_calls = 0;
  int stoma_calls = 0;
  int slices = 0;
};

struct PlanResult {
  Trajectory trajectory;
  PlanStatus status = PlanStatus::failure;
  double final_obs_cost = 0.0;  // dense verification spec
  double wall_time = 0.0;
  PlanCounters counters;
  std::vector<double> cost_trace;  // whole-trajectory F at rho0 after each slice
  std::string message;
};

inline ObjectiveContext make_context(const PlanProblem& p) {
  const State s{p.start, Vec::Zero(p.start.size())};
  const State g{p.goal, Vec::Zero(p.goal.size())};
  return make_context(p.arm, p.scene, build_gp(s, g, p.num_support, p.total_time, p.qc), p.n_ip);
}

/// Whether any ball sits inside the safety margin at configuration q.
inline bool configuration_in_collision(const ArmModel& arm, const Scene& scene, const Vec& q) {
  const auto centers = ball_positions(arm, q);
  for (std::size_t i = 0; i < centers.size(); ++i)
    if (signed_distance(scene, centers[i]).distance - arm.balls()[i].radius < scene.epsilon()) return true;
  return false;
}

/// Dense (doubled interpolation) obstacle cost of the whole trajectory.
inline double verification_cost(const ObjectiveContext& ctx, const Trajectory& traj) {
  return verified_obs_cost(ctx, traj, Window::whole(traj.num_support()));
}

/// Waypoints to re-optimize this round.
inline std::vector<int> noisy_set(const ObjectiveContext& ctx, const Trajectory& traj, const BtFactors& f,
                                  const IsagoConfig& cfg) {
  std::vector<int> sel = select_significant(f, cfg.c_eta);
  if (cfg.select_colliding) {
    for (int t = 1; t <= traj.num_support(); ++t)
      if (verified_obs_cost(ctx, traj, Window{t, t}) >= cfg.obs_tol) sel.push_back(t);
    std::sort(sel.begin(), sel.end());
    sel.erase(std::unique(sel.begin(), sel.end()), sel.end());
  }
  return sel;
}

inline PlanResult plan(const PlanProblem& problem, const IsagoConfig& cfg, std::uint64_t seed, PlanMode mode) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const ObjectiveContext ctx = make_context(problem);
  PlanResult res;
  res.trajectory = ctx.gp.mean();  // linear interpolation
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - t0).count(); };

  if (configuration_in_collision(ctx.arm, ctx.scene, problem.start) ||
      configuration_in_collision(ctx.arm, ctx.scene, problem.goal)) {
    res.status = PlanStatus::rejected;
    res.message = "start or goal configuration in collision";
    res.final_obs_cost = verification_cost(ctx, res.trajectory);
    res.wall_time = elapsed();
    return res;
  }

  std::mt19937_64 rng(seed);
  Trajectory& traj = res.trajectory;
  const int n = traj.num_support();
  BtFactors factors = bt_factors(ctx, traj, cfg.rho0);
  bool timed_out = false;

  std::vector<int> grown;  // pads of slices that missed obs_tol last round
  for (int round = 1; round <= cfg.max_outer && !timed_out; ++round) {
    if (cfg.stop_when_clear && verification_cost(ctx, traj) < cfg.obs_tol) break;
    std::vector<int> selected = noisy_set(ctx, traj, factors, cfg);
    if (selected.empty()) break;
    selected.insert(selected.end(), grown.begin(), grown.end());
    grown.clear();
    ++res.counters.outer_rounds;
    std::vector<SubProblem> slices;
    if (mode == PlanMode::isago)
      slices = slice_subtrajectories(selected, n);
    else
      slices = {SubProblem{Window::whole(n)}};
    for (const auto& sp : slices) {
      const PenIterResult pr = pen_iter(ctx, traj, sp.window, cfg, mode, rng);
      if (cfg.grow_failed_slices && !pr.met_obs_tol) {
        for (int t = std::max(1, sp.window.head_pad()); t <= std::min(n, sp.window.tail_pad()); ++t)
          grown.push_back(t);
      }
      ++res.counters.slices;
      res.counters.penalty_rounds += pr.rounds;
      res.counters.agd_calls += pr.agd_calls;
      res.counters.stoma_calls += pr.stoma_calls;
      res.counters.stuck_events += pr.stuck_events;
      res.counters.restarts += pr.restarts;
      update_bt_factors(factors, ctx, traj, cfg.rho0, sp.window);
      res.cost_trace.push_back(total_cost(ctx, traj, Window::whole(n), cfg.rho0, ctx.spec));
      if (elapsed() > cfg.max_wall_time) {
        timed_out = true;
        break;
      }
    }
  }

  res.final_obs_cost = verification_cost(ctx, traj);
  if (res.final_obs_cost < cfg.obs_tol)
    res.status = PlanStatus::success;
  else
    res.status = timed_out ? PlanStatus::timeout : PlanStatus::failure;
  res.wall_time = elapsed();
  return res;
}

}  // namespace narrowplan
