#pragma once

#include <narrowplan/common.hpp>
#include <narrowplan/gp.hpp>
#include <narrowplan/objective.hpp>

#include <cmath>
#include <concepts>
#include <limits>
#include <random>
#include <vector>

namespace narrowplan {

// ---------------------------------------------------------------------------
// Stochastic gradient generation
// ---------------------------------------------------------------------------

/// Ranges for the three randomized scales of a stochastic gradient.
struct SgOptions {
  double u_min = 0.05;           // rho_hat = rho / u, u ~ U(u_min, 1)
  int n_ip_max = 8;              // n_t ~ U{0..n_ip_max} per interval
  double phi_lo_deg = 60.0;      // rejection angle ~ U(phi_lo, phi_hi)
  double phi_hi_deg = 180.0;
  double phi_tol_const_deg = 95.0;  // stuck check angle
  double obs_tol = 1e-4;
};

/// One realization of the random scales.
struct SgDraw {
  double rho_hat = 0.0;
  UpsampleSpec spec;
  double phi_tol_deg = 180.0;
};

/// Draw order is fixed (u, then interval counts in window order, then angle)
/// so that a seeded stream reproduces the same gradients.
template <class Rng>
SgDraw draw_sg(double rho, int num_support, const Window& w, const SgOptions& opt, Rng& rng) {
  require(rho > 0.0, "rho must be positive");
  SgDraw d;
  std::uniform_real_distribution<double> u_dist(opt.u_min, 1.0);
  d.rho_hat = rho / u_dist(rng);
  d.spec = UpsampleSpec::uniform(num_support, 0);
  std::uniform_int_distribution<int> n_dist(0, opt.n_ip_max);
  for (int t = w.head_pad(); t <= w.last; ++t) d.spec.counts[static_cast<std::size_t>(t)] = n_dist(rng);
  std::uniform_real_distribution<double> phi_dist(opt.phi_lo_deg, opt.phi_hi_deg);
  d.phi_tol_deg = phi_dist(rng);
  return d;
}

inline Vec sg_gradient(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w, const SgDraw& d) {
  return d.rho_hat * gp_cost_grad(ctx.gp, traj, w).grad + obs_grad(ctx, traj, w, d.spec, d.phi_tol_deg);
}

struct SgSample {
  Vec gradient;
  StuckReport stuck;  // with the constant angle on the default spec
  SgDraw draw;
};

template <class Rng>
SgSample sample_sg(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w, double rho,
                   const SgOptions& opt, Rng& rng) {
  SgSample s;
  s.draw = draw_sg(rho, traj.num_support(), w, opt, rng);
  s.gradient = sg_gradient(ctx, traj, w, s.draw);
  s.stuck = check_stuck(ctx, traj, w, opt.phi_tol_const_deg, opt.obs_tol, ctx.spec);
  return s;
}

// ---------------------------------------------------------------------------
// Second-moment adaptation
// ---------------------------------------------------------------------------

struct MomentState {
  Vec raw;        // EMA of squared gradients
  Vec corrected;  // bias corrected
  int k = 0;
};

inline MomentState update_moments(const MomentState& ms, const Vec& g, double gamma) {
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0,1)");
  MomentState out;
  out.k = ms.k + 1;
  if (ms.k == 0) {
    out.raw = (1.0 - gamma) * g.array().square().matrix();
  } else {
    require(ms.raw.size() == g.size(), "moment dimension mismatch");
    out.raw = gamma * ms.raw + (1.0 - gamma) * g.array().square().matrix();
  }
  out.corrected = out.raw / (1.0 - std::pow(gamma, out.k));
  return out;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

enum class StomaExit { not_stuck, collision_free };

/// How delta scales the moment-normalized step. `trust_region` makes the
/// per-coordinate step about delta/2 (larger delta, larger steps);
/// `inverse` divides by 2 delta instead.
enum class StepScaling { trust_region, inverse };

struct StomaConfig {
  double delta = 0.40;
  double gamma = 0.90;
  int K = 12;
  int max_restarts = 5;  // N_rsg
  int n_sg_lo = 35;
  int n_sg_hi = 55;
  double sg_tol = 6.4e-3;
  double moment_eps = 1e-12;
  StepScaling scaling = StepScaling::trust_region;
  SgOptions sg;
  StomaExit exit = StomaExit::not_stuck;
};

enum class StomaStatus { unstuck, cap_reached, numerical_failure };

inline const char* to_string(StomaStatus s) {
  switch (s) {
    case StomaStatus::unstuck: return "unstuck";
    case StomaStatus::cap_reached: return "cap-reached";
    case StomaStatus::numerical_failure: return "numerical-failure";
  }
  return "?";
}

struct StomaStep {
  int round = 0;
  int k = 0;
  int n_sg = 0;
  double cost = 0.0;       // deterministic F at theta^sg_k
  double alpha = 0.0;
  double lambda = 0.0;
  double b_min = 0.0;      // |B_k|, smallest coordinate of B_k
  double ratio() const { return lambda / b_min; }
};

struct StomaRound {
  double reinit_cost = 0.0;    // min over theta_0 and the K samples
  int reinit_index = 0;        // 0 = theta_0, i = sample i
  double best_so_far = 0.0;
};

struct StomaTrace {
  std::vector<StomaStep> steps;
  std::vector<StomaRound> rounds;
  int restarts = 0;
  int sg_evals = 0;
};

struct StomaResult {
  Vec x;
  StomaStatus status = StomaStatus::cap_reached;
  StomaTrace trace;
  StuckReport last_check;
};

template <class P, class Rng>
concept StochasticProblem = requires(const P& p, const Vec& x, Vec& y, Rng& rng, int k) {
  { p.cost(x) } -> std::convertible_to<double>;
  { p.stochastic_gradient(x, rng) } -> std::same_as<SgSample>;
  { p.sample_candidates(k, rng) } -> std::same_as<std::vector<Vec>>;
  p.project(y);
};

/// Step sizes for step k: B_k = s (M_k + eps)^{-1/2} per coordinate with
/// s = delta/2 (trust_region) or 1/(2 delta) (inverse), |B_k| its smallest
/// entry, lambda_k = (1 + alpha_k / 8) |B_k|, which sits inside the admitted
/// band [1, 1 + alpha_k/4] |B_k|.
struct StomaStepSizes {
  Vec B;
  double b_min = 0.0;
  double lambda = 0.0;
};

inline StomaStepSizes stoma_step_sizes(const MomentState& ms, double alpha, const StomaConfig& cfg) {
  StomaStepSizes s;
  const double scale = cfg.scaling == StepScaling::trust_region ? cfg.delta / 2.0 : 1.0 / (2.0 * cfg.delta);
  s.B = ((ms.corrected.array() + cfg.moment_eps).rsqrt() * scale).matrix();
  s.b_min = s.B.minCoeff();
  s.lambda = (1.0 + alpha / 8.0) * s.b_min;
  return s;
}

/// Restarted stochastic descent with moment adaptation. Each round picks the
/// cheapest of theta_0 and K prior samples, then runs accelerated stochastic
/// steps until the exit predicate holds (return), the random step cap N_sg is
/// reached, or the step falls below sg_tol (both restart from theta^sg_k).
template <class P, class Rng>
  requires StochasticProblem<P, Rng>
StomaResult stoma_run(const P& problem, const Vec& x0, const StomaConfig& cfg, Rng& rng) {
  require(cfg.delta > 0.0, "delta must be positive");
  require(cfg.gamma > 0.0 && cfg.gamma < 1.0, "gamma must lie in (0,1)");
  require(cfg.K >= 1 && cfg.n_sg_lo <= cfg.n_sg_hi, "invalid sample or step counts");
  StomaResult res;
  StomaTrace& tr = res.trace;
  auto exit_holds = [&](const StuckReport& r) {
    return cfg.exit == StomaExit::not_stuck ? !r.is_stuck : r.obs_cost < cfg.sg.obs_tol;
  };

  Vec theta0 = x0;
  problem.project(theta0);
  Vec best_x = theta0;
  double best_cost = problem.cost(theta0);
  std::uniform_int_distribution<int> nsg_dist(cfg.n_sg_lo, cfg.n_sg_hi);

  for (int round = 1; round <= cfg.max_restarts; ++round) {
    if (round > 1) ++tr.restarts;
    // reinitialize from the cheapest of theta_0 and K prior samples
    std::vector<Vec> cands = problem.sample_candidates(cfg.K, rng);
    cands.insert(cands.begin(), theta0);
    StomaRound rr;
    rr.reinit_cost = problem.cost(cands[0]);
    for (std::size_t i = 1; i < cands.size(); ++i) {
      problem.project(cands[i]);
      const double c = problem.cost(cands[i]);
      if (c < rr.reinit_cost) {
        rr.reinit_cost = c;
        rr.reinit_index = static_cast<int>(i);
      }
    }
    Vec theta = cands[static_cast<std::size_t>(rr.reinit_index)];
    Vec theta_ag = theta;
    if (rr.reinit_cost < best_cost) {
      best_cost = rr.reinit_cost;
      best_x = theta;
    }
    rr.best_so_far = best_cost;
    tr.rounds.push_back(rr);

    MomentState ms;
    double last_step = std::numeric_limits<double>::infinity();
    for (int k = 1;; ++k) {
      const int n_sg = nsg_dist(rng);
      const double alpha = 2.0 / (k + 1);
      Vec theta_sg = (1.0 - alpha) * theta_ag + alpha * theta;
      problem.project(theta_sg);
      SgSample sg = problem.stochastic_gradient(theta_sg, rng);
      ++tr.sg_evals;
      res.last_check = sg.stuck;
      if (!all_finite(sg.gradient)) {
        res.status = StomaStatus::numerical_failure;
        res.x = theta_sg;
        return res;
      }
      const double f_sg = problem.cost(theta_sg);
      if (f_sg < best_cost) {
        best_cost = f_sg;
        best_x = theta_sg;
      }
      if (exit_holds(sg.stuck)) {
        tr.steps.push_back({round, k, n_sg, f_sg, alpha, 0.0, 0.0});
        res.status = StomaStatus::unstuck;
        res.x = theta_sg;
        return res;
      }
      if (k >= n_sg || last_step <= cfg.sg_tol) {
        tr.steps.push_back({round, k, n_sg, f_sg, alpha, 0.0, 0.0});
        theta0 = theta_sg;
        break;
      }
      ms = update_moments(ms, sg.gradient, cfg.gamma);
      const StomaStepSizes ss = stoma_step_sizes(ms, alpha, cfg);
      tr.steps.push_back({round, k, n_sg, f_sg, alpha, ss.lambda, ss.b_min});
      Vec theta_next = theta - ss.lambda * sg.gradient;
      problem.project(theta_next);
      theta_ag = theta_sg - ss.B.cwiseProduct(sg.gradient);
      problem.project(theta_ag);
      last_step = (theta_next - theta).norm();
      theta = std::move(theta_next);
    }
  }
  res.status = StomaStatus::cap_reached;
  res.x = best_x;
  return res;
}

}  // namespace narrowplan
