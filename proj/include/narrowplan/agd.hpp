#pragma once

#include <narrowplan/common.hpp>

#include <cmath>
#include <concepts>
#include <vector>

namespace narrowplan {

/// Minimal interface the accelerated solver needs from a problem.
template <class P>
concept SmoothProblem = requires(const P& p, const Vec& x, Vec& g) {
  { p.cost(x) } -> std::convertible_to<double>;
  { p.cost_grad(x, g) } -> std::convertible_to<double>;
  { p.is_stuck(x) } -> std::convertible_to<bool>;
  p.project(g);
};

struct AgdConfig {
  double delta0 = 1.0;     // initial Lipschitz scale
  double kappa_L = 6.67;   // Lipschitz growth on restart
  int max_restarts = 10;   // N_L
  int max_iters = 50;      // N_ag, per restart round
  double f_tol = 8e-4;
  double theta_tol = 1e-3;
  double obs_tol = 1e-4;   // forwarded to stuck checks by callers
  bool stop_on_stuck = true;
  int min_round_iters = 2;  // convergence is tested from this inner iteration on
};

enum class AgdStatus { converged, stuck, iteration_cap, numerical_failure };

inline const char* to_string(AgdStatus s) {
  switch (s) {
    case AgdStatus::converged: return "converged";
    case AgdStatus::stuck: return "stuck";
    case AgdStatus::iteration_cap: return "iteration-cap";
    case AgdStatus::numerical_failure: return "numerical-failure";
  }
  return "?";
}

struct AgdIterate {
  int round = 0;          // restart round j (1-based)
  int k = 0;              // inner iteration
  double cost = 0.0;      // F(theta_k)
  double md_grad_norm = 0.0;
  double lipschitz = 0.0;
  double alpha = 0.0, beta = 0.0, lambda = 0.0;
};

struct AgdTrace {
  std::vector<AgdIterate> iterations;
  int restarts = 0;
  int grad_evals = 0;
  double initial_lipschitz = 0.0;
  std::vector<Vec> round_starts;  // theta_0 of each restart round
};

struct AgdResult {
  Vec x;
  AgdStatus status = AgdStatus::iteration_cap;
  AgdTrace trace;
  double cost = 0.0;
};

/// Accelerated gradient descent with three sequences (theta, theta^md,
/// theta^ag) and step rules alpha_k = 2/(k+1), beta_k = 1/(2L), lambda_k =
/// k beta_k / 2. L starts at delta0 |grad F(theta_0)| and is multiplied by
/// kappa_L whenever the local quadratic bound
///   |F_k - F_{k-1} - <grad F^md_k, theta_k - theta_{k-1}>| <= L/2 |theta_k - theta_{k-1}|^2
/// fails; the run then restarts from theta^md_{k-1}.
///
/// Returns the lowest-cost theta_k seen, so the result never costs more than
/// the input.
template <SmoothProblem P>
AgdResult agd_run(const P& problem, const Vec& x0, const AgdConfig& cfg) {
  require(cfg.kappa_L > 1.0, "kappa_L must exceed 1");
  require(cfg.f_tol > 0.0 && cfg.theta_tol > 0.0, "tolerances must be positive");
  AgdResult res;
  AgdTrace& tr = res.trace;

  Vec theta = x0;
  problem.project(theta);
  Vec g_md(theta.size());
  double f_prev = problem.cost_grad(theta, g_md);
  ++tr.grad_evals;
  res.x = theta;
  res.cost = f_prev;
  if (!std::isfinite(f_prev) || !all_finite(g_md)) {
    res.status = AgdStatus::numerical_failure;
    return res;
  }
  double L = std::max(cfg.delta0 * g_md.norm(), 1e-12);
  tr.initial_lipschitz = L;

  Vec theta_ag = theta;
  Vec theta_md_prev = theta;  // theta^md_{k-1}; theta^md_0 := theta_0
  Vec g_md_prev = g_md;       // grad at theta^md_{k-1}

  for (int round = 1; round <= cfg.max_restarts; ++round) {
    tr.round_starts.push_back(theta);
    bool restarted = false;
    for (int k = 1; k <= cfg.max_iters; ++k) {
      const double alpha = 2.0 / (k + 1);
      const double beta = 1.0 / (2.0 * L);
      const double lambda = k * beta / 2.0;
      Vec theta_md = (1.0 - alpha) * theta_ag + alpha * theta;
      if (k >= 2) {
        problem.cost_grad(theta_md, g_md);
        ++tr.grad_evals;
        if (!all_finite(g_md)) {
          res.status = AgdStatus::numerical_failure;
          return res;
        }
      }
      Vec theta_next = theta - lambda * g_md;
      problem.project(theta_next);
      theta_ag = theta_md - beta * g_md;
      problem.project(theta_ag);

      const double f = problem.cost(theta_next);
      if (!std::isfinite(f)) {
        res.status = AgdStatus::numerical_failure;
        return res;
      }
      tr.iterations.push_back({round, k, f, g_md.norm(), L, alpha, beta, lambda});
      if (f < res.cost) {
        res.cost = f;
        res.x = theta_next;
      }

      const Vec step = theta_next - theta;
      const double step_norm = step.norm();
      if (k >= cfg.min_round_iters && std::abs(f - f_prev) < cfg.f_tol && step_norm < cfg.theta_tol) {
        res.status = AgdStatus::converged;
        return res;
      }
      if (cfg.stop_on_stuck && problem.is_stuck(theta_next)) {
        res.status = AgdStatus::stuck;
        return res;
      }
      const double model_gap = std::abs(f - f_prev - g_md.dot(step));
      if (model_gap > 0.5 * L * step_norm * step_norm) {
        // restart from theta^md_{k-1} with a larger Lipschitz estimate
        theta = theta_md_prev;
        theta_ag = theta_md_prev;
        g_md = g_md_prev;
        f_prev = problem.cost(theta);
        L *= cfg.kappa_L;
        ++tr.restarts;
        restarted = true;
        break;
      }
      theta_md_prev = std::move(theta_md);
      g_md_prev = g_md;
      theta = std::move(theta_next);
      f_prev = f;
    }
    if (!restarted) break;
  }
  res.status = AgdStatus::iteration_cap;
  return res;
}

}  // namespace narrowplan
