#pragma once

#include <narrowplan/common.hpp>
#include <narrowplan/gp.hpp>
#include <narrowplan/objective.hpp>
#include <narrowplan/stoma.hpp>

#include <vector>

namespace narrowplan {

/// Optimization view of one window of a trajectory: the free variables are
/// the window's stacked states, everything else (pads included) stays fixed.
/// Satisfies both SmoothProblem and StochasticProblem.
/// `wg` selects the deterministic gradient handed to the accelerated solver.
class TrajectoryProblem {
 public:
  TrajectoryProblem(const ObjectiveContext& ctx, Trajectory base, Window w, double rho, SgOptions sg = {},
                    WeightGradient wg = WeightGradient::frozen)
      : ctx_(&ctx), base_(std::move(base)), w_(w), rho_(rho), sg_(sg), wg_(wg) {
    require(rho_ > 0.0, "rho must be positive");
    base_.check_window(w_);
  }

  const Window& window() const { return w_; }
  double rho() const { return rho_; }
  const Trajectory& base() const { return base_; }
  Vec initial() const { return base_.window_vector(w_); }

  Trajectory assemble(const Vec& x) const {
    Trajectory t = base_;
    t.set_window_vector(w_, x);
    return t;
  }

  double cost(const Vec& x) const { return total_cost(*ctx_, assemble(x), w_, rho_, ctx_->spec); }

  double cost_grad(const Vec& x, Vec& g) const {
    CostGrad cg = total_cost_grad(*ctx_, assemble(x), w_, rho_, ctx_->spec, wg_);
    g = std::move(cg.grad);
    return cg.cost;
  }

  double obs_cost(const Vec& x) const { return narrowplan::obs_cost(*ctx_, assemble(x), w_, ctx_->spec); }

  StuckReport stuck_report(const Vec& x) const {
    return check_stuck(*ctx_, assemble(x), w_, sg_.phi_tol_const_deg, sg_.obs_tol, ctx_->spec);
  }
  bool is_stuck(const Vec& x) const { return stuck_report(x).is_stuck; }

  template <class Rng>
  SgSample stochastic_gradient(const Vec& x, Rng& rng) const {
    return sample_sg(*ctx_, assemble(x), w_, rho_, sg_, rng);
  }

  /// Prior samples conditioned on the window's pads.
  template <class Rng>
  std::vector<Vec> sample_candidates(int count, Rng& rng) const {
    std::vector<Vec> out;
    for (const auto& t : sample(ctx_->gp, base_, w_, count, rng)) out.push_back(t.window_vector(w_));
    return out;
  }

  /// Clamps joint positions to the arm's limits.
  void project(Vec& x) const {
    const int sd = base_.state_dim();
    const int d = base_.dof();
    for (int i = 0; i < w_.size(); ++i) ctx_->arm.clamp(x.segment(static_cast<Eigen::Index>(i) * sd, d));
  }

 private:
  const ObjectiveContext* ctx_;
  Trajectory base_;
  Window w_;
  double rho_;
  SgOptions sg_;
  WeightGradient wg_;
};

}  // namespace narrowplan
