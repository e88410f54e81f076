#pragma once

#include <narrowplan/common.hpp>
#include <narrowplan/environment.hpp>
#include <narrowplan/gp.hpp>
#include <narrowplan/kinematics.hpp>

#include <algorithm>
#include <optional>
#include <vector>

namespace narrowplan {

/// Everything needed to evaluate the penalized objective on a trajectory.
struct ObjectiveContext {
  ArmModel arm;
  Scene scene;
  GpModel gp;
  UpsampleSpec spec;        // default upsampling, uniform N^ip
  double v_min = 1e-3;      // floor on the arc-length weight
};

inline ObjectiveContext make_context(ArmModel arm, Scene scene, GpModel gp, int n_ip) {
  const int n = gp.num_support();
  require(arm.dof() == gp.dof(), "arm and prior dimensions differ");
  return {std::move(arm), std::move(scene), std::move(gp), UpsampleSpec::uniform(n, n_ip)};
}

/// Obstacle term of one ball at one upsampled state.
struct BallTerm {
  double distance = 0.0;  // ball surface to nearest obstacle
  double cost = 0.0;      // c(d)
  double weight = 0.0;    // arc-length weight |J qdot|, floored
  Vec joint_grad;         // weight * c'(d) * grad_d' J, zero when out of margin
};

/// Per-ball obstacle terms at configuration q with joint velocity qdot. When
/// `frozen` is given, it supplies the weights instead of |J qdot|.
inline std::vector<BallTerm> ball_terms(const ObjectiveContext& ctx, const Vec& q, const Vec& qdot,
                                        const double* frozen = nullptr) {
  const auto kin = ball_kinematics(ctx.arm, q);
  const double eps = ctx.scene.epsilon();
  std::vector<BallTerm> out(kin.centers.size());
  for (std::size_t i = 0; i < kin.centers.size(); ++i) {
    BallTerm& bt = out[i];
    const DistanceQuery dq = signed_distance(ctx.scene, kin.centers[i]);
    bt.distance = dq.distance - ctx.arm.balls()[i].radius;
    const CollisionCost cc = collision_cost(bt.distance, eps);
    bt.cost = cc.cost;
    bt.weight = frozen ? frozen[i] : std::max((kin.jacobians[i] * qdot).norm(), ctx.v_min);
    if (cc.dcost_dd != 0.0)
      bt.joint_grad = bt.weight * cc.dcost_dd * (kin.jacobians[i].transpose() * dq.gradient);
    else
      bt.joint_grad = Vec::Zero(q.size());
  }
  return out;
}

/// Ball gradients at one state, accumulated base-to-tip. Ball i is compared
/// with the running sum of the accepted balls before it; it is rejected when
/// the included angle exceeds phi_tol_deg. Angles are undefined (and never
/// reject) when either vector is numerically zero.
struct BallGradientReport {
  std::vector<Vec> ball_grads;
  std::vector<Vec> prefix;                       // running sum after ball i
  std::vector<std::optional<double>> angles_deg;
  std::vector<bool> accepted;

  const Vec& total() const { return prefix.back(); }
  double max_angle() const {
    double m = 0.0;
    for (const auto& a : angles_deg)
      if (a) m = std::max(m, *a);
    return m;
  }
};

inline constexpr double kAngleNormFloor = 1e-12;

inline std::optional<double> included_angle_deg(const Vec& a, const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kAngleNormFloor || nb < kAngleNormFloor) return std::nullopt;
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return rad2deg(std::acos(c));
}

inline BallGradientReport accumulate_ball_gradients(std::vector<Vec> grads, double phi_tol_deg) {
  require(!grads.empty(), "no ball gradients to accumulate");
  BallGradientReport r;
  r.ball_grads = std::move(grads);
  Vec acc = Vec::Zero(r.ball_grads.front().size());
  for (const Vec& g : r.ball_grads) {
    const auto ang = included_angle_deg(g, acc);
    const bool ok = !ang || *ang <= phi_tol_deg;
    if (ok) acc += g;
    r.angles_deg.push_back(ang);
    r.accepted.push_back(ok);
    r.prefix.push_back(acc);
  }
  return r;
}

inline BallGradientReport ball_gradients(const ObjectiveContext& ctx, const Vec& q, const Vec& qdot,
                                         double phi_tol_deg = 180.0) {
  const auto terms = ball_terms(ctx, q, qdot);
  std::vector<Vec> grads;
  grads.reserve(terms.size());
  for (const auto& t : terms) grads.push_back(t.joint_grad);
  return accumulate_ball_gradients(std::move(grads), phi_tol_deg);
}

/// Arc-length weights for every (upsampled point, ball), point-major.
inline std::vector<double> arc_weights(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w,
                                       const UpsampleSpec& spec) {
  const Mat up = interpolate(ctx.gp, traj, spec, w);
  const int d = ctx.arm.dof();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(up.cols()) * ctx.arm.balls().size());
  for (Eigen::Index c = 0; c < up.cols(); ++c)
    for (const auto& t : ball_terms(ctx, up.col(c).head(d), up.col(c).tail(d))) out.push_back(t.weight);
  return out;
}

/// Obstacle cost over the upsampled states of a window (pads included).
inline double obs_cost(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w,
                       const UpsampleSpec& spec, const std::vector<double>* frozen = nullptr) {
  if (ctx.scene.obstacles().empty()) return 0.0;
  const Mat up = interpolate(ctx.gp, traj, spec, w);
  const int d = ctx.arm.dof();
  const std::size_t nb = ctx.arm.balls().size();
  if (frozen) require(frozen->size() == static_cast<std::size_t>(up.cols()) * nb, "frozen weight count mismatch");
  double total = 0.0;
  for (Eigen::Index c = 0; c < up.cols(); ++c) {
    const double* fw = frozen ? frozen->data() + static_cast<std::size_t>(c) * nb : nullptr;
    for (const auto& t : ball_terms(ctx, up.col(c).head(d), up.col(c).tail(d), fw)) total += t.cost * t.weight;
  }
  return total;
}

inline double obs_cost(const ObjectiveContext& ctx, const Trajectory& traj, const UpsampleSpec& spec) {
  return obs_cost(ctx, traj, Window::whole(traj.num_support()), spec);
}

/// Obstacle gradient over a window's free states: M' g_up, where each
/// upsampled point contributes its accumulated ball gradient (position part
/// only; arc-length weights are held fixed, at `frozen` when given and at
/// the current trajectory otherwise). phi_tol_deg = 180 accepts every ball.
inline Vec obs_grad(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w, const UpsampleSpec& spec,
                    double phi_tol_deg = 180.0, const std::vector<double>* frozen = nullptr) {
  const int d = ctx.arm.dof();
  if (ctx.scene.obstacles().empty()) return Vec::Zero(static_cast<Eigen::Index>(w.size()) * 2 * d);
  const Mat up = interpolate(ctx.gp, traj, spec, w);
  const std::size_t nb = ctx.arm.balls().size();
  if (frozen) require(frozen->size() == static_cast<std::size_t>(up.cols()) * nb, "frozen weight count mismatch");
  Mat g_up = Mat::Zero(2 * d, up.cols());
  for (Eigen::Index c = 0; c < up.cols(); ++c) {
    const double* fw = frozen ? frozen->data() + static_cast<std::size_t>(c) * nb : nullptr;
    const auto terms = ball_terms(ctx, up.col(c).head(d), up.col(c).tail(d), fw);
    if (phi_tol_deg >= 180.0) {
      for (const auto& t : terms) g_up.col(c).head(d) += t.joint_grad;
    } else {
      std::vector<Vec> grads;
      grads.reserve(terms.size());
      for (const auto& t : terms) grads.push_back(t.joint_grad);
      g_up.col(c).head(d) = accumulate_ball_gradients(std::move(grads), phi_tol_deg).total();
    }
  }
  return upsample_transpose_apply(ctx.gp, spec, w, g_up);
}

inline Vec obs_grad(const ObjectiveContext& ctx, const Trajectory& traj, const UpsampleSpec& spec,
                    double phi_tol_deg = 180.0) {
  return obs_grad(ctx, traj, Window::whole(traj.num_support()), spec, phi_tol_deg);
}

/// Which derivative of the arc-length weight the obstacle gradient carries.
/// `frozen` treats |J qdot| as a constant of the current iterate; `exact`
/// also differentiates it, so the gradient is the true derivative of obs_cost.
enum class WeightGradient { frozen, exact };

/// Gradient of one upsampled point's obstacle cost with respect to its
/// position (head) and velocity (tail), weights differentiated.
inline Vec exact_point_grad(const ObjectiveContext& ctx, const Vec& q, const Vec& qdot) {
  const int d = ctx.arm.dof();
  const auto kin = ball_kinematics(ctx.arm, q);
  const double eps = ctx.scene.epsilon();
  Vec g = Vec::Zero(2 * d);
  for (std::size_t i = 0; i < kin.centers.size(); ++i) {
    const DistanceQuery dq = signed_distance(ctx.scene, kin.centers[i]);
    const CollisionCost cc = collision_cost(dq.distance - ctx.arm.balls()[i].radius, eps);
    if (cc.cost == 0.0 && cc.dcost_dd == 0.0) continue;
    const Vec2 v = kin.jacobians[i] * qdot;
    const double speed = v.norm();
    const double w = std::max(speed, ctx.v_min);
    g.head(d) += w * cc.dcost_dd * (kin.jacobians[i].transpose() * dq.gradient);
    if (speed > ctx.v_min) {
      const Vec2 u = v / speed;
      g.head(d) += cc.cost * (ball_velocity_jacobian(ctx.arm, q, qdot, static_cast<int>(i)).transpose() * u);
      g.tail(d) += cc.cost * (kin.jacobians[i].transpose() * u);
    }
  }
  return g;
}

/// Exact obstacle gradient over a window's free states.
inline Vec obs_grad_exact(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w,
                          const UpsampleSpec& spec) {
  const int d = ctx.arm.dof();
  if (ctx.scene.obstacles().empty()) return Vec::Zero(static_cast<Eigen::Index>(w.size()) * 2 * d);
  const Mat up = interpolate(ctx.gp, traj, spec, w);
  Mat g_up(2 * d, up.cols());
  for (Eigen::Index c = 0; c < up.cols(); ++c) g_up.col(c) = exact_point_grad(ctx, up.col(c).head(d), up.col(c).tail(d));
  return upsample_transpose_apply(ctx.gp, spec, w, g_up);
}

/// F = rho * F_gp + F_obs and its (frozen-weight) gradient over the window.
inline CostGrad total_cost_grad(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w, double rho,
                                const UpsampleSpec& spec, WeightGradient wg = WeightGradient::frozen) {
  require(rho > 0.0, "rho must be positive");
  CostGrad g = gp_cost_grad(ctx.gp, traj, w);
  g.cost = rho * g.cost + obs_cost(ctx, traj, w, spec);
  g.grad = rho * g.grad + (wg == WeightGradient::exact ? obs_grad_exact(ctx, traj, w, spec) : obs_grad(ctx, traj, w, spec));
  return g;
}

inline CostGrad total_cost_grad(const ObjectiveContext& ctx, const Trajectory& traj, double rho,
                                const UpsampleSpec& spec) {
  return total_cost_grad(ctx, traj, Window::whole(traj.num_support()), rho, spec);
}

inline double total_cost(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w, double rho,
                         const UpsampleSpec& spec) {
  return rho * gp_cost_grad(ctx.gp, traj, w).cost + obs_cost(ctx, traj, w, spec);
}

struct StuckPair {
  double time = 0.0;  // upsampled time stamp (s)
  int ball = 0;
  double angle_deg = 0.0;
};

struct StuckReport {
  bool is_stuck = false;
  double obs_cost = 0.0;
  double max_angle_deg = 0.0;
  std::vector<StuckPair> offending;
};

/// Stuck when the window is still costly (obs cost > obs_tol) and some ball
/// gradient opposes the accumulated gradient of the balls before it by more
/// than phi_tol_deg, at any upsampled state of the window.
inline StuckReport check_stuck(const ObjectiveContext& ctx, const Trajectory& traj, const Window& w,
                               double phi_tol_deg, double obs_tol, const UpsampleSpec& spec) {
  StuckReport r;
  if (ctx.scene.obstacles().empty()) return r;
  const Mat up = interpolate(ctx.gp, traj, spec, w);
  const auto pts = upsampled_points(ctx.gp, spec, w);
  const int d = ctx.arm.dof();
  std::vector<StuckPair> candidates;
  for (Eigen::Index c = 0; c < up.cols(); ++c) {
    const auto terms = ball_terms(ctx, up.col(c).head(d), up.col(c).tail(d));
    std::vector<Vec> grads;
    grads.reserve(terms.size());
    for (const auto& t : terms) {
      r.obs_cost += t.cost * t.weight;
      grads.push_back(t.joint_grad);
    }
    const auto rep = accumulate_ball_gradients(std::move(grads), 180.0);
    for (std::size_t i = 0; i < rep.angles_deg.size(); ++i) {
      const auto& a = rep.angles_deg[i];
      if (!a) continue;
      r.max_angle_deg = std::max(r.max_angle_deg, *a);
      if (*a > phi_tol_deg) candidates.push_back({pts[static_cast<std::size_t>(c)].time, static_cast<int>(i), *a});
    }
  }
  if (r.obs_cost > obs_tol && !candidates.empty()) {
    r.is_stuck = true;
    r.offending = std::move(candidates);
  }
  return r;
}

inline StuckReport check_stuck(const ObjectiveContext& ctx, const Trajectory& traj, double phi_tol_deg,
                               double obs_tol) {
  return check_stuck(ctx, traj, Window::whole(traj.num_support()), phi_tol_deg, obs_tol, ctx.spec);
}

}  // namespace narrowplan
