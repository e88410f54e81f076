#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <narrowplan/cli/scene_file.hpp>
#include <narrowplan/narrowplan.hpp>

#include <Eigen/Dense>

#include <complex>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

using namespace narrowplan;

inline std::string data_path(const std::string& name) { return std::string(NARROWPLAN_DATA_DIR) + "/" + name; }

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline ArmModel uniform_arm(std::vector<double> links, std::vector<double> fractions, double radius,
                            BasePose base = {}) {
  return ArmModel::with_uniform_balls(std::move(links), base, {}, fractions, radius);
}

/// Context around the straight line from start to goal.
inline ObjectiveContext line_context(ArmModel arm, Scene scene, const Vec& start, const Vec& goal, int n, double T,
                                     double qc, int n_ip) {
  const State s{start, Vec::Zero(start.size())};
  const State g{goal, Vec::Zero(goal.size())};
  return make_context(std::move(arm), std::move(scene), build_gp(s, g, n, T, qc), n_ip);
}

// ---------------------------------------------------------------------------
// Forward kinematics oracle: complex chain product
// ---------------------------------------------------------------------------

inline std::vector<Vec2> complex_fk_balls(const ArmModel& arm, const Vec& q) {
  using C = std::complex<double>;
  std::vector<C> joints{C(arm.base().position.x(), arm.base().position.y())};
  C heading = std::polar(1.0, arm.base().orientation);
  for (int j = 0; j < arm.dof(); ++j) {
    heading *= std::polar(1.0, q[j]);
    joints.push_back(joints.back() + arm.link_lengths()[static_cast<std::size_t>(j)] * heading);
  }
  std::vector<Vec2> out;
  for (const auto& b : arm.balls()) {
    const C a = joints[static_cast<std::size_t>(b.link_index)];
    const C c = joints[static_cast<std::size_t>(b.link_index) + 1];
    const C p = a + b.offset_fraction * (c - a);
    out.emplace_back(p.real(), p.imag());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense constant-velocity kernel oracle (process started at rest deviation 0)
// ---------------------------------------------------------------------------

inline Mat phi_dense(int d, double tau) {
  Mat m = Mat::Identity(2 * d, 2 * d);
  m.block(0, d, d, d) = tau * Mat::Identity(d, d);
  return m;
}

inline Mat q_dense(int d, double qc, double tau) {
  Mat m(2 * d, 2 * d);
  const Mat I = Mat::Identity(d, d);
  m << tau * tau * tau / 3.0 * I, tau * tau / 2.0 * I, tau * tau / 2.0 * I, tau * I;
  return qc * m;
}

/// Cov(x(s), x(t)) of the deviation process pinned to zero at time 0.
inline Mat kernel_block(int d, double qc, double s, double t) {
  if (s >= t) return phi_dense(d, s - t) * q_dense(d, qc, t);
  return q_dense(d, qc, s) * phi_dense(d, t - s).transpose();
}

inline Mat kernel_matrix(int d, double qc, const std::vector<double>& times) {
  const int sd = 2 * d;
  const auto n = static_cast<Eigen::Index>(times.size());
  Mat K(n * sd, n * sd);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      K.block(i * sd, j * sd, sd, sd) = kernel_block(d, qc, times[static_cast<std::size_t>(i)], times[static_cast<std::size_t>(j)]);
  return K;
}

/// 1/2 x' K^-1 x over the deviations of states 1..N+1 (state 0 pinned).
inline double dense_prior_cost(const GpModel& gp, const Trajectory& traj) {
  const int d = gp.dof();
  const int n = traj.num_support();
  std::vector<double> times;
  for (int t = 1; t <= n + 1; ++t) times.push_back(t * gp.dt());
  const Mat K = kernel_matrix(d, gp.qc(), times);
  Vec x(static_cast<Eigen::Index>(n + 1) * 2 * d);
  for (int t = 1; t <= n + 1; ++t)
    x.segment(static_cast<Eigen::Index>(t - 1) * 2 * d, 2 * d) = traj.state(t) - gp.mean().state(t);
  return 0.5 * x.dot(K.ldlt().solve(x));
}

/// Conditional mean of the deviation at `time` given deviations at every
/// state 1..N+1, added to the prior mean.
inline Vec dense_interpolation(const GpModel& gp, const Trajectory& traj, double time) {
  const int d = gp.dof();
  const int n = traj.num_support();
  std::vector<double> times;
  for (int t = 1; t <= n + 1; ++t) times.push_back(t * gp.dt());
  const Mat K = kernel_matrix(d, gp.qc(), times);
  Mat k(2 * d, K.cols());
  for (std::size_t i = 0; i < times.size(); ++i)
    k.block(0, static_cast<Eigen::Index>(i) * 2 * d, 2 * d, 2 * d) = kernel_block(d, gp.qc(), time, times[i]);
  Vec x(K.cols());
  for (int t = 1; t <= n + 1; ++t)
    x.segment(static_cast<Eigen::Index>(t - 1) * 2 * d, 2 * d) = traj.state(t) - gp.mean().state(t);
  return gp.mean_at(time) + k * K.ldlt().solve(x);
}

/// Covariance of support state t given states 0 and N+1 pinned at the mean.
inline Mat dense_conditional_cov(const GpModel& gp, int t) {
  const int d = gp.dof();
  const int n = gp.num_support();
  const double tt = t * gp.dt();
  const double tg = (n + 1) * gp.dt();
  const Mat Ktt = kernel_block(d, gp.qc(), tt, tt);
  const Mat Ktg = kernel_block(d, gp.qc(), tt, tg);
  const Mat Kgg = kernel_block(d, gp.qc(), tg, tg);
  return Ktt - Ktg * Kgg.ldlt().solve(Ktg.transpose());
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

template <class F>
Vec central_difference(F&& f, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Relative error of the analytic penalized gradient against central
/// differences of rho F_gp + F_obs with the arc-length weights held at their
/// values on `traj`.
inline double frozen_gradient_error(const ObjectiveContext& ctx, const Trajectory& traj, double rho, double h) {
  const Window w = Window::whole(traj.num_support());
  const Vec g = total_cost_grad(ctx, traj, w, rho, ctx.spec).grad;
  const auto weights = arc_weights(ctx, traj, w, ctx.spec);
  Trajectory probe = traj;
  const Vec fd = central_difference(
      [&](const Vec& x) {
        probe.set_window_vector(w, x);
        return rho * gp_cost_grad(ctx.gp, probe, w).cost + obs_cost(ctx, probe, w, ctx.spec, &weights);
      },
      traj.window_vector(w), h);
  return (g - fd).norm() / std::max(fd.norm(), 1e-12);
}

// ---------------------------------------------------------------------------
// Hand-built stuck configurations
// ---------------------------------------------------------------------------

/// Arm whose first link carries balls at 1/4 and 3/4, second link a tip ball.
inline ArmModel opposition_arm() {
  return ArmModel({1.0, 0.6}, {}, {}, {{0, 0.25, 0.05}, {0, 0.75, 0.05}, {1, 1.0, 0.05}});
}

/// Posts below the inner ball and above the outer ball of a straight arm:
/// the two pushes give antiparallel torques on the first joint.
inline Scene opposition_scene() {
  return Scene({Circle{Vec2(0.25, -0.12), 0.1}, Circle{Vec2(0.75, 0.12), 0.1}}, 0.1);
}

/// One post below the outer ball only.
inline Scene aligned_scene() { return Scene({Circle{Vec2(0.75, -0.12), 0.1}}, 0.1); }

/// Motionless trajectory holding the straight configuration q = 0.
inline ObjectiveContext resting_context(const Scene& scene) {
  return line_context(opposition_arm(), scene, vec({0.0, 0.0}), vec({0.0, 0.0}), 4, 1.0, 1.0, 2);
}

/// Straight-line trajectory with seeded Gaussian noise on the support positions.
template <class Rng>
Trajectory jittered(const Trajectory& base, double sigma, Rng& rng) {
  Trajectory t = base;
  std::normal_distribution<double> nd(0.0, sigma);
  for (int k = 1; k <= t.num_support(); ++k)
    for (int j = 0; j < t.dof(); ++j) t.states()(j, k) += nd(rng);
  return t;
}

/// Straight-line task through the two-post gap of data/trap.yaml.
inline ObjectiveContext trap_context() {
  const cli::SceneFile f = cli::load_scene(data_path("trap.yaml"));
  return make_context(f.problem(f.task("gap")));
}

/// Trap start for repeat `s`: the line jittered by 0.01 rad with stream 1000+s.
/// The same stream continues into the solver under test.
inline Trajectory trap_start(const ObjectiveContext& ctx, std::mt19937_64& rng) {
  return jittered(ctx.gp.mean(), 0.01, rng);
}

}  // namespace testing_support
