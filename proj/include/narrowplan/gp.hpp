#pragma once

#include <narrowplan/common.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <random>
#include <vector>

namespace narrowplan {

/// Joint-space state: position and velocity of equal dimension.
struct State {
  Vec position;
  Vec velocity;
};

/// Contiguous range of free support indices [first, last], 1-based. States
/// first-1 and last+1 are fixed pads (possibly the global start/goal).
struct Window {
  int first = 1;
  int last = 1;
  int size() const { return last - first + 1; }
  int head_pad() const { return first - 1; }
  int tail_pad() const { return last + 1; }
  bool contains(int t) const { return t >= first && t <= last; }
  static Window whole(int num_support) { return {1, num_support}; }
  friend bool operator==(const Window&, const Window&) = default;
};

/// Support states plus fixed start (index 0) and goal (index N+1). States are
/// stored as columns [position; velocity] of a 2D x (N+2) matrix, so any
/// window of support states is one contiguous block.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(Mat states, double dt) : states_(std::move(states)), dt_(dt) {
    require(states_.rows() % 2 == 0 && states_.rows() > 0, "state rows must be 2*dof");
    require(states_.cols() >= 3, "trajectory needs at least one support state");
    require(dt_ > 0.0, "dt must be positive");
  }
  Trajectory(const State& start, const State& goal, const std::vector<State>& support, double dt)
      : dt_(dt) {
    require(!support.empty(), "trajectory needs at least one support state");
    require(dt > 0.0, "dt must be positive");
    const auto d = start.position.size();
    states_.resize(2 * d, static_cast<Eigen::Index>(support.size()) + 2);
    auto put = [&](Eigen::Index c, const State& s) {
      require(s.position.size() == d && s.velocity.size() == d, "state dimension mismatch");
      states_.col(c) << s.position, s.velocity;
    };
    put(0, start);
    for (std::size_t i = 0; i < support.size(); ++i) put(static_cast<Eigen::Index>(i) + 1, support[i]);
    put(states_.cols() - 1, goal);
  }

  int dof() const { return static_cast<int>(states_.rows() / 2); }
  int state_dim() const { return static_cast<int>(states_.rows()); }
  int num_support() const { return static_cast<int>(states_.cols()) - 2; }
  int num_states() const { return static_cast<int>(states_.cols()); }
  double dt() const { return dt_; }

  const Mat& states() const { return states_; }
  Mat& states() { return states_; }
  auto state(int t) const { return states_.col(t); }
  auto position(int t) const { return states_.col(t).head(dof()); }
  auto velocity(int t) const { return states_.col(t).tail(dof()); }
  State state_struct(int t) const { return {position(t), velocity(t)}; }

  /// Flattened free states of a window, state after state.
  Vec window_vector(const Window& w) const {
    check_window(w);
    const Mat block = states_.middleCols(w.first, w.size());
    return Eigen::Map<const Vec>(block.data(), block.size());
  }
  void set_window_vector(const Window& w, const Vec& x) {
    check_window(w);
    require(x.size() == static_cast<Eigen::Index>(w.size()) * state_dim(), "window vector size mismatch");
    states_.middleCols(w.first, w.size()) = Eigen::Map<const Mat>(x.data(), state_dim(), w.size());
  }
  Vec support_vector() const { return window_vector(Window::whole(num_support())); }
  void set_support_vector(const Vec& x) { set_window_vector(Window::whole(num_support()), x); }

  void check_window(const Window& w) const {
    require(w.first >= 1 && w.last <= num_support() && w.first <= w.last, "window out of range");
  }

 private:
  Mat states_;
  double dt_ = 1.0;
};

/// Per-interval interpolation counts; interval t lies between states t and t+1,
/// t = 0..N, so a trajectory with N support states has N+1 entries.
struct UpsampleSpec {
  std::vector<int> counts;

  static UpsampleSpec uniform(int num_support, int n) {
    return {std::vector<int>(static_cast<std::size_t>(num_support) + 1, n)};
  }
  int num_intervals() const { return static_cast<int>(counts.size()); }
};

struct Transition {
  Mat Phi;
  Mat Q;
};

/// Coefficients mapping deviations at (t, t+1) to the deviation at an
/// intermediate time: x(t + tau) = Lambda x_t + Psi x_{t+1}.
struct InterpCoeffs {
  Mat Lambda;
  Mat Psi;
};

/// Constant-velocity (white-noise-on-acceleration) Gauss-Markov prior with
/// fixed start and goal. The mean is the straight joint-space line.
class GpModel {
 public:
  GpModel(int dof, double dt, double qc, Trajectory mean)
      : dof_(dof), dt_(dt), qc_(qc), mean_(std::move(mean)) {
    require(dof_ > 0, "dof must be positive");
    require(dt_ > 0.0, "dt must be positive");
    require(qc_ > 0.0, "qc must be positive");
  }

  int dof() const { return dof_; }
  int state_dim() const { return 2 * dof_; }
  double dt() const { return dt_; }
  double qc() const { return qc_; }
  int num_support() const { return mean_.num_support(); }
  const Trajectory& mean() const { return mean_; }

  /// Mean state at continuous time (0 = start state).
  Vec mean_at(double time) const {
    Vec s(state_dim());
    s << mean_.position(0) + time * mean_.velocity(0), mean_.velocity(0);
    return s;
  }

  /// 2x2 coefficient patterns; full matrices are these Kronecker I_D.
  static Eigen::Matrix2d phi2(double tau) { return (Eigen::Matrix2d() << 1.0, tau, 0.0, 1.0).finished(); }
  Eigen::Matrix2d q2(double tau) const {
    return qc_ * (Eigen::Matrix2d() << tau * tau * tau / 3.0, tau * tau / 2.0, tau * tau / 2.0, tau).finished();
  }
  Eigen::Matrix2d q2_inverse(double tau) const {
    return (1.0 / qc_) *
           (Eigen::Matrix2d() << 12.0 / (tau * tau * tau), -6.0 / (tau * tau), -6.0 / (tau * tau), 4.0 / tau)
               .finished();
  }

  Mat expand(const Eigen::Matrix2d& a) const {
    Mat m = Mat::Zero(state_dim(), state_dim());
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) m.block(i * dof_, j * dof_, dof_, dof_).diagonal().setConstant(a(i, j));
    return m;
  }

  Eigen::Matrix2d lambda2(int n, int s) const {
    const double tau = dt_ * s / (n + 1);
    return phi2(tau) - psi2(n, s) * phi2(dt_);
  }
  Eigen::Matrix2d psi2(int n, int s) const {
    const double tau = dt_ * s / (n + 1);
    return q2(tau) * phi2(dt_ - tau).transpose() * q2_inverse(dt_);
  }

 private:
  int dof_;
  double dt_;
  double qc_;
  Trajectory mean_;
};

/// Builds the prior whose mean moves from start to goal position at constant
/// velocity over total_time; start/goal velocities are set to that velocity.
inline GpModel build_gp(const State& start, const State& goal, int num_support, double total_time, double qc) {
  require(num_support >= 1, "number of support states must be at least 1");
  require(total_time > 0.0, "total time must be positive");
  require(qc > 0.0, "qc must be positive");
  require(start.position.size() == goal.position.size() && start.position.size() > 0,
          "start and goal dimensions must match");
  const int d = static_cast<int>(start.position.size());
  const double dt = total_time / (num_support + 1);
  const Vec v = (goal.position - start.position) / total_time;
  Mat states(2 * d, num_support + 2);
  for (int t = 0; t < num_support + 2; ++t) {
    states.col(t) << start.position + (t * dt) * v, v;
  }
  states.col(num_support + 1).head(d) = goal.position;
  return GpModel(d, dt, qc, Trajectory(std::move(states), dt));
}

inline Transition transition(const GpModel& gp, double tau) {
  require(tau > 0.0, "tau must be positive");
  return {gp.expand(GpModel::phi2(tau)), gp.expand(gp.q2(tau))};
}

inline InterpCoeffs interp_coeffs(const GpModel& gp, int n, int s) {
  require(n >= 1 && s >= 1 && s <= n, "interpolation index out of range");
  return {gp.expand(gp.lambda2(n, s)), gp.expand(gp.psi2(n, s))};
}

struct CostGrad {
  double cost = 0.0;
  Vec grad;
};

namespace detail {
inline void check_traj(const GpModel& gp, const Trajectory& traj) {
  require(traj.dof() == gp.dof(), "trajectory dof does not match prior");
  require(traj.num_support() == gp.num_support(), "trajectory length does not match prior");
}
}  // namespace detail

/// Prior cost of a window in factor form: sum over consecutive pairs
/// (first-1 -> first ... last -> last+1) of 1/2 |Phi x_t - x_{t+1}|^2_{Q^-1},
/// x being deviation from the mean. Gradient is over the window's free states.
inline CostGrad gp_cost_grad(const GpModel& gp, const Trajectory& traj, const Window& w) {
  detail::check_traj(gp, traj);
  traj.check_window(w);
  const int sd = gp.state_dim();
  const int d = gp.dof();
  const Eigen::Matrix2d phi = GpModel::phi2(gp.dt());
  const Eigen::Matrix2d qinv = gp.q2_inverse(gp.dt());
  CostGrad out;
  out.grad = Vec::Zero(static_cast<Eigen::Index>(w.size()) * sd);
  const Mat& mean = gp.mean().states();
  for (int t = w.head_pad(); t <= w.last; ++t) {
    const Vec x0 = traj.state(t) - mean.col(t);
    const Vec x1 = traj.state(t + 1) - mean.col(t + 1);
    // e = Phi x0 - x1, blockwise over (position, velocity)
    Vec e(sd);
    e.head(d) = phi(0, 0) * x0.head(d) + phi(0, 1) * x0.tail(d) - x1.head(d);
    e.tail(d) = phi(1, 1) * x0.tail(d) - x1.tail(d);
    Vec qe(sd);
    qe.head(d) = qinv(0, 0) * e.head(d) + qinv(0, 1) * e.tail(d);
    qe.tail(d) = qinv(1, 0) * e.head(d) + qinv(1, 1) * e.tail(d);
    out.cost += 0.5 * e.dot(qe);
    if (w.contains(t)) {
      auto g = out.grad.segment(static_cast<Eigen::Index>(t - w.first) * sd, sd);
      g.head(d) += phi(0, 0) * qe.head(d);
      g.tail(d) += phi(0, 1) * qe.head(d) + phi(1, 1) * qe.tail(d);
    }
    if (w.contains(t + 1)) out.grad.segment(static_cast<Eigen::Index>(t + 1 - w.first) * sd, sd) -= qe;
  }
  return out;
}

inline CostGrad gp_cost_grad(const GpModel& gp, const Trajectory& traj) {
  return gp_cost_grad(gp, traj, Window::whole(traj.num_support()));
}

/// Dense precision over a window's free deviations and the linear term coming
/// from the (fixed) pad deviations: cost = 1/2 x'Px + b'x + const.
struct WindowPrecision {
  Mat P;
  Vec b;
};

inline WindowPrecision window_precision(const GpModel& gp, const Trajectory& traj, const Window& w) {
  detail::check_traj(gp, traj);
  traj.check_window(w);
  const int sd = gp.state_dim();
  const Mat phi = gp.expand(GpModel::phi2(gp.dt()));
  const Mat qinv = gp.expand(gp.q2_inverse(gp.dt()));
  const Mat diag = phi.transpose() * qinv * phi + qinv;
  const Mat off = -phi.transpose() * qinv;
  const int n = w.size();
  WindowPrecision wp{Mat::Zero(n * sd, n * sd), Vec::Zero(n * sd)};
  for (int i = 0; i < n; ++i) {
    wp.P.block(i * sd, i * sd, sd, sd) = diag;
    if (i + 1 < n) {
      wp.P.block(i * sd, (i + 1) * sd, sd, sd) = off;
      wp.P.block((i + 1) * sd, i * sd, sd, sd) = off.transpose();
    }
  }
  const Mat& mean = gp.mean().states();
  const Vec head = traj.state(w.head_pad()) - mean.col(w.head_pad());
  const Vec tail = traj.state(w.tail_pad()) - mean.col(w.tail_pad());
  wp.b.head(sd) -= qinv * phi * head;
  wp.b.tail(sd) -= phi.transpose() * qinv * tail;
  return wp;
}

/// Draws trajectories from the prior conditioned on the window's pad states.
/// States outside the window are copied from `traj`.
template <class Rng>
std::vector<Trajectory> sample(const GpModel& gp, const Trajectory& traj, const Window& w, int count, Rng& rng) {
  require(count >= 1, "sample count must be at least 1");
  const WindowPrecision wp = window_precision(gp, traj, w);
  const Eigen::LLT<Mat> llt(wp.P);
  require(llt.info() == Eigen::Success, "prior precision is not positive definite");
  const Vec cond_mean = gp.mean().window_vector(w) + llt.solve(-wp.b);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Vec z(cond_mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    // P = L L' => L^-T z has covariance P^-1
    const Vec x = cond_mean + llt.matrixU().solve(z);
    Trajectory s = traj;
    s.set_window_vector(w, x);
    out.push_back(std::move(s));
  }
  return out;
}

/// Whole-trajectory sampling: boundaries fixed at the prior's start and goal.
template <class Rng>
std::vector<Trajectory> sample(const GpModel& gp, int count, Rng& rng) {
  return sample(gp, gp.mean(), Window::whole(gp.num_support()), count, rng);
}

/// One entry of an upsampled trajectory: the support/pad state itself when
/// sub == 0, otherwise interpolated point sub of count inside interval.
struct UpsampledPoint {
  int interval = 0;
  int sub = 0;
  int count = 0;
  double time = 0.0;
};

/// Upsampled point layout over the states head_pad..tail_pad of a window.
inline std::vector<UpsampledPoint> upsampled_points(const GpModel& gp, const UpsampleSpec& spec, const Window& w) {
  require(spec.num_intervals() == gp.num_support() + 1, "upsample spec length must be N+1");
  std::vector<UpsampledPoint> pts;
  for (int t = w.head_pad(); t < w.tail_pad(); ++t) {
    const int n = spec.counts[static_cast<std::size_t>(t)];
    require(n >= 0, "interpolation counts must be non-negative");
    pts.push_back({t, 0, n, t * gp.dt()});
    for (int s = 1; s <= n; ++s) pts.push_back({t, s, n, (t + static_cast<double>(s) / (n + 1)) * gp.dt()});
  }
  pts.push_back({w.tail_pad(), 0, 0, w.tail_pad() * gp.dt()});
  return pts;
}

/// Sparse upsampling matrix over the states head_pad..tail_pad of a window:
/// identity rows at support times, [Lambda Psi] rows in between.
inline Eigen::SparseMatrix<double> upsample_matrix(const GpModel& gp, const UpsampleSpec& spec, const Window& w) {
  const auto pts = upsampled_points(gp, spec, w);
  const int sd = gp.state_dim();
  const int d = gp.dof();
  const int base = w.head_pad();
  const int cols = (w.tail_pad() - base + 1) * sd;
  std::vector<Eigen::Triplet<double>> trips;
  auto put_block = [&](int row0, int col0, const Eigen::Matrix2d& a) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (a(i, j) != 0.0)
          for (int k = 0; k < d; ++k) trips.emplace_back(row0 + i * d + k, col0 + j * d + k, a(i, j));
  };
  for (std::size_t r = 0; r < pts.size(); ++r) {
    const auto& p = pts[r];
    const int row0 = static_cast<int>(r) * sd;
    const int col0 = (p.interval - base) * sd;
    if (p.sub == 0) {
      put_block(row0, col0, Eigen::Matrix2d::Identity());
    } else {
      put_block(row0, col0, gp.lambda2(p.count, p.sub));
      put_block(row0, col0 + sd, gp.psi2(p.count, p.sub));
    }
  }
  Eigen::SparseMatrix<double> M(static_cast<Eigen::Index>(pts.size()) * sd, cols);
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

inline Eigen::SparseMatrix<double> upsample_matrix(const GpModel& gp, const UpsampleSpec& spec) {
  return upsample_matrix(gp, spec, Window::whole(gp.num_support()));
}

/// Upsampled states (columns) of a window: mu_up + M (theta - mu), including pads.
inline Mat interpolate(const GpModel& gp, const Trajectory& traj, const UpsampleSpec& spec, const Window& w) {
  detail::check_traj(gp, traj);
  const auto pts = upsampled_points(gp, spec, w);
  const int d = gp.dof();
  const Mat& mean = gp.mean().states();
  Mat out(gp.state_dim(), static_cast<Eigen::Index>(pts.size()));
  for (std::size_t r = 0; r < pts.size(); ++r) {
    const auto& p = pts[r];
    const auto c = static_cast<Eigen::Index>(r);
    if (p.sub == 0) {
      out.col(c) = traj.state(p.interval);
      continue;
    }
    const Eigen::Matrix2d lam = gp.lambda2(p.count, p.sub);
    const Eigen::Matrix2d psi = gp.psi2(p.count, p.sub);
    const Vec x0 = traj.state(p.interval) - mean.col(p.interval);
    const Vec x1 = traj.state(p.interval + 1) - mean.col(p.interval + 1);
    Vec dev(gp.state_dim());
    dev.head(d) = lam(0, 0) * x0.head(d) + lam(0, 1) * x0.tail(d) + psi(0, 0) * x1.head(d) + psi(0, 1) * x1.tail(d);
    dev.tail(d) = lam(1, 0) * x0.head(d) + lam(1, 1) * x0.tail(d) + psi(1, 0) * x1.head(d) + psi(1, 1) * x1.tail(d);
    out.col(c) = gp.mean_at(p.time) + dev;
  }
  return out;
}

inline Mat interpolate(const GpModel& gp, const Trajectory& traj, const UpsampleSpec& spec) {
  return interpolate(gp, traj, spec, Window::whole(traj.num_support()));
}

/// M' g for per-point gradients g (columns, one per upsampled point), restricted
/// to the window's free states. Equivalent to the sparse product without
/// building M.
inline Vec upsample_transpose_apply(const GpModel& gp, const UpsampleSpec& spec, const Window& w, const Mat& g_up) {
  const auto pts = upsampled_points(gp, spec, w);
  require(g_up.cols() == static_cast<Eigen::Index>(pts.size()) && g_up.rows() == gp.state_dim(),
          "upsampled gradient shape mismatch");
  const int sd = gp.state_dim();
  const int d = gp.dof();
  Vec out = Vec::Zero(static_cast<Eigen::Index>(w.size()) * sd);
  auto add = [&](int state, const Eigen::Matrix2d& a, const Vec& g) {
    if (!w.contains(state)) return;
    auto seg = out.segment(static_cast<Eigen::Index>(state - w.first) * sd, sd);
    // (a kron I)' g
    seg.head(d) += a(0, 0) * g.head(d) + a(1, 0) * g.tail(d);
    seg.tail(d) += a(0, 1) * g.head(d) + a(1, 1) * g.tail(d);
  };
  for (std::size_t r = 0; r < pts.size(); ++r) {
    const auto& p = pts[r];
    const Vec g = g_up.col(static_cast<Eigen::Index>(r));
    if (p.sub == 0) {
      add(p.interval, Eigen::Matrix2d::Identity(), g);
    } else {
      add(p.interval, gp.lambda2(p.count, p.sub), g);
      add(p.interval + 1, gp.psi2(p.count, p.sub), g);
    }
  }
  return out;
}

}  // namespace narrowplan
