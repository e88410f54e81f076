#pragma once

#include <narrowplan/common.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

namespace narrowplan {

/// Collision-check ball rigidly attached to a link.
struct Ccb {
  int link_index = 0;
  double offset_fraction = 0.0;  // position along the link, 0 = proximal joint, 1 = distal end
  double radius = 0.05;
};

struct BasePose {
  Vec2 position = Vec2::Zero();
  double orientation = 0.0;
};

struct JointLimit {
  double lo = -kPi;
  double hi = kPi;
};

/// Planar serial arm. Link j rotates about joint j; absolute link angle is
/// base orientation plus the sum of joint angles up to j.
///
/// Balls are kept in declaration order, which must run from base to end
/// effector: gradient accumulation over balls depends on that order.
class ArmModel {
 public:
  ArmModel(std::vector<double> link_lengths, BasePose base, std::vector<JointLimit> limits,
           std::vector<Ccb> balls)
      : links_(std::move(link_lengths)),
        base_(base),
        limits_(std::move(limits)),
        balls_(std::move(balls)) {
    require(!links_.empty(), "arm needs at least one link");
    for (double l : links_) require(l > 0.0, "link lengths must be positive");
    if (limits_.empty()) limits_.assign(links_.size(), JointLimit{});
    require(limits_.size() == links_.size(), "one joint limit per link required");
    for (const auto& lim : limits_) require(lim.lo < lim.hi, "joint limit lo must be below hi");
    int prev_link = 0;
    double prev_off = 0.0;
    for (const auto& b : balls_) {
      require(b.link_index >= 0 && b.link_index < dof(), "ball link index out of range");
      require(b.offset_fraction >= 0.0 && b.offset_fraction <= 1.0,
              "ball offset fraction must lie in [0,1]");
      require(b.radius > 0.0, "ball radius must be positive");
      require(b.link_index > prev_link || (b.link_index == prev_link && b.offset_fraction >= prev_off),
              "balls must be ordered from base to end effector");
      prev_link = b.link_index;
      prev_off = b.offset_fraction;
    }
  }

  /// Places balls at the given fractions on every link, all with one radius.
  static ArmModel with_uniform_balls(std::vector<double> link_lengths, BasePose base,
                                     std::vector<JointLimit> limits,
                                     const std::vector<double>& fractions, double radius) {
    std::vector<Ccb> balls;
    for (std::size_t j = 0; j < link_lengths.size(); ++j)
      for (double f : fractions) balls.push_back({static_cast<int>(j), f, radius});
    return ArmModel(std::move(link_lengths), base, std::move(limits), std::move(balls));
  }

  int dof() const { return static_cast<int>(links_.size()); }
  int num_balls() const { return static_cast<int>(balls_.size()); }
  const std::vector<double>& link_lengths() const { return links_; }
  const BasePose& base() const { return base_; }
  const std::vector<JointLimit>& joint_limits() const { return limits_; }
  const std::vector<Ccb>& balls() const { return balls_; }
  double reach() const {
    double r = 0.0;
    for (double l : links_) r += l;
    return r;
  }

  /// Joint positions p_0 (base) ... p_n (end effector).
  std::vector<Vec2> joint_positions(const Vec& q) const {
    check_dim(q);
    std::vector<Vec2> pts;
    pts.reserve(links_.size() + 1);
    Vec2 p = base_.position;
    double angle = base_.orientation;
    pts.push_back(p);
    for (int j = 0; j < dof(); ++j) {
      angle += q[j];
      p += links_[j] * Vec2(std::cos(angle), std::sin(angle));
      pts.push_back(p);
    }
    return pts;
  }

  /// Clamps each joint to its limits.
  void clamp(Eigen::Ref<Vec> q) const {
    for (int j = 0; j < dof(); ++j) q[j] = std::clamp(q[j], limits_[j].lo, limits_[j].hi);
  }

  void check_dim(const Vec& q) const {
    require(q.size() == dof(), "joint vector dimension does not match number of links");
  }

 private:
  std::vector<double> links_;
  BasePose base_;
  std::vector<JointLimit> limits_;
  std::vector<Ccb> balls_;
};

namespace detail {

inline Vec2 ball_center(const std::vector<Vec2>& joints, const Ccb& b) {
  const Vec2& a = joints[b.link_index];
  const Vec2& c = joints[b.link_index + 1];
  return a + b.offset_fraction * (c - a);
}

// d/dq_k of a point rigidly attached beyond joint k is the point's offset from
// joint k rotated by +90 degrees.
inline Vec2 perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }

}  // namespace detail

inline std::vector<Vec2> ball_positions(const ArmModel& arm, const Vec& q) {
  const auto joints = arm.joint_positions(q);
  std::vector<Vec2> out;
  out.reserve(arm.balls().size());
  for (const auto& b : arm.balls()) out.push_back(detail::ball_center(joints, b));
  return out;
}

/// 2 x D Jacobian of one ball center; columns for joints after the ball's link are zero.
inline Eigen::Matrix2Xd ball_jacobian(const ArmModel& arm, const Vec& q, int ball_index) {
  require(ball_index >= 0 && ball_index < arm.num_balls(), "ball index out of range");
  const auto joints = arm.joint_positions(q);
  const Ccb& b = arm.balls()[ball_index];
  const Vec2 x = detail::ball_center(joints, b);
  Eigen::Matrix2Xd J = Eigen::Matrix2Xd::Zero(2, arm.dof());
  for (int k = 0; k <= b.link_index; ++k) J.col(k) = detail::perp(x - joints[k]);
  return J;
}

/// Positions and Jacobians for every ball in one pass.
struct BallKinematics {
  std::vector<Vec2> centers;
  std::vector<Eigen::Matrix2Xd> jacobians;
};

/// 2 x D derivative of a ball's Cartesian velocity J(q) qdot with respect to q.
/// Column m is -sum_k qdot_k (x - p_max(k,m)) over joints k, m up to the ball's link.
inline Eigen::Matrix2Xd ball_velocity_jacobian(const ArmModel& arm, const Vec& q, const Vec& qdot, int ball_index) {
  require(ball_index >= 0 && ball_index < arm.num_balls(), "ball index out of range");
  require(qdot.size() == arm.dof(), "velocity dimension does not match number of links");
  const auto joints = arm.joint_positions(q);
  const Ccb& b = arm.balls()[static_cast<std::size_t>(ball_index)];
  const Vec2 x = detail::ball_center(joints, b);
  Eigen::Matrix2Xd D = Eigen::Matrix2Xd::Zero(2, arm.dof());
  for (int m = 0; m <= b.link_index; ++m)
    for (int k = 0; k <= b.link_index; ++k) D.col(m) -= qdot[k] * (x - joints[std::max(k, m)]);
  return D;
}

inline BallKinematics ball_kinematics(const ArmModel& arm, const Vec& q) {
  const auto joints = arm.joint_positions(q);
  BallKinematics out;
  out.centers.reserve(arm.balls().size());
  out.jacobians.reserve(arm.balls().size());
  for (const auto& b : arm.balls()) {
    const Vec2 x = detail::ball_center(joints, b);
    Eigen::Matrix2Xd J = Eigen::Matrix2Xd::Zero(2, arm.dof());
    for (int k = 0; k <= b.link_index; ++k) J.col(k) = detail::perp(x - joints[k]);
    out.centers.push_back(x);
    out.jacobians.push_back(std::move(J));
  }
  return out;
}

}  // namespace narrowplan
