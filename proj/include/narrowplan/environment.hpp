#pragma once

#include <narrowplan/common.hpp>

#include <limits>
#include <optional>
#include <type_traits>
#include <variant>
#include <vector>

namespace narrowplan {

struct Circle {
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
};

/// Axis-aligned box given by its min and max corners.
struct Box {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Ones();
};

using Obstacle = std::variant<Circle, Box>;

struct Bounds {
  Vec2 min = Vec2(-10.0, -10.0);
  Vec2 max = Vec2(10.0, 10.0);
  bool contains(const Vec2& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct DistanceQuery {
  double distance = std::numeric_limits<double>::infinity();
  Vec2 gradient = Vec2::Zero();
  std::optional<int> obstacle_id;
};

namespace detail {

inline DistanceQuery circle_distance(const Circle& c, const Vec2& p) {
  const Vec2 d = p - c.center;
  const double r = d.norm();
  DistanceQuery q;
  q.distance = r - c.radius;
  q.gradient = r > 0.0 ? Vec2(d / r) : Vec2(1.0, 0.0);
  return q;
}

inline DistanceQuery box_distance(const Box& b, const Vec2& p) {
  DistanceQuery q;
  const Vec2 clamped = p.cwiseMax(b.min).cwiseMin(b.max);
  const Vec2 out = p - clamped;
  const double outside = out.norm();
  if (outside > 0.0) {
    q.distance = outside;
    q.gradient = out / outside;
    return q;
  }
  // Inside or on the boundary: the nearest face decides. Faces are scanned
  // in the order -x, +x, -y, +y; the first minimum wins.
  const double gaps[4] = {p.x() - b.min.x(), b.max.x() - p.x(), p.y() - b.min.y(), b.max.y() - p.y()};
  const Vec2 normals[4] = {Vec2(-1, 0), Vec2(1, 0), Vec2(0, -1), Vec2(0, 1)};
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (gaps[i] < gaps[best]) best = i;
  q.distance = -gaps[best];
  q.gradient = normals[best];
  return q;
}

}  // namespace detail

/// Primitive-obstacle scene with an exact signed distance field.
class Scene {
 public:
  Scene() = default;
  Scene(std::vector<Obstacle> obstacles, double epsilon, Bounds bounds = {})
      : obstacles_(std::move(obstacles)), epsilon_(epsilon), bounds_(bounds) {
    require(epsilon_ > 0.0, "epsilon must be positive");
  }

  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  double epsilon() const { return epsilon_; }
  const Bounds& bounds() const { return bounds_; }

  Scene with_obstacle(Obstacle o) const {
    Scene s = *this;
    s.obstacles_.push_back(std::move(o));
    return s;
  }

 private:
  std::vector<Obstacle> obstacles_;
  double epsilon_ = 0.1;
  Bounds bounds_;
};

/// Minimum signed distance over all obstacles, negative inside. Ties go to the
/// lowest obstacle id. An empty scene reports +inf with a zero gradient.
inline DistanceQuery signed_distance(const Scene& scene, const Vec2& p) {
  DistanceQuery best;
  for (std::size_t i = 0; i < scene.obstacles().size(); ++i) {
    const DistanceQuery q = std::visit(
        [&](const auto& o) {
          if constexpr (std::is_same_v<std::decay_t<decltype(o)>, Circle>)
            return detail::circle_distance(o, p);
          else
            return detail::box_distance(o, p);
        },
        scene.obstacles()[i]);
    if (!best.obstacle_id || q.distance < best.distance) {
      best = q;
      best.obstacle_id = static_cast<int>(i);
    }
  }
  return best;
}

struct CollisionCost {
  double cost = 0.0;
  double dcost_dd = 0.0;
};

/// Piecewise hinge cost on signed distance: linear inside obstacles,
/// quadratic inside the safety margin, zero beyond it. C1 at 0 and epsilon.
inline CollisionCost collision_cost(double d, double epsilon) {
  if (d < 0.0) return {-d + 0.5 * epsilon, -1.0};
  if (d <= epsilon) {
    const double e = d - epsilon;
    return {e * e / (2.0 * epsilon), e / epsilon};
  }
  return {0.0, 0.0};
}

}  // namespace narrowplan
