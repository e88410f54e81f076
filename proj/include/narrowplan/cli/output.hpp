#pragma once

#include <narrowplan/cli/scene_file.hpp>
#include <narrowplan/isago.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <variant>

namespace narrowplan::cli {

/// One line per state: index, time, positions, velocities.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const int d = traj.dof();
  os << "index,time";
  for (int j = 0; j < d; ++j) os << ",q" << j;
  for (int j = 0; j < d; ++j) os << ",qd" << j;
  os << '\n' << std::setprecision(10);
  for (int t = 0; t < traj.num_states(); ++t) {
    os << t << ',' << t * traj.dt();
    for (int j = 0; j < d; ++j) os << ',' << traj.position(t)[j];
    for (int j = 0; j < d; ++j) os << ',' << traj.velocity(t)[j];
    os << '\n';
  }
}

/// Key-value result record of one planning run.
inline void write_result(std::ostream& os, const std::string& task, PlanMode mode, std::uint64_t seed,
                         const PlanResult& r) {
  os << "task: " << task << '\n'
     << "mode: " << to_string(mode) << '\n'
     << "seed: " << seed << '\n'
     << "status: " << to_string(r.status) << '\n'
     << std::setprecision(8) << "obs_cost: " << r.final_obs_cost << '\n'
     << "time_s: " << r.wall_time << '\n'
     << "outer_rounds: " << r.counters.outer_rounds << '\n'
     << "penalty_rounds: " << r.counters.penalty_rounds << '\n'
     << "slices: " << r.counters.slices << '\n'
     << "agd_calls: " << r.counters.agd_calls << '\n'
     << "stoma_calls: " << r.counters.stoma_calls << '\n'
     << "stuck_events: " << r.counters.stuck_events << '\n'
     << "restarts: " << r.counters.restarts << '\n';
  if (!r.message.empty()) os << "message: " << r.message << '\n';
}

/// Standalone SVG: obstacles, the arm at every support state (start and goal
/// emphasized) and its balls, red where they penetrate, orange inside the
/// safety margin, green otherwise.
inline void render_svg(std::ostream& os, const ArmModel& arm, const Scene& scene, const Trajectory& traj) {
  // view box from the scene bounds clipped to the arm's reachable square
  const Vec2 c = arm.base().position;
  const double reach = arm.reach() * 1.1;
  Vec2 lo = (c.array() - reach).matrix().cwiseMax(scene.bounds().min);
  Vec2 hi = (c.array() + reach).matrix().cwiseMin(scene.bounds().max);
  for (const auto& o : scene.obstacles()) {
    if (const auto* ci = std::get_if<Circle>(&o)) {
      lo = lo.cwiseMin((ci->center.array() - ci->radius).matrix());
      hi = hi.cwiseMax((ci->center.array() + ci->radius).matrix());
    } else {
      const auto& b = std::get<Box>(o);
      lo = lo.cwiseMin(b.min);
      hi = hi.cwiseMax(b.max);
    }
  }
  const double scale = 600.0 / std::max(hi.x() - lo.x(), hi.y() - lo.y());
  auto X = [&](double x) { return (x - lo.x()) * scale; };
  auto Y = [&](double y) { return (hi.y() - y) * scale; };
  const double w = (hi.x() - lo.x()) * scale;
  const double h = (hi.y() - lo.y()) * scale;

  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& o : scene.obstacles()) {
    if (const auto* ci = std::get_if<Circle>(&o))
      os << "<circle cx=\"" << X(ci->center.x()) << "\" cy=\"" << Y(ci->center.y()) << "\" r=\""
         << ci->radius * scale << "\" fill=\"#555\"/>\n";
    else {
      const auto& b = std::get<Box>(o);
      os << "<rect x=\"" << X(b.min.x()) << "\" y=\"" << Y(b.max.y()) << "\" width=\"" << (b.max.x() - b.min.x()) * scale
         << "\" height=\"" << (b.max.y() - b.min.y()) * scale << "\" fill=\"#555\"/>\n";
    }
  }
  const int last = traj.num_states() - 1;
  for (int t = 0; t <= last; ++t) {
    const Vec q = traj.position(t);
    const auto joints = arm.joint_positions(q);
    const bool end = t == 0 || t == last;
    os << "<polyline fill=\"none\" stroke=\"" << (end ? "#1f4e9c" : "#7a9cd6") << "\" stroke-width=\""
       << (end ? 3.0 : 1.5) << "\" points=\"";
    for (const auto& p : joints) os << X(p.x()) << ',' << Y(p.y()) << ' ';
    os << "\"/>\n";
    const auto centers = ball_positions(arm, q);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const double dist = signed_distance(scene, centers[i]).distance - arm.balls()[i].radius;
      const char* color = dist < 0.0 ? "#d62728" : (dist < scene.epsilon() ? "#ff7f0e" : "#2ca02c");
      os << "<circle cx=\"" << X(centers[i].x()) << "\" cy=\"" << Y(centers[i].y()) << "\" r=\""
         << arm.balls()[i].radius * scale << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
    }
  }
  os << "</svg>\n";
}

inline void render_svg(const std::string& path, const ArmModel& arm, const Scene& scene, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  render_svg(out, arm, scene, traj);
}

}  // namespace narrowplan::cli
