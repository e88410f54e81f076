#pragma once

#include <narrowplan/common.hpp>
#include <narrowplan/environment.hpp>
#include <narrowplan/gp.hpp>
#include <narrowplan/isago.hpp>
#include <narrowplan/kinematics.hpp>

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace narrowplan::cli {

inline constexpr int kSceneFormatVersion = 1;

/// Scene file problem, carrying the offending line when known.
class SceneError : public std::runtime_error {
 public:
  SceneError(const std::string& source, int line, const std::string& msg)
      : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Discretization shared by every task of a scene unless a task overrides it.
struct PlannerSettings {
  int support_points = 12;
  int interp_points = 8;
  double total_time = 1.0;  // s
  double qc = 1.0;
};

enum class TaskClass { A, B, C };

inline const char* to_string(TaskClass c) {
  switch (c) {
    case TaskClass::A: return "A";
    case TaskClass::B: return "B";
    case TaskClass::C: return "C";
  }
  return "?";
}

/// Class thresholds on the number of (support state, ball) pairs that
/// penetrate an obstacle along the straight-line initial trajectory.
inline TaskClass classify_count(int colliding_pairs) {
  if (colliding_pairs <= 8) return TaskClass::A;
  if (colliding_pairs <= 15) return TaskClass::B;
  return TaskClass::C;
}

struct TaskSpec {
  std::string id;
  TaskClass task_class = TaskClass::A;
  bool class_pinned = false;  // label given in the file rather than derived
  int colliding_pairs = 0;
  Vec start;
  Vec goal;
  int repeats = 5;
  std::optional<double> total_time;
  std::optional<double> qc;
  bool boundary_collision = false;  // start or goal within the safety margin
};

struct SceneFile {
  std::string source;
  ArmModel arm;
  Scene scene;
  PlannerSettings planner;
  std::vector<TaskSpec> tasks;

  const TaskSpec& task(const std::string& id) const {
    for (const auto& t : tasks)
      if (t.id == id) return t;
    throw InvalidArgument("unknown task id: " + id);
  }

  PlanProblem problem(const TaskSpec& t) const {
    PlanProblem p{arm, scene, t.start, t.goal};
    p.num_support = planner.support_points;
    p.n_ip = planner.interp_points;
    p.total_time = t.total_time.value_or(planner.total_time);
    p.qc = t.qc.value_or(planner.qc);
    return p;
  }
};

/// Penetrating (support state, ball) pairs on the straight-line trajectory.
inline int count_colliding_pairs(const ArmModel& arm, const Scene& scene, const Vec& start, const Vec& goal,
                                 int support_points) {
  int count = 0;
  for (int t = 1; t <= support_points; ++t) {
    const double s = static_cast<double>(t) / (support_points + 1);
    const Vec q = (1.0 - s) * start + s * goal;
    const auto centers = ball_positions(arm, q);
    for (std::size_t i = 0; i < centers.size(); ++i)
      if (signed_distance(scene, centers[i]).distance - arm.balls()[i].radius < 0.0) ++count;
  }
  return count;
}

namespace detail {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    const int line = n.IsDefined() && n.Mark().line >= 0 ? n.Mark().line + 1 : 0;
    throw SceneError(source_, line, msg);
  }

  void expect_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void only_keys(const YAML::Node& n, const std::string& what, std::initializer_list<const char*> allowed) const {
    expect_map(n, what);
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, "unknown field '" + what + "." + key + "'");
    }
  }

  YAML::Node required(const YAML::Node& n, const char* key, const std::string& what) const {
    const YAML::Node v = n[key];
    if (!v.IsDefined() || v.IsNull()) fail(n, "missing field '" + what + "." + key + "'");
    return v;
  }

  double number(const YAML::Node& n, const std::string& field) const {
    if (!n.IsScalar()) fail(n, "field '" + field + "' must be a number");
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, "field '" + field + "' must be a number");
    }
  }

  int integer(const YAML::Node& n, const std::string& field) const {
    if (!n.IsScalar()) fail(n, "field '" + field + "' must be an integer");
    try {
      return n.as<int>();
    } catch (const YAML::Exception&) {
      fail(n, "field '" + field + "' must be an integer");
    }
  }

  std::string text(const YAML::Node& n, const std::string& field) const {
    if (!n.IsScalar()) fail(n, "field '" + field + "' must be a string");
    return n.as<std::string>();
  }

  std::vector<double> numbers(const YAML::Node& n, const std::string& field, std::size_t expected = 0) const {
    if (!n.IsSequence()) fail(n, "field '" + field + "' must be a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(number(n[i], field + "[" + std::to_string(i) + "]"));
    if (expected && out.size() != expected)
      fail(n, "field '" + field + "' needs " + std::to_string(expected) + " entries, got " + std::to_string(out.size()));
    return out;
  }

  Vec2 point(const YAML::Node& n, const std::string& field) const {
    const auto v = numbers(n, field, 2);
    return {v[0], v[1]};
  }

  double positive(const YAML::Node& n, const std::string& field) const {
    const double v = number(n, field);
    if (!(v > 0.0)) fail(n, "field '" + field + "' must be positive");
    return v;
  }

 private:
  std::string source_;
};

inline ArmModel read_arm(const Reader& r, const YAML::Node& n) {
  r.only_keys(n, "arm", {"base", "links", "joint_limits", "balls", "balls_per_link", "ball_radius"});
  const YAML::Node links_node = r.required(n, "links", "arm");
  if (!links_node.IsSequence() || links_node.size() == 0) r.fail(links_node, "field 'arm.links' must be a non-empty list");
  std::vector<double> links;
  for (std::size_t j = 0; j < links_node.size(); ++j)
    links.push_back(r.positive(links_node[j], "arm.links[" + std::to_string(j) + "]"));
  const auto dof = links.size();

  BasePose base;
  if (n["base"]) {
    const auto b = r.numbers(n["base"], "arm.base", 3);
    base.position = Vec2(b[0], b[1]);
    base.orientation = b[2];
  }

  std::vector<JointLimit> limits;
  if (const YAML::Node lim = n["joint_limits"]) {
    if (!lim.IsSequence() || lim.size() != dof) r.fail(lim, "field 'arm.joint_limits' needs one [lo, hi] pair per link");
    for (std::size_t j = 0; j < dof; ++j) {
      const std::string f = "arm.joint_limits[" + std::to_string(j) + "]";
      const auto v = r.numbers(lim[j], f, 2);
      if (!(v[0] < v[1])) r.fail(lim[j], "field '" + f + "' needs lo < hi");
      limits.push_back({v[0], v[1]});
    }
  }

  std::vector<Ccb> balls;
  if (const YAML::Node bn = n["balls"]) {
    if (n["balls_per_link"]) r.fail(bn, "give either 'arm.balls' or 'arm.balls_per_link', not both");
    if (!bn.IsSequence()) r.fail(bn, "field 'arm.balls' must be a list");
    for (std::size_t i = 0; i < bn.size(); ++i) {
      const std::string f = "arm.balls[" + std::to_string(i) + "]";
      r.only_keys(bn[i], f, {"link", "offset", "radius"});
      Ccb b;
      b.link_index = r.integer(r.required(bn[i], "link", f), f + ".link");
      if (b.link_index < 0 || b.link_index >= static_cast<int>(dof)) r.fail(bn[i]["link"], "field '" + f + ".link' out of range");
      b.offset_fraction = r.number(r.required(bn[i], "offset", f), f + ".offset");
      if (b.offset_fraction < 0.0 || b.offset_fraction > 1.0) r.fail(bn[i]["offset"], "field '" + f + ".offset' must lie in [0, 1]");
      b.radius = r.positive(r.required(bn[i], "radius", f), f + ".radius");
      balls.push_back(b);
    }
  } else {
    const int per_link = n["balls_per_link"] ? r.integer(n["balls_per_link"], "arm.balls_per_link") : 4;
    if (per_link < 1) r.fail(n["balls_per_link"], "field 'arm.balls_per_link' must be at least 1");
    const double radius = n["ball_radius"] ? r.positive(n["ball_radius"], "arm.ball_radius") : 0.05;
    for (std::size_t j = 0; j < dof; ++j)
      for (int k = 1; k <= per_link; ++k) balls.push_back({static_cast<int>(j), static_cast<double>(k) / per_link, radius});
  }
  try {
    return ArmModel(std::move(links), base, std::move(limits), std::move(balls));
  } catch (const InvalidArgument& e) {
    r.fail(n, e.what());
  }
}

inline Scene read_scene(const Reader& r, const YAML::Node& n) {
  r.only_keys(n, "scene", {"epsilon", "bounds", "obstacles"});
  const double eps = n["epsilon"] ? r.positive(n["epsilon"], "scene.epsilon") : 0.1;
  Bounds bounds;
  if (const YAML::Node b = n["bounds"]) {
    r.only_keys(b, "scene.bounds", {"min", "max"});
    bounds.min = r.point(r.required(b, "min", "scene.bounds"), "scene.bounds.min");
    bounds.max = r.point(r.required(b, "max", "scene.bounds"), "scene.bounds.max");
    if (!(bounds.min.array() < bounds.max.array()).all()) r.fail(b, "field 'scene.bounds' needs min < max");
  }
  std::vector<Obstacle> obstacles;
  if (const YAML::Node obs = n["obstacles"]) {
    if (!obs.IsSequence()) r.fail(obs, "field 'scene.obstacles' must be a list");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::string f = "scene.obstacles[" + std::to_string(i) + "]";
      const YAML::Node o = obs[i];
      r.expect_map(o, f);
      const std::string type = r.text(r.required(o, "type", f), f + ".type");
      if (type == "circle") {
        r.only_keys(o, f, {"type", "center", "radius"});
        obstacles.push_back(Circle{r.point(r.required(o, "center", f), f + ".center"),
                                   r.positive(r.required(o, "radius", f), f + ".radius")});
      } else if (type == "box") {
        r.only_keys(o, f, {"type", "min", "max"});
        Box b{r.point(r.required(o, "min", f), f + ".min"), r.point(r.required(o, "max", f), f + ".max")};
        if (!(b.min.array() < b.max.array()).all()) r.fail(o, "field '" + f + "' needs min < max");
        obstacles.push_back(b);
      } else {
        r.fail(o["type"], "field '" + f + ".type' must be 'circle' or 'box'");
      }
    }
  }
  return Scene(std::move(obstacles), eps, bounds);
}

inline PlannerSettings read_planner(const Reader& r, const YAML::Node& n) {
  PlannerSettings p;
  if (!n) return p;
  r.only_keys(n, "planner", {"support_points", "interp_points", "total_time", "qc"});
  if (n["support_points"]) p.support_points = r.integer(n["support_points"], "planner.support_points");
  if (n["interp_points"]) p.interp_points = r.integer(n["interp_points"], "planner.interp_points");
  if (n["total_time"]) p.total_time = r.positive(n["total_time"], "planner.total_time");
  if (n["qc"]) p.qc = r.positive(n["qc"], "planner.qc");
  if (p.support_points < 1) r.fail(n["support_points"], "field 'planner.support_points' must be at least 1");
  if (p.interp_points < 0) r.fail(n["interp_points"], "field 'planner.interp_points' must be non-negative");
  return p;
}

inline Vec read_config(const Reader& r, const YAML::Node& n, const std::string& field, const ArmModel& arm) {
  const auto v = r.numbers(n, field, static_cast<std::size_t>(arm.dof()));
  Vec q = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  for (int j = 0; j < arm.dof(); ++j) {
    const auto& lim = arm.joint_limits()[static_cast<std::size_t>(j)];
    if (q[j] < lim.lo || q[j] > lim.hi) r.fail(n, "field '" + field + "' violates the joint limits");
  }
  return q;
}

inline TaskSpec read_task(const Reader& r, const YAML::Node& n, std::size_t index, const ArmModel& arm,
                          const Scene& scene, const PlannerSettings& planner) {
  const std::string f = "tasks[" + std::to_string(index) + "]";
  r.only_keys(n, f, {"id", "class", "start", "goal", "repeats", "total_time", "qc"});
  TaskSpec t;
  t.id = r.text(r.required(n, "id", f), f + ".id");
  if (t.id.empty() || t.id.find_first_of(",\n\"") != std::string::npos)
    r.fail(n["id"], "field '" + f + ".id' must be non-empty without commas, quotes or newlines");
  t.start = read_config(r, r.required(n, "start", f), f + ".start", arm);
  t.goal = read_config(r, r.required(n, "goal", f), f + ".goal", arm);
  if (n["repeats"]) {
    t.repeats = r.integer(n["repeats"], f + ".repeats");
    if (t.repeats < 1) r.fail(n["repeats"], "field '" + f + ".repeats' must be at least 1");
  }
  if (n["total_time"]) t.total_time = r.positive(n["total_time"], f + ".total_time");
  if (n["qc"]) t.qc = r.positive(n["qc"], f + ".qc");
  t.colliding_pairs = count_colliding_pairs(arm, scene, t.start, t.goal, planner.support_points);
  t.task_class = classify_count(t.colliding_pairs);
  if (const YAML::Node c = n["class"]) {
    const std::string label = r.text(c, f + ".class");
    if (label == "A") t.task_class = TaskClass::A;
    else if (label == "B") t.task_class = TaskClass::B;
    else if (label == "C") t.task_class = TaskClass::C;
    else r.fail(c, "field '" + f + ".class' must be A, B or C");
    t.class_pinned = true;
  }
  t.boundary_collision =
      configuration_in_collision(arm, scene, t.start) || configuration_in_collision(arm, scene, t.goal);
  return t;
}

}  // namespace detail

/// Parses a scene document. Lengths in meters, angles in radians, times in seconds.
inline SceneFile parse_scene(const std::string& text, const std::string& source = "<scene>") {
  const detail::Reader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw SceneError(source, e.mark.line >= 0 ? e.mark.line + 1 : 0, e.msg);
  }
  if (!root.IsMap()) throw SceneError(source, 0, "document must be a mapping");
  r.only_keys(root, "root", {"format_version", "arm", "scene", "planner", "tasks"});
  const int version = r.integer(r.required(root, "format_version", "root"), "format_version");
  if (version != kSceneFormatVersion)
    r.fail(root["format_version"], "unsupported format_version " + std::to_string(version));

  ArmModel arm = detail::read_arm(r, r.required(root, "arm", "root"));
  Scene scene = detail::read_scene(r, r.required(root, "scene", "root"));
  PlannerSettings planner = detail::read_planner(r, root["planner"]);
  std::vector<TaskSpec> tasks;
  const YAML::Node tn = r.required(root, "tasks", "root");
  if (!tn.IsSequence()) r.fail(tn, "field 'tasks' must be a list");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < tn.size(); ++i) {
    TaskSpec t = detail::read_task(r, tn[i], i, arm, scene, planner);
    if (!ids.insert(t.id).second) r.fail(tn[i]["id"], "duplicate task id '" + t.id + "'");
    tasks.push_back(std::move(t));
  }
  return {source, std::move(arm), std::move(scene), planner, std::move(tasks)};
}

inline SceneFile load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError(path, 0, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), path);
}

}  // namespace narrowplan::cli
