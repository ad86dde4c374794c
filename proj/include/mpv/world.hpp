#ifndef MPV_WORLD_HPP_
#define MPV_WORLD_HPP_

// Deterministic kinematic traffic simulator.
//
// Both scenario families live on a periodic plane: the highway wraps along its
// length and the urban grid wraps in both axes, so routes never run out. All
// relative geometry goes through RoadNetwork::delta, which returns the
// shortest periodic displacement.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpv/action.hpp"
#include "mpv/geometry.hpp"

namespace mpv {

// ---------------------------------------------------------------------------
// Oriented footprints and the separating-axis overlap test.

struct Footprint {
  Vec2 center;
  double yaw = 0.0;
  double length = 0.0;
  double width = 0.0;
};

// True when the two rectangles overlap or touch. `eps` widens the touching
// tolerance to absorb rounding in the projections.
inline bool footprints_overlap(const Footprint& a, const Footprint& b, double eps = 1e-9) {
  const Vec2 d = b.center - a.center;
  const std::array<Vec2, 2> axes_a = {heading_vector(a.yaw - kPi / 2.0), heading_vector(a.yaw)};
  const std::array<Vec2, 2> axes_b = {heading_vector(b.yaw - kPi / 2.0), heading_vector(b.yaw)};
  auto radius = [](const std::array<Vec2, 2>& axes, double hw, double hl, Vec2 n) {
    return hw * std::abs(dot(axes[0], n)) + hl * std::abs(dot(axes[1], n));
  };
  for (const auto* axes : {&axes_a, &axes_b}) {
    for (const Vec2& n : *axes) {
      const double ra = radius(axes_a, a.width / 2.0, a.length / 2.0, n);
      const double rb = radius(axes_b, b.width / 2.0, b.length / 2.0, n);
      if (std::abs(dot(d, n)) > ra + rb + eps) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Road network.

enum class TurnKind { kNone, kStraight, kLeft, kRight };

struct Lane {
  int id = -1;
  std::vector<Vec2> points;
  std::vector<double> arc;  // cumulative length at each point
  double width_m = 3.5;
  double speed_limit = 8.0;
  bool connector = false;
  TurnKind turn = TurnKind::kNone;
  int junction = -1;  // junction this lane ends in (or, for connectors, lies inside)
  std::vector<int> successors;

  double length() const { return arc.back(); }

  void finalize() {
    arc.assign(points.size(), 0.0);
    for (std::size_t i = 1; i < points.size(); ++i) arc[i] = arc[i - 1] + norm(points[i] - points[i - 1]);
  }

  std::size_t segment_at(double s) const {
    auto it = std::upper_bound(arc.begin(), arc.end(), s);
    std::size_t i = it == arc.begin() ? 0 : static_cast<std::size_t>(it - arc.begin()) - 1;
    return std::min(i, points.size() - 2);
  }

  Vec2 point_at(double s) const {
    s = std::clamp(s, 0.0, length());
    const std::size_t i = segment_at(s);
    const double seg = arc[i + 1] - arc[i];
    const double t = seg > 0.0 ? (s - arc[i]) / seg : 0.0;
    return points[i] + t * (points[i + 1] - points[i]);
  }

  double heading_at(double s) const {
    const std::size_t i = segment_at(std::clamp(s, 0.0, length()));
    return yaw_of(points[i + 1] - points[i]);
  }
};

struct Junction {
  int id = -1;
  Vec2 center;
  std::vector<int> incoming;
  std::vector<int> outgoing;
};

struct LaneProjection {
  double s = 0.0;
  double distance = 0.0;
  bool past_end = false;
};

struct RoadNetwork {
  std::vector<Lane> lanes;
  std::vector<Junction> junctions;
  Vec2 period;  // 0 along an axis means no wrap

  static double wrap_delta(double d, double p) {
    if (p <= 0.0) return d;
    d = std::fmod(d, p);
    if (d >= p / 2.0) d -= p;
    if (d < -p / 2.0) d += p;
    return d;
  }

  static double wrap_coord(double v, double p) {
    if (p <= 0.0) return v;
    v = std::fmod(v, p);
    if (v < 0.0) v += p;
    if (v >= p) v = 0.0;
    return v;
  }

  // Shortest displacement from `from` to `to`.
  Vec2 delta(Vec2 from, Vec2 to) const {
    return {wrap_delta(to.x - from.x, period.x), wrap_delta(to.y - from.y, period.y)};
  }

  Vec2 wrap(Vec2 p) const { return {wrap_coord(p.x, period.x), wrap_coord(p.y, period.y)}; }

  LaneProjection project(const Lane& lane, Vec2 p) const {
    LaneProjection best{0.0, std::numeric_limits<double>::infinity(), false};
    for (std::size_t i = 0; i + 1 < lane.points.size(); ++i) {
      const Vec2 a = lane.points[i];
      const Vec2 ab = lane.points[i + 1] - a;
      const Vec2 ap = delta(a, p);
      const double len2 = dot(ab, ab);
      const double t = len2 > 0.0 ? std::clamp(dot(ap, ab) / len2, 0.0, 1.0) : 0.0;
      const double dist = norm(ap - t * ab);
      if (dist < best.distance) {
        best = {lane.arc[i] + t * (lane.arc[i + 1] - lane.arc[i]), dist, false};
        if (i + 2 == lane.points.size() && t >= 1.0 && dot(ap, ab) > len2) best.past_end = true;
      }
    }
    return best;
  }

  void validate() const {
    for (const Lane& l : lanes) {
      if (l.points.size() < 2 || !(l.length() > 0.0)) throw std::logic_error("degenerate lane polyline");
      if (l.successors.empty()) throw std::logic_error("lane without successor");
    }
    for (const Junction& j : junctions) {
      if (j.incoming.size() + j.outgoing.size() < 2) throw std::logic_error("junction links fewer than two lane ends");
    }
  }
};

// ---------------------------------------------------------------------------
// Actors and world state.

struct Crosswalk {
  Vec2 start;
  Vec2 end;
  double s = 0.0;        // position along start->end
  int direction = 1;     // +1 toward end, -1 toward start
  double wait_s = 0.0;   // remaining curb pause
};

struct ActorState {
  int id = 0;
  ObjectClass object_class = ObjectClass::kVehicle;
  PlanPose pose{0.0, 0.0, 0.0, FrameTag::kWorld};
  Dimensions dims;
  double speed = 0.0;
  // Route: route.front() is the current lane, `s` the offset along it.
  std::deque<int> route;
  double s = 0.0;
  std::optional<Crosswalk> crosswalk;  // pedestrians only

  Footprint footprint() const { return {pose.position(), pose.yaw_rad, dims.length_m, dims.width_m}; }
};

struct EgoState : ActorState {
  double steer_angle = 0.0;  // road-wheel angle, counterclockwise-positive
  double yaw_rate = 0.0;
};

struct EgoControl {
  double throttle = 0.0;
  double brake = 0.0;
  double steer = 0.0;  // right-positive, [-1, 1]

  void validate() const {
    if (throttle < 0.0 || throttle > 1.0 || brake < 0.0 || brake > 1.0 || steer < -1.0 || steer > 1.0) {
      throw std::invalid_argument("EgoControl out of range");
    }
    if (throttle * brake != 0.0) throw std::invalid_argument("EgoControl: throttle and brake both applied");
  }
};

enum class ScenarioKind { kHighway, kUrban };

inline std::string_view to_string(ScenarioKind k) { return k == ScenarioKind::kHighway ? "highway" : "urban"; }

struct SimConfig {
  double fps = 12.0;
  double wheelbase_m = 2.7;
  double max_steer_deg = 35.0;
  double throttle_accel = 4.0;
  double brake_decel = 8.0;
  double drag = 0.1;
  double top_speed = 30.0;
  // Road-wheel angle is limited so that v^2 tan(delta) / L stays below this.
  double max_lateral_accel = 3.0;
  double npc_headway_s = 2.0;
  double npc_standstill_gap_m = 2.0;
  double npc_max_accel = 2.0;
  double pedestrian_speed = 1.4;
  double stuck_window_s = 30.0;
  double stuck_displacement_m = 1.0;
  int decision_frames = 7;
  double noise_period_s = 30.0;
  int noise_flag_frames = 8;

  double dt() const { return 1.0 / fps; }
};

struct WorldState {
  double clock_s = 0.0;
  std::int64_t frame_index = 0;
  EgoState ego;
  std::vector<ActorState> actors;
  std::shared_ptr<const RoadNetwork> network;
  std::uint64_t rng_seed = 0;
  std::mt19937_64 rng;
  ScenarioKind kind = ScenarioKind::kUrban;

  const RoadNetwork& net() const { return *network; }

  // Actor pose re-expressed at the periodic image nearest to the ego.
  PlanPose relative_world_pose(const ActorState& a) const {
    const Vec2 p = ego.pose.position() + net().delta(ego.pose.position(), a.pose.position());
    return {p.x, p.y, a.pose.yaw_rad, FrameTag::kWorld};
  }
};

// ---------------------------------------------------------------------------
// Route helpers.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline int pick(std::mt19937_64& rng, std::size_t n) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline void extend_route(const RoadNetwork& net, std::deque<int>& route, std::mt19937_64& rng, std::size_t min_len) {
  while (route.size() < min_len) {
    const auto& succ = net.lanes[static_cast<std::size_t>(route.back())].successors;
    route.push_back(succ[static_cast<std::size_t>(pick(rng, succ.size()))]);
  }
}

// Walks `distance` meters along the route from (route[0], s).
inline Vec2 route_point(const RoadNetwork& net, const std::deque<int>& route, double s, double distance,
                        double* heading = nullptr) {
  double remaining = s + distance;
  for (std::size_t i = 0; i < route.size(); ++i) {
    const Lane& lane = net.lanes[static_cast<std::size_t>(route[i])];
    if (remaining <= lane.length() || i + 1 == route.size()) {
      if (heading) *heading = lane.heading_at(remaining);
      return lane.point_at(remaining);
    }
    remaining -= lane.length();
  }
  throw std::logic_error("route_point: empty route");
}

inline constexpr std::size_t kRouteHorizon = 8;

}  // namespace detail

// Advances the ego's route bookkeeping after it moved.
inline void update_ego_route(WorldState& w) {
  auto& ego = w.ego;
  if (ego.route.empty()) return;
  const RoadNetwork& net = w.net();
  for (int guard = 0; guard < 4; ++guard) {
    const Lane& lane = net.lanes[static_cast<std::size_t>(ego.route.front())];
    const LaneProjection cur = net.project(lane, ego.pose.position());
    ego.s = cur.s;
    if (ego.route.size() < 2 || !(cur.past_end || cur.s >= lane.length() - 1e-6)) break;
    ego.route.pop_front();
  }
  detail::extend_route(net, ego.route, w.rng, detail::kRouteHorizon);
}

// ---------------------------------------------------------------------------
// Simulation step.

namespace detail {

inline double npc_gap(const WorldState& w, const ActorState& npc, double lookahead) {
  const RoadNetwork& net = w.net();
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const ActorState& other, bool any_heading) {
    const double rel_yaw = other.pose.yaw_rad - npc.pose.yaw_rad;
    if (!any_heading && angle_distance(other.pose.yaw_rad, npc.pose.yaw_rad) > kPi / 4.0) return;
    const Vec2 rel = rotate(net.delta(npc.pose.position(), other.pose.position()), -npc.pose.yaw_rad);
    const double c = std::abs(std::cos(rel_yaw));
    const double sn = std::abs(std::sin(rel_yaw));
    const double along = c * other.dims.length_m / 2.0 + sn * other.dims.width_m / 2.0;
    const double across = sn * other.dims.length_m / 2.0 + c * other.dims.width_m / 2.0;
    if (rel.y <= 0.0 || rel.y > lookahead + along) return;
    if (std::abs(rel.x) > npc.dims.width_m / 2.0 + across + 0.3) return;
    best = std::min(best, rel.y - npc.dims.length_m / 2.0 - along);
  };
  consider(w.ego, true);
  for (const ActorState& a : w.actors) {
    if (a.id == npc.id) continue;
    consider(a, a.object_class == ObjectClass::kPedestrian);
  }
  return best;
}

inline void step_vehicle(WorldState& w, ActorState& npc, const SimConfig& cfg) {
  const RoadNetwork& net = w.net();
  const Lane& lane = net.lanes[static_cast<std::size_t>(npc.route.front())];
  double desired = lane.speed_limit;
  const double gap = npc_gap(w, npc, cfg.npc_headway_s * lane.speed_limit + 10.0);
  if (std::isfinite(gap)) desired = std::min(desired, std::max(0.0, (gap - cfg.npc_standstill_gap_m) / cfg.npc_headway_s));
  npc.speed = std::max(0.0, std::min(desired, npc.speed + cfg.npc_max_accel * cfg.dt()));
  npc.s += npc.speed * cfg.dt();
  while (npc.s > net.lanes[static_cast<std::size_t>(npc.route.front())].length()) {
    npc.s -= net.lanes[static_cast<std::size_t>(npc.route.front())].length();
    npc.route.pop_front();
    extend_route(net, npc.route, w.rng, 3);
  }
  const Lane& cur = net.lanes[static_cast<std::size_t>(npc.route.front())];
  const Vec2 p = net.wrap(cur.point_at(npc.s));
  npc.pose = {p.x, p.y, cur.heading_at(npc.s), FrameTag::kWorld};
}

inline void step_pedestrian(WorldState& w, ActorState& ped, const SimConfig& cfg) {
  Crosswalk& cw = *ped.crosswalk;
  const RoadNetwork& net = w.net();
  const double length = norm(cw.end - cw.start);
  const Vec2 dir = (1.0 / length) * (cw.end - cw.start);
  if (cw.wait_s > 0.0) {
    cw.wait_s = std::max(0.0, cw.wait_s - cfg.dt());
    ped.speed = 0.0;
  } else {
    // Yield when the ego occupies the next 1.5 m of the walking line.
    const Vec2 here = cw.start + cw.s * dir;
    const Vec2 walk = cw.direction * dir;
    const Footprint probe{here + 1.0 * walk, yaw_of(walk), 1.5, 1.0};
    Footprint ego = w.ego.footprint();
    ego.center = here + net.delta(here, ego.center);
    ped.speed = footprints_overlap(probe, ego) ? 0.0 : cfg.pedestrian_speed;
    cw.s += cw.direction * ped.speed * cfg.dt();
    if (cw.s >= length || cw.s <= 0.0) {
      cw.s = std::clamp(cw.s, 0.0, length);
      cw.direction = -cw.direction;
      cw.wait_s = uniform(w.rng, 2.0, 10.0);
    }
  }
  const Vec2 p = net.wrap(cw.start + cw.s * dir);
  ped.pose = {p.x, p.y, yaw_of(cw.direction * dir), FrameTag::kWorld};
}

}  // namespace detail

// Kinematic bicycle model for the ego, explicit Euler at the frame rate.
inline void step_ego(WorldState& w, const EgoControl& control, const SimConfig& cfg) {
  EgoState& ego = w.ego;
  const double dt = cfg.dt();
  const double v = ego.speed;
  const double accel = cfg.throttle_accel * control.throttle - cfg.brake_decel * control.brake - cfg.drag * v;
  double delta = -control.steer * cfg.max_steer_deg * kPi / 180.0;
  if (v > 0.0 && cfg.max_lateral_accel > 0.0) {
    const double limit = std::atan(cfg.max_lateral_accel * cfg.wheelbase_m / (v * v));
    delta = std::clamp(delta, -limit, limit);
  }
  const double yaw_rate = v * std::tan(delta) / cfg.wheelbase_m;
  const Vec2 p = w.net().wrap(ego.pose.position() + (v * dt) * heading_vector(ego.pose.yaw_rad));
  ego.pose = {p.x, p.y, wrap_two_pi(ego.pose.yaw_rad + yaw_rate * dt), FrameTag::kWorld};
  ego.speed = std::clamp(v + accel * dt, 0.0, cfg.top_speed);
  ego.steer_angle = delta;
  ego.yaw_rate = yaw_rate;
}

// Advances the world by exactly one frame.
inline void advance(WorldState& w, const EgoControl& control, const SimConfig& cfg = {}) {
  control.validate();
  step_ego(w, control, cfg);
  update_ego_route(w);
  for (ActorState& a : w.actors) {
    if (a.object_class == ObjectClass::kVehicle) {
      detail::step_vehicle(w, a, cfg);
    } else {
      detail::step_pedestrian(w, a, cfg);
    }
  }
  ++w.frame_index;
  w.clock_s = static_cast<double>(w.frame_index) / cfg.fps;
}

inline WorldState step(WorldState state, const EgoControl& control, const SimConfig& cfg = {}) {
  advance(state, control, cfg);
  return state;
}

// ---------------------------------------------------------------------------
// Collisions.

struct CollisionEvent {
  std::int64_t frame_index = 0;
  int actor_id = 0;
  ObjectClass actor_class = ObjectClass::kVehicle;
};

// Every actor whose footprint overlaps (or touches) the ego's.
inline std::vector<int> overlapping_actors(const WorldState& w) {
  std::vector<int> ids;
  const Footprint ego = w.ego.footprint();
  for (const ActorState& a : w.actors) {
    Footprint f = a.footprint();
    f.center = ego.center + w.net().delta(ego.center, f.center);
    if (footprints_overlap(ego, f)) ids.push_back(a.id);
  }
  return ids;
}

// Edge-triggered contact reporting: one event per contact episode.
class CollisionTracker {
 public:
  std::vector<CollisionEvent> update(const WorldState& w) {
    std::vector<int> now = overlapping_actors(w);
    std::vector<CollisionEvent> events;
    for (int id : now) {
      if (std::find(in_contact_.begin(), in_contact_.end(), id) == in_contact_.end()) {
        const auto it = std::find_if(w.actors.begin(), w.actors.end(), [id](const ActorState& a) { return a.id == id; });
        events.push_back({w.frame_index, id, it->object_class});
      }
    }
    in_contact_ = std::move(now);
    return events;
  }

  void reset() { in_contact_.clear(); }

 private:
  std::vector<int> in_contact_;
};

inline std::vector<CollisionEvent> detect_collisions(const WorldState& w, CollisionTracker& tracker) {
  return tracker.update(w);
}

// ---------------------------------------------------------------------------
// Stuck detection.

struct EgoSample {
  std::int64_t frame_index = 0;
  double clock_s = 0.0;
  Vec2 position;
};

struct InterventionEvent {
  std::int64_t frame_index = 0;
  double clock_s = 0.0;
};

// Fires when the chronological history spans the full window and the ego never
// got `displacement_m` away from where it was at the start of the window.
// Positions are compared through `net` so that periodic wrap is transparent.
inline std::optional<InterventionEvent> check_intervention(std::span<const EgoSample> history, const RoadNetwork& net,
                                                           const SimConfig& cfg = {}) {
  if (history.empty()) return std::nullopt;
  const EgoSample& newest = history.back();
  // Oldest sample still inside the trailing window.
  std::size_t start = history.size();
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].clock_s >= newest.clock_s - cfg.stuck_window_s - 1e-9) {
      start = i;
      break;
    }
  }
  if (start >= history.size()) return std::nullopt;
  if (newest.clock_s - history[start].clock_s < cfg.stuck_window_s - 1e-9) return std::nullopt;
  for (std::size_t i = start; i < history.size(); ++i) {
    if (norm(net.delta(history[start].position, history[i].position)) >= cfg.stuck_displacement_m) return std::nullopt;
  }
  return InterventionEvent{newest.frame_index, newest.clock_s};
}

// Keeps the trailing window of ego positions and applies check_intervention.
class StuckMonitor {
 public:
  explicit StuckMonitor(SimConfig cfg = {}) : cfg_(cfg) {}

  std::optional<InterventionEvent> observe(const WorldState& w) {
    history_.push_back({w.frame_index, w.clock_s, w.ego.pose.position()});
    std::size_t drop = 0;
    while (drop + 1 < history_.size() && history_[drop + 1].clock_s <= w.clock_s - cfg_.stuck_window_s + 1e-9) ++drop;
    history_.erase(history_.begin(), history_.begin() + static_cast<std::ptrdiff_t>(drop));
    auto ev = check_intervention(history_, w.net(), cfg_);
    // the next window opens at the event frame
    if (ev) history_.erase(history_.begin(), history_.end() - 1);
    return ev;
  }

  void reset() { history_.clear(); }

 private:
  SimConfig cfg_;
  std::vector<EgoSample> history_;
};

// Places the ego on the nearest heading-compatible lane, `ahead_m` further
// along it, at the lane's speed limit. Used to resolve interventions.
inline void teleport_ego(WorldState& w, double ahead_m = 15.0) {
  const RoadNetwork& net = w.net();
  EgoState& ego = w.ego;
  int best_lane = -1;
  LaneProjection best{0.0, std::numeric_limits<double>::infinity(), false};
  for (const Lane& lane : net.lanes) {
    if (lane.connector) continue;
    const LaneProjection p = net.project(lane, ego.pose.position());
    if (angle_distance(lane.heading_at(p.s), ego.pose.yaw_rad) > kPi / 2.0) continue;
    if (p.distance < best.distance) {
      best = p;
      best_lane = lane.id;
    }
  }
  if (best_lane < 0) {
    best_lane = ego.route.empty() ? 0 : ego.route.front();
    best = net.project(net.lanes[static_cast<std::size_t>(best_lane)], ego.pose.position());
  }
  ego.route.clear();
  ego.route.push_back(best_lane);
  detail::extend_route(net, ego.route, w.rng, detail::kRouteHorizon);

  double distance = ahead_m;
  for (int attempt = 0; attempt < 8; ++attempt) {
    double heading = 0.0;
    const Vec2 p = net.wrap(detail::route_point(net, ego.route, best.s, distance, &heading));
    ego.pose = {p.x, p.y, heading, FrameTag::kWorld};
    if (overlapping_actors(w).empty()) break;
    if (attempt + 1 < 8) distance += 10.0;
  }
  // Drop lanes already passed.
  double walked = best.s + distance;
  while (ego.route.size() > 1 && walked > net.lanes[static_cast<std::size_t>(ego.route.front())].length()) {
    walked -= net.lanes[static_cast<std::size_t>(ego.route.front())].length();
    ego.route.pop_front();
  }
  ego.s = walked;
  detail::extend_route(net, ego.route, w.rng, detail::kRouteHorizon);
  ego.speed = net.lanes[static_cast<std::size_t>(ego.route.front())].speed_limit;
  ego.steer_angle = 0.0;
  ego.yaw_rate = 0.0;
}

// ---------------------------------------------------------------------------
// Scenario generation.

namespace detail {

inline Lane make_lane(int id, std::vector<Vec2> pts, double speed, bool connector = false,
                      TurnKind turn = TurnKind::kNone) {
  Lane l;
  l.id = id;
  l.points = std::move(pts);
  l.speed_limit = speed;
  l.connector = connector;
  l.turn = turn;
  l.finalize();
  return l;
}

inline std::vector<Vec2> straight_points(Vec2 a, Vec2 b, double spacing) {
  const int n = std::max(1, static_cast<int>(std::ceil(norm(b - a) / spacing)));
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) pts.push_back(a + (static_cast<double>(i) / n) * (b - a));
  return pts;
}

// Quarter arc from `a` to `b` around `center`.
inline std::vector<Vec2> arc_points(Vec2 center, Vec2 a, Vec2 b, int segments = 8) {
  const double ra = norm(a - center);
  const double t0 = std::atan2(a.y - center.y, a.x - center.x);
  const double sweep = wrap_pi(std::atan2(b.y - center.y, b.x - center.x) - t0);
  std::vector<Vec2> pts;
  for (int i = 0; i <= segments; ++i) {
    const double t = t0 + sweep * i / segments;
    pts.push_back(center + ra * Vec2{std::cos(t), std::sin(t)});
  }
  pts.front() = a;
  pts.back() = b;
  return pts;
}

inline Vec2 right_of(Vec2 d) { return {d.y, -d.x}; }

struct ActorPlacement {
  int lane;
  double s;
};

inline bool placement_clear(const RoadNetwork& net, const std::vector<Vec2>& taken, Vec2 p, double spacing) {
  return std::all_of(taken.begin(), taken.end(), [&](Vec2 q) { return norm(net.delta(p, q)) >= spacing; });
}

inline Dimensions vehicle_dims(std::mt19937_64& rng) {
  return {uniform(rng, 4.2, 4.9), uniform(rng, 1.8, 2.0), uniform(rng, 1.4, 1.7)};
}

inline ActorState place_vehicle(const RoadNetwork& net, int id, int lane, double s, std::mt19937_64& rng) {
  ActorState a;
  a.id = id;
  a.object_class = ObjectClass::kVehicle;
  a.dims = vehicle_dims(rng);
  a.route.push_back(lane);
  extend_route(net, a.route, rng, 3);
  a.s = s;
  const Lane& l = net.lanes[static_cast<std::size_t>(lane)];
  const Vec2 p = net.wrap(l.point_at(s));
  a.pose = {p.x, p.y, l.heading_at(s), FrameTag::kWorld};
  a.speed = l.speed_limit;
  return a;
}

}  // namespace detail

inline constexpr double kHighwayLengthM = 1000.0;
inline constexpr double kUrbanBlockM = 150.0;
inline constexpr int kUrbanGridNodes = 3;
inline constexpr double kJunctionHalfSizeM = 10.0;
inline constexpr double kLaneWidthM = 3.5;

inline std::shared_ptr<const RoadNetwork> make_highway_network() {
  auto net = std::make_shared<RoadNetwork>();
  net->period = {0.0, kHighwayLengthM};
  // Two lanes per direction, right-hand traffic; inner lanes are faster.
  const std::array<double, 4> xs = {1.75, 5.25, -1.75, -5.25};
  const std::array<double, 4> speeds = {10.0, 9.0, 10.0, 9.0};
  for (int i = 0; i < 4; ++i) {
    const bool north = xs[static_cast<std::size_t>(i)] > 0.0;
    const Vec2 a{xs[static_cast<std::size_t>(i)], north ? 0.0 : kHighwayLengthM};
    const Vec2 b{xs[static_cast<std::size_t>(i)], north ? kHighwayLengthM : 0.0};
    Lane lane = detail::make_lane(i, detail::straight_points(a, b, 50.0), speeds[static_cast<std::size_t>(i)]);
    lane.width_m = kLaneWidthM;
    lane.successors = {i};
    lane.junction = i;
    net->lanes.push_back(std::move(lane));
    // The seam where the periodic segment closes on itself.
    net->junctions.push_back({i, net->wrap(b), {i}, {i}});
  }
  net->validate();
  return net;
}

inline std::shared_ptr<const RoadNetwork> make_urban_network() {
  auto net = std::make_shared<RoadNetwork>();
  const double period = kUrbanBlockM * kUrbanGridNodes;
  net->period = {period, period};
  const std::array<Vec2, 4> dirs = {Vec2{0, 1}, Vec2{1, 0}, Vec2{0, -1}, Vec2{-1, 0}};
  const double off = kLaneWidthM / 2.0;
  const double h = kJunctionHalfSizeM;
  auto node_id = [](int i, int j) { return i * kUrbanGridNodes + j; };
  for (int i = 0; i < kUrbanGridNodes; ++i) {
    for (int j = 0; j < kUrbanGridNodes; ++j) {
      net->junctions.push_back({node_id(i, j), {i * kUrbanBlockM, j * kUrbanBlockM}, {}, {}});
    }
  }
  // out_lane[node][dir] leaves `node` heading `dir`.
  std::vector<std::array<int, 4>> out_lane(net->junctions.size());
  std::vector<std::array<int, 4>> in_lane(net->junctions.size());
  for (int i = 0; i < kUrbanGridNodes; ++i) {
    for (int j = 0; j < kUrbanGridNodes; ++j) {
      const Vec2 c = net->junctions[static_cast<std::size_t>(node_id(i, j))].center;
      for (std::size_t d = 0; d < 4; ++d) {
        const Vec2 r = detail::right_of(dirs[d]);
        const Vec2 a = c + h * dirs[d] + off * r;
        const Vec2 b = c + (kUrbanBlockM - h) * dirs[d] + off * r;
        const int id = static_cast<int>(net->lanes.size());
        Lane lane = detail::make_lane(id, detail::straight_points(a, b, 10.0), 8.0);
        lane.width_m = kLaneWidthM;
        const int ni = (i + static_cast<int>(dirs[d].x) + kUrbanGridNodes) % kUrbanGridNodes;
        const int nj = (j + static_cast<int>(dirs[d].y) + kUrbanGridNodes) % kUrbanGridNodes;
        lane.junction = node_id(ni, nj);
        out_lane[static_cast<std::size_t>(node_id(i, j))][d] = id;
        in_lane[static_cast<std::size_t>(node_id(ni, nj))][d] = id;
        net->junctions[static_cast<std::size_t>(node_id(i, j))].outgoing.push_back(id);
        net->junctions[static_cast<std::size_t>(node_id(ni, nj))].incoming.push_back(id);
        net->lanes.push_back(std::move(lane));
      }
    }
  }
  // Connectors: straight, left and right for every incoming lane.
  for (std::size_t n = 0; n < net->junctions.size(); ++n) {
    const Vec2 c = net->junctions[n].center;
    for (std::size_t d = 0; d < 4; ++d) {
      const Vec2 dir = dirs[d];
      const Vec2 r = detail::right_of(dir);
      const Vec2 entry = c - h * dir + off * r;
      const int in_id = in_lane[n][d];
      struct Option {
        std::size_t out_dir;
        TurnKind turn;
      };
      const std::array<Option, 3> options = {Option{d, TurnKind::kStraight}, Option{(d + 3) % 4, TurnKind::kLeft},
                                             Option{(d + 1) % 4, TurnKind::kRight}};
      for (const Option& o : options) {
        const Vec2 od = dirs[o.out_dir];
        const Vec2 exit = c + h * od + off * detail::right_of(od);
        std::vector<Vec2> pts;
        double speed = 8.0;
        if (o.turn == TurnKind::kStraight) {
          pts = detail::straight_points(entry, exit, 5.0);
        } else {
          const Vec2 center = c - h * dir + (o.turn == TurnKind::kRight ? h : -h) * r;
          pts = detail::arc_points(center, entry, exit);
          speed = 5.0;
        }
        const int id = static_cast<int>(net->lanes.size());
        Lane conn = detail::make_lane(id, std::move(pts), speed, true, o.turn);
        conn.width_m = kLaneWidthM;
        conn.junction = static_cast<int>(n);
        conn.successors = {out_lane[n][o.out_dir]};
        net->lanes[static_cast<std::size_t>(in_id)].successors.push_back(id);
        net->lanes.push_back(std::move(conn));
      }
    }
  }
  net->validate();
  return net;
}

// Shared immutable networks; every scenario of a kind uses the same layout.
inline std::shared_ptr<const RoadNetwork> network_for(ScenarioKind kind) {
  static const auto highway = make_highway_network();
  static const auto urban = make_urban_network();
  return kind == ScenarioKind::kHighway ? highway : urban;
}

inline constexpr int kHighwayVehicles = 8;
inline constexpr int kUrbanVehicles = 12;
inline constexpr int kUrbanPedestrians = 6;

inline WorldState make_scenario(ScenarioKind kind, std::uint64_t seed) {
  WorldState w;
  w.kind = kind;
  w.network = network_for(kind);
  w.rng_seed = seed;
  w.rng.seed(detail::splitmix64(seed));
  const RoadNetwork& net = *w.network;
  auto& rng = w.rng;

  std::vector<int> drivable;
  for (const Lane& l : net.lanes) {
    if (!l.connector) drivable.push_back(l.id);
  }

  // Ego: on a drivable lane, at rest.
  {
    const int lane = kind == ScenarioKind::kHighway ? 1 + detail::pick(rng, 2) * 2 : drivable[static_cast<std::size_t>(detail::pick(rng, drivable.size()))];
    const Lane& l = net.lanes[static_cast<std::size_t>(lane)];
    const double s = kind == ScenarioKind::kHighway ? detail::uniform(rng, 0.0, l.length())
                                                    : detail::uniform(rng, 20.0, l.length() - 40.0);
    EgoState& ego = w.ego;
    ego.id = 0;
    ego.object_class = ObjectClass::kVehicle;
    ego.dims = {4.5, 1.9, 1.5};
    ego.route.push_back(lane);
    ego.s = s;
    const Vec2 p = net.wrap(l.point_at(s));
    ego.pose = {p.x, p.y, l.heading_at(s), FrameTag::kWorld};
    ego.speed = 0.0;
    detail::extend_route(net, ego.route, rng, detail::kRouteHorizon);
  }

  std::vector<Vec2> taken = {w.ego.pose.position()};
  int next_id = 1;
  const int vehicles = kind == ScenarioKind::kHighway ? kHighwayVehicles : kUrbanVehicles;
  while (next_id <= vehicles) {
    const int lane = drivable[static_cast<std::size_t>(detail::pick(rng, drivable.size()))];
    const Lane& l = net.lanes[static_cast<std::size_t>(lane)];
    const double s = detail::uniform(rng, 0.0, l.length() - 5.0);
    const Vec2 p = net.wrap(l.point_at(s));
    if (!detail::placement_clear(net, taken, p, 30.0)) continue;
    taken.push_back(p);
    w.actors.push_back(detail::place_vehicle(net, next_id++, lane, s, rng));
  }

  if (kind == ScenarioKind::kUrban) {
    const std::array<Vec2, 4> dirs = {Vec2{0, 1}, Vec2{1, 0}, Vec2{0, -1}, Vec2{-1, 0}};
    for (int k = 0; k < kUrbanPedestrians; ++k) {
      const Junction& j = net.junctions[static_cast<std::size_t>(detail::pick(rng, net.junctions.size()))];
      const Vec2 arm = dirs[static_cast<std::size_t>(detail::pick(rng, 4))];
      const Vec2 across = detail::right_of(arm);
      const Vec2 mid = j.center + (kJunctionHalfSizeM + 3.0) * arm;
      ActorState ped;
      ped.id = next_id++;
      ped.object_class = ObjectClass::kPedestrian;
      ped.dims = {0.5, 0.6, detail::uniform(rng, 1.6, 1.9)};
      Crosswalk cw{mid - 6.0 * across, mid + 6.0 * across, detail::uniform(rng, 0.0, 12.0),
                   detail::pick(rng, 2) == 0 ? 1 : -1, 0.0};
      ped.crosswalk = cw;
      const Vec2 dir = (1.0 / 12.0) * (cw.end - cw.start);
      const Vec2 p = net.wrap(cw.start + cw.s * dir);
      ped.pose = {p.x, p.y, yaw_of(cw.direction * dir), FrameTag::kWorld};
      ped.speed = 0.0;
      w.actors.push_back(std::move(ped));
    }
  }
  return w;
}

// Scenario names: "highway-0", "highway-1", "urban-0" ... "urban-5".
struct ScenarioId {
  ScenarioKind kind = ScenarioKind::kUrban;
  int location = 0;

  std::string name() const { return std::string(to_string(kind)) + "-" + std::to_string(location); }
};

inline constexpr int kHighwayLocations = 2;
inline constexpr int kUrbanLocations = 6;

inline ScenarioId parse_scenario(std::string_view name) {
  const auto dash = name.rfind('-');
  if (dash == std::string_view::npos) throw std::invalid_argument("bad scenario name: " + std::string(name));
  const std::string_view kind = name.substr(0, dash);
  int loc = -1;
  try {
    loc = std::stoi(std::string(name.substr(dash + 1)));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad scenario name: " + std::string(name));
  }
  if (kind == "highway" && loc >= 0 && loc < kHighwayLocations) return {ScenarioKind::kHighway, loc};
  if (kind == "urban" && loc >= 0 && loc < kUrbanLocations) return {ScenarioKind::kUrban, loc};
  throw std::invalid_argument("bad scenario name: " + std::string(name));
}

inline std::vector<ScenarioId> all_scenarios() {
  std::vector<ScenarioId> out;
  for (int i = 0; i < kHighwayLocations; ++i) out.push_back({ScenarioKind::kHighway, i});
  for (int i = 0; i < kUrbanLocations; ++i) out.push_back({ScenarioKind::kUrban, i});
  return out;
}

// Location and rollout seed combine into the scenario seed.
inline std::uint64_t scenario_seed(const ScenarioId& id, std::uint64_t seed) {
  const std::uint64_t loc = (id.kind == ScenarioKind::kHighway ? 0x100ULL : 0x200ULL) + static_cast<std::uint64_t>(id.location);
  return detail::splitmix64(detail::splitmix64(loc) ^ seed);
}

inline WorldState make_scenario(const ScenarioId& id, std::uint64_t seed) {
  return make_scenario(id.kind, scenario_seed(id, seed));
}

// Drivable-area quads near the ego, expressed at the periodic image nearest to it.
inline std::vector<std::array<Vec2, 4>> lane_polygons_near(const RoadNetwork& net, Vec2 ego, double radius_m) {
  std::vector<std::array<Vec2, 4>> quads;
  for (const Lane& lane : net.lanes) {
    for (std::size_t i = 0; i + 1 < lane.points.size(); ++i) {
      const Vec2 a = ego + net.delta(ego, lane.points[i]);
      const Vec2 b = a + (lane.points[i + 1] - lane.points[i]);
      const Vec2 mid = 0.5 * (a + b);
      const double seg = norm(b - a);
      if (norm(mid - ego) > radius_m + seg / 2.0) continue;
      const Vec2 dir = (1.0 / seg) * (b - a);
      const Vec2 half = (lane.width_m / 2.0) * detail::right_of(dir);
      quads.push_back({a + half, b + half, b - half, a - half});
    }
  }
  return quads;
}

// ---------------------------------------------------------------------------
// Expert driver.

class RouteExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExpertConfig {
  double lookahead_m = 10.0;
  double heading_deadband_deg = 10.0;
  double stop_corridor_length_m = 12.0;
  double corridor_width_m = 3.0;
  double slow_distance_m = 25.0;
  double pedestrian_watch_lateral_m = 7.0;
  double yield_distance_m = 12.0;
  double yield_watch_m = 25.0;
};

namespace detail {

inline bool corridor_blocked(const WorldState& w, double length, double width) {
  const EgoState& ego = w.ego;
  const Vec2 fwd = heading_vector(ego.pose.yaw_rad);
  const Footprint corridor{ego.pose.position() + (ego.dims.length_m / 2.0 + length / 2.0) * fwd, ego.pose.yaw_rad,
                           length, width};
  for (const ActorState& a : w.actors) {
    Footprint f = a.footprint();
    f.center = corridor.center + w.net().delta(corridor.center, f.center);
    if (footprints_overlap(corridor, f)) return true;
  }
  return false;
}

// Distance along the route to the next junction connector (0 when inside one).
inline double distance_to_junction(const WorldState& w, TurnKind* turn) {
  const RoadNetwork& net = w.net();
  double dist = 0.0;
  for (std::size_t i = 0; i < w.ego.route.size(); ++i) {
    const Lane& lane = net.lanes[static_cast<std::size_t>(w.ego.route[i])];
    if (lane.connector) {
      if (turn) *turn = lane.turn;
      return dist;
    }
    dist += i == 0 ? std::max(0.0, lane.length() - w.ego.s) : lane.length();
  }
  if (turn) *turn = TurnKind::kNone;
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline Action expert_action(const WorldState& w, const ExpertConfig& cfg = {}) {
  const EgoState& ego = w.ego;
  if (ego.route.empty()) throw RouteExhausted("expert_action: ego has no route");
  const RoadNetwork& net = w.net();

  Action act;
  const Vec2 target = detail::route_point(net, ego.route, ego.s, cfg.lookahead_m);
  const Vec2 to_target = net.delta(ego.pose.position(), target);
  const double err = wrap_pi(yaw_of(to_target) - ego.pose.yaw_rad);
  const double deadband = cfg.heading_deadband_deg * kPi / 180.0;
  act.lateral = err > deadband ? Lateral::kLeft : (err < -deadband ? Lateral::kRight : Lateral::kStraight);

  TurnKind turn = TurnKind::kNone;
  const double to_junction = detail::distance_to_junction(w, &turn);
  const Lane& current = net.lanes[static_cast<std::size_t>(ego.route.front())];

  bool yield = false;
  if (!current.connector && to_junction < cfg.yield_distance_m) {
    const int junction = current.junction;
    for (const ActorState& a : w.actors) {
      if (a.object_class != ObjectClass::kVehicle || a.route.empty()) continue;
      const double heading_gap = angle_distance(a.pose.yaw_rad, ego.pose.yaw_rad);
      if (heading_gap < kPi / 6.0) continue;  // same direction: handled as a lead vehicle
      if (heading_gap > 5.0 * kPi / 6.0 && turn != TurnKind::kLeft) continue;  // oncoming, no conflict
      const Lane& al = net.lanes[static_cast<std::size_t>(a.route.front())];
      if (al.junction != junction) continue;
      const double remaining = al.connector ? 0.0 : al.length() - a.s;
      if (al.connector || (remaining < cfg.yield_watch_m && a.speed > 1.0)) {
        yield = true;
        break;
      }
    }
  }

  bool pedestrian_near = false;
  for (const ActorState& a : w.actors) {
    if (a.object_class != ObjectClass::kPedestrian) continue;
    const Vec2 rel = rotate(net.delta(ego.pose.position(), a.pose.position()), -ego.pose.yaw_rad);
    if (rel.y > 0.0 && rel.y < cfg.slow_distance_m && std::abs(rel.x) < cfg.pedestrian_watch_lateral_m) {
      pedestrian_near = true;
      break;
    }
  }

  if (detail::corridor_blocked(w, cfg.stop_corridor_length_m, cfg.corridor_width_m) || yield) {
    act.longitudinal = Longitudinal::kStop;
  } else if (to_junction < cfg.slow_distance_m || detail::corridor_blocked(w, cfg.slow_distance_m, cfg.corridor_width_m) || pedestrian_near) {
    act.longitudinal = Longitudinal::kSlow;
  } else {
    act.longitudinal = Longitudinal::kFast;
  }
  return act;
}

}  // namespace mpv

#endif  // MPV_WORLD_HPP_
