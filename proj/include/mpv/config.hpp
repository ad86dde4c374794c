#ifndef MPV_CONFIG_HPP_
#define MPV_CONFIG_HPP_

// Flat "key = value" configuration with namespaced keys (sim.*, sensor.*,
// policy.*, raster.*, bench.*). Later sources override earlier ones.

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpv/imitation.hpp"
#include "mpv/policy.hpp"
#include "mpv/sensor.hpp"
#include "mpv/world.hpp"

namespace mpv {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  void parse(std::istream& in, const std::string& origin = "<config>") {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      set_assignment(line, origin + ":" + std::to_string(lineno));
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    parse(in, path);
  }

  // Loads the file named by MPV_CONFIG, if set.
  void load_env() {
    if (const char* p = std::getenv("MPV_CONFIG"); p != nullptr && *p != '\0') load_file(p);
  }

  void set_assignment(const std::string& text, const std::string& where = "<override>") {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    values_[key] = value;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  double get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: " + it->second);
    }
  }

  int get(const std::string& key, int fallback) const {
    const double v = get(key, static_cast<double>(fallback));
    if (v != static_cast<double>(static_cast<int>(v))) throw ConfigError("config key " + key + ": not an integer");
    return static_cast<int>(v);
  }

  // Keys that were set but never consumed by apply_*; a guard against typos.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known_prefixes) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      bool ok = false;
      for (const auto& p : known_prefixes) ok = ok || k.rfind(p, 0) == 0;
      if (!ok) out.push_back(k);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline SimConfig sim_config(const Config& c) {
  SimConfig s;
  s.fps = c.get("sim.fps", s.fps);
  s.wheelbase_m = c.get("sim.wheelbase_m", s.wheelbase_m);
  s.max_steer_deg = c.get("sim.max_steer_deg", s.max_steer_deg);
  s.throttle_accel = c.get("sim.throttle_accel", s.throttle_accel);
  s.brake_decel = c.get("sim.brake_decel", s.brake_decel);
  s.drag = c.get("sim.drag", s.drag);
  s.top_speed = c.get("sim.top_speed", s.top_speed);
  s.max_lateral_accel = c.get("sim.max_lateral_accel", s.max_lateral_accel);
  s.npc_headway_s = c.get("sim.npc_headway_s", s.npc_headway_s);
  s.npc_standstill_gap_m = c.get("sim.npc_standstill_gap_m", s.npc_standstill_gap_m);
  s.npc_max_accel = c.get("sim.npc_max_accel", s.npc_max_accel);
  s.pedestrian_speed = c.get("sim.pedestrian_speed", s.pedestrian_speed);
  s.stuck_window_s = c.get("sim.stuck_window_s", s.stuck_window_s);
  s.stuck_displacement_m = c.get("sim.stuck_displacement_m", s.stuck_displacement_m);
  s.decision_frames = c.get("sim.decision_frames", s.decision_frames);
  s.noise_period_s = c.get("sim.noise_period_s", s.noise_period_s);
  s.noise_flag_frames = c.get("sim.noise_flag_frames", s.noise_flag_frames);
  if (!(s.fps > 0.0) || s.decision_frames <= 0 || s.noise_flag_frames < 0) throw ConfigError("sim: bad timing values");
  return s;
}

inline PolicyConfig policy_config(const Config& c) {
  PolicyConfig p;
  p.fast_speed = c.get("policy.fast_speed", p.fast_speed);
  p.slow_speed = c.get("policy.slow_speed", p.slow_speed);
  p.stop_speed = c.get("policy.stop_speed", p.stop_speed);
  p.throttle_gain = c.get("policy.throttle_gain", p.throttle_gain);
  p.brake_gain = c.get("policy.brake_gain", p.brake_gain);
  p.hard_brake_above = c.get("policy.hard_brake_above", p.hard_brake_above);
  p.steer_command = c.get("policy.steer_command", p.steer_command);
  p.corridor_width_m = c.get("policy.corridor_width_m", p.corridor_width_m);
  p.corridor_curvature = c.get("policy.corridor_curvature", p.corridor_curvature);
  p.corridor_range_m = c.get("policy.corridor_range_m", p.corridor_range_m);
  p.stop_distance_m = c.get("policy.stop_distance_m", p.stop_distance_m);
  p.slow_distance_m = c.get("policy.slow_distance_m", p.slow_distance_m);
  return p;
}

inline ExpertConfig expert_config(const Config& c) {
  ExpertConfig e;
  e.lookahead_m = c.get("policy.expert.lookahead_m", e.lookahead_m);
  e.heading_deadband_deg = c.get("policy.expert.heading_deadband_deg", e.heading_deadband_deg);
  e.stop_corridor_length_m = c.get("policy.expert.stop_corridor_length_m", e.stop_corridor_length_m);
  e.corridor_width_m = c.get("policy.expert.corridor_width_m", e.corridor_width_m);
  e.slow_distance_m = c.get("policy.expert.slow_distance_m", e.slow_distance_m);
  e.pedestrian_watch_lateral_m = c.get("policy.expert.pedestrian_watch_lateral_m", e.pedestrian_watch_lateral_m);
  e.yield_distance_m = c.get("policy.expert.yield_distance_m", e.yield_distance_m);
  e.yield_watch_m = c.get("policy.expert.yield_watch_m", e.yield_watch_m);
  return e;
}

// Calibrated profile, with any per-parameter override from sensor.<class>.<param>.
inline NoiseProfile noise_profile(const Config& c) {
  NoiseProfile p = default_noise_profile();
  for (ObjectClass cls : {ObjectClass::kVehicle, ObjectClass::kPedestrian}) {
    const std::string base = "sensor." + std::string(to_string(cls)) + ".";
    ClassNoise& n = p.for_class(cls);
    n.depth_sigma_log = c.get(base + "depth_sigma_log", n.depth_sigma_log);
    n.yaw_kappa = c.get(base + "yaw_kappa", n.yaw_kappa);
    n.dim_sigma_log = c.get(base + "dim_sigma_log", n.dim_sigma_log);
    n.miss_rate = c.get(base + "miss_rate", n.miss_rate);
    n.validate();
  }
  return p;
}

inline CameraIntrinsics camera_config(const Config& c) {
  return make_intrinsics(c.get("sensor.image_width_px", 1920.0), c.get("sensor.image_height_px", 1080.0),
                         c.get("sensor.hfov_deg", 60.0));
}

// The plan-view grid is fixed at 512 x 512 cells of 0.125 m; these keys are
// accepted only to reject attempts to change it.
inline void check_raster_config(const Config& c) {
  if (c.get("raster.width_px", 512) != 512 || c.get("raster.height_px", 512) != 512 ||
      c.get("raster.meters_per_px", 0.125) != 0.125) {
    throw ConfigError("raster: only the 512x512 grid at 0.125 m/px is supported");
  }
}

// Serializes a noise profile as config lines.
inline std::string noise_profile_lines(const NoiseProfile& p) {
  std::ostringstream os;
  os.precision(17);
  for (ObjectClass cls : {ObjectClass::kVehicle, ObjectClass::kPedestrian}) {
    const std::string base = "sensor." + std::string(to_string(cls)) + ".";
    const ClassNoise& n = p.for_class(cls);
    os << base << "depth_sigma_log = " << n.depth_sigma_log << '\n';
    os << base << "yaw_kappa = " << n.yaw_kappa << '\n';
    os << base << "dim_sigma_log = " << n.dim_sigma_log << '\n';
    os << base << "miss_rate = " << n.miss_rate << '\n';
  }
  return os.str();
}

}  // namespace mpv

#endif  // MPV_CONFIG_HPP_
