#ifndef MPV_POLICY_HPP_
#define MPV_POLICY_HPP_

// Action-to-control conversion and the non-expert driving policies.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpv/action.hpp"
#include "mpv/raster.hpp"
#include "mpv/world.hpp"

namespace mpv {

struct PolicyConfig {
  double fast_speed = 12.0;
  double slow_speed = 5.0;
  double stop_speed = 0.0;
  double throttle_gain = 0.25;
  double brake_gain = 0.5;
  double hard_brake_above = 2.0;
  double steer_command = 0.5;

  double corridor_width_m = 3.0;
  double corridor_curvature = 0.05;
  double corridor_range_m = 24.0;
  double stop_distance_m = 8.0;
  double slow_distance_m = 16.0;

  double target_speed(Longitudinal l) const {
    switch (l) {
      case Longitudinal::kFast: return fast_speed;
      case Longitudinal::kSlow: return slow_speed;
      case Longitudinal::kStop: return stop_speed;
    }
    return 0.0;
  }
};

// Proportional speed tracking plus a fixed steering command per lateral option.
inline EgoControl pid_control(const Action& action, double current_speed, const PolicyConfig& cfg = {}) {
  if (current_speed < 0.0) throw std::domain_error("pid_control: negative speed");
  EgoControl c;
  const double e = cfg.target_speed(action.longitudinal) - current_speed;
  if (e > 0.0) c.throttle = std::clamp(cfg.throttle_gain * e, 0.0, 1.0);
  if (e < 0.0) c.brake = std::clamp(-cfg.brake_gain * e, 0.0, 1.0);
  if (action.longitudinal == Longitudinal::kStop && current_speed > cfg.hard_brake_above) c.brake = 1.0;
  switch (action.lateral) {
    case Lateral::kLeft: c.steer = -cfg.steer_command; break;
    case Lateral::kRight: c.steer = cfg.steer_command; break;
    case Lateral::kStraight: c.steer = 0.0; break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Occupancy heuristic.

// Signed curvature of each lateral option; positive bends left (toward -x).
inline double corridor_curvature(Lateral l, const PolicyConfig& cfg) {
  switch (l) {
    case Lateral::kLeft: return cfg.corridor_curvature;
    case Lateral::kRight: return -cfg.corridor_curvature;
    case Lateral::kStraight: return 0.0;
  }
  return 0.0;
}

// Point at arc length s and lateral offset `offset` (right-positive) on an arc
// that leaves the origin heading +Y with signed curvature c.
inline Vec2 corridor_point(double c, double s, double offset) {
  if (c == 0.0) return {offset, s};
  const double phi = c * s;
  const Vec2 center{-(1.0 - std::cos(phi)) / c, std::sin(phi) / c};
  return center + offset * Vec2{std::cos(phi), std::sin(phi)};
}

// Arc length to the first occupied cell along a corridor, or +inf.
inline double corridor_clearance(const PlanViewImage& img, double curvature, const PolicyConfig& cfg) {
  const GridSpec& spec = img.spec();
  const double step = spec.meters_per_px;
  const int n_s = static_cast<int>(std::floor(cfg.corridor_range_m / step + 1e-9));
  const int n_o = static_cast<int>(std::floor(cfg.corridor_width_m / step + 1e-9));
  const auto veh = img.channel(Layer::kVehicles);
  const auto ped = img.channel(Layer::kPedestrians);
  for (int i = 0; i <= n_s; ++i) {
    const double s = i * step;
    for (int j = 0; j <= n_o; ++j) {
      const double offset = -cfg.corridor_width_m / 2.0 + j * step;
      int row = 0, col = 0;
      if (!spec.cell_of(corridor_point(curvature, s, offset), row, col)) continue;
      const std::size_t k = static_cast<std::size_t>(row) * spec.width_px + col;
      if (veh[k] || ped[k]) return s;
    }
  }
  return std::numeric_limits<double>::infinity();
}

inline Action occupancy_policy(const PlanViewImage& img, double /*ego_speed*/, const PolicyConfig& cfg = {}) {
  if (img.spec().frame != FrameTag::kTravel) throw FrameMismatch("occupancy_policy: needs a travel-frame grid");
  Lateral best = Lateral::kStraight;
  double best_clear = corridor_clearance(img, 0.0, cfg);
  for (Lateral l : {Lateral::kLeft, Lateral::kRight}) {
    const double clear = corridor_clearance(img, corridor_curvature(l, cfg), cfg);
    if (clear > best_clear) {
      best_clear = clear;
      best = l;
    }
  }
  Action a;
  a.lateral = best;
  a.longitudinal = best_clear < cfg.stop_distance_m   ? Longitudinal::kStop
                   : best_clear < cfg.slow_distance_m ? Longitudinal::kSlow
                                                      : Longitudinal::kFast;
  return a;
}

// ---------------------------------------------------------------------------
// Features and the linear policy.

inline constexpr int kPoolCells = 16;
inline constexpr std::size_t kPooledPerChannel = kPoolCells * kPoolCells;
inline constexpr std::size_t kEgoFeatures = 3;  // speed, yaw rate, bias
inline constexpr double kSpeedScale = 1.0 / 30.0;
inline constexpr double kYawRateScale = 1.0;

using FeatureVector = std::vector<double>;

// Plan-view layers that contribute pooled features, in feature order.
inline std::vector<Layer> feature_layers(const LayerFlags& flags) {
  std::vector<Layer> out = {Layer::kVehicles, Layer::kPedestrians};
  if (flags.map) out.push_back(Layer::kMap);
  if (flags.ego_history) out.push_back(Layer::kEgoHistory);
  return out;
}

inline std::size_t feature_size(const LayerFlags& flags) {
  return feature_layers(flags).size() * kPooledPerChannel + kEgoFeatures;
}

struct FeatureOptions {
  // Zero every plan-view feature (the "blind" baseline keeps only ego state).
  bool blind = false;
};

// 16x16 block means of each feature layer, then scaled speed, yaw rate, bias.
inline FeatureVector featurize(const PlanViewImage& img, double ego_speed, double ego_yaw_rate,
                               const FeatureOptions& opt = {}) {
  const GridSpec& spec = img.spec();
  if (spec.width_px % kPoolCells != 0 || spec.height_px % kPoolCells != 0) {
    throw std::invalid_argument("featurize: grid size must be a multiple of 16");
  }
  if (!img.has(Layer::kVehicles) || !img.has(Layer::kPedestrians)) {
    throw std::invalid_argument("featurize: grid needs vehicles and pedestrians channels");
  }
  const auto layers = feature_layers(spec.layers);
  FeatureVector f(layers.size() * kPooledPerChannel + kEgoFeatures, 0.0);
  if (!opt.blind) {
    const int bw = spec.width_px / kPoolCells;
    const int bh = spec.height_px / kPoolCells;
    const double inv = 1.0 / (static_cast<double>(bw) * bh);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto cells = img.channel(layers[li]);
      double* out = f.data() + li * kPooledPerChannel;
      std::array<std::uint32_t, kPoolCells> acc{};
      for (int r = 0; r < spec.height_px; ++r) {
        const std::uint8_t* row = cells.data() + static_cast<std::size_t>(r) * spec.width_px;
        for (std::size_t pc = 0; pc < kPoolCells; ++pc) {
          const std::uint8_t* block = row + pc * static_cast<std::size_t>(bw);
          std::uint32_t sum = 0;
          for (int c = 0; c < bw; ++c) sum += block[c];
          acc[pc] += sum;
        }
        if ((r + 1) % bh == 0) {
          const std::size_t pr = static_cast<std::size_t>(r / bh);
          for (std::size_t pc = 0; pc < kPoolCells; ++pc) out[pr * kPoolCells + pc] = acc[pc] * inv;
          acc.fill(0);
        }
      }
    }
  }
  const std::size_t tail = f.size() - kEgoFeatures;
  f[tail] = ego_speed * kSpeedScale;
  f[tail + 1] = ego_yaw_rate * kYawRateScale;
  f[tail + 2] = 1.0;
  return f;
}

// Same layout as featurize with every plan-view entry zero.
inline FeatureVector blind_features(const LayerFlags& layers, double ego_speed, double ego_yaw_rate) {
  FeatureVector f(feature_size(layers), 0.0);
  const std::size_t tail = f.size() - kEgoFeatures;
  f[tail] = ego_speed * kSpeedScale;
  f[tail + 1] = ego_yaw_rate * kYawRateScale;
  f[tail + 2] = 1.0;
  return f;
}

class LinearPolicyWeights {
 public:
  LinearPolicyWeights() = default;
  LinearPolicyWeights(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), w_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return w_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return w_[r * cols_ + c]; }
  std::span<double> data() { return w_; }
  std::span<const double> data() const { return w_; }

  friend bool operator==(const LinearPolicyWeights&, const LinearPolicyWeights&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> w_;
};

inline std::array<double, kActionCount> linear_policy_logits(const LinearPolicyWeights& w,
                                                             std::span<const double> feat) {
  if (w.rows() != kActionCount || w.cols() != feat.size()) {
    throw std::invalid_argument("linear_policy_logits: dimension mismatch (" + std::to_string(w.rows()) + "x" +
                                std::to_string(w.cols()) + " vs " + std::to_string(feat.size()) + ")");
  }
  std::array<double, kActionCount> out{};
  for (std::size_t k = 0; k < kActionCount; ++k) {
    const double* row = w.data().data() + k * w.cols();
    double acc = 0.0;
    for (std::size_t j = 0; j < feat.size(); ++j) acc += row[j] * feat[j];
    out[k] = acc;
  }
  return out;
}

// Index of the largest score; ties go to the lowest index.
inline int argmax(std::span<const double> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

inline Action linear_policy_action(const LinearPolicyWeights& w, std::span<const double> feat) {
  const auto logits = linear_policy_logits(w, feat);
  return Action::from_index(argmax(logits));
}

// Flat weight file: "MPVW", rows and cols as little-endian u32, then row-major
// little-endian IEEE-754 doubles.
inline std::string encode_weights(const LinearPolicyWeights& w) {
  std::string out = "MPVW";
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put_u32(static_cast<std::uint32_t>(w.rows()));
  put_u32(static_cast<std::uint32_t>(w.cols()));
  for (double d : w.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  return out;
}

inline LinearPolicyWeights decode_weights(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "MPVW") throw std::runtime_error("weights: bad magic");
  auto get_u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
  };
  const std::size_t rows = get_u32(4);
  const std::size_t cols = get_u32(8);
  if (bytes.size() != 12 + rows * cols * 8) throw std::runtime_error("weights: truncated or oversized file");
  LinearPolicyWeights w(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[12 + 8 * i + b])) << (8 * b);
    }
    const double v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) throw std::runtime_error("weights: non-finite entry");
    w.data()[i] = v;
  }
  return w;
}

inline void save_weights(const LinearPolicyWeights& w, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const std::string bytes = encode_weights(w);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline LinearPolicyWeights load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

}  // namespace mpv

#endif  // MPV_POLICY_HPP_
