#ifndef MPV_SENSOR_HPP_
#define MPV_SENSOR_HPP_

// Synthetic perception. Ground-truth projections are corrupted by a noise model
// whose three parameters each drive exactly one 3D-estimation metric:
//   depth  -> multiplicative log-normal      (Abs Rel)
//   yaw    -> additive von Mises             (orientation score)
//   size   -> per-dimension log-normal       (volume ratio)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mpv/geometry.hpp"
#include "mpv/raster.hpp"
#include "mpv/world.hpp"

namespace mpv {

struct ClassNoise {
  double depth_sigma_log = 0.0;
  // Concentration of the yaw noise; +inf means exact yaw.
  double yaw_kappa = std::numeric_limits<double>::infinity();
  double dim_sigma_log = 0.0;
  double miss_rate = 0.0;

  void validate() const {
    if (depth_sigma_log < 0.0 || yaw_kappa < 0.0 || dim_sigma_log < 0.0) {
      throw std::invalid_argument("ClassNoise: parameters must be nonnegative");
    }
    if (miss_rate < 0.0 || miss_rate >= 1.0) throw std::invalid_argument("ClassNoise: miss_rate must lie in [0, 1)");
  }
};

struct NoiseProfile {
  ClassNoise vehicle;
  ClassNoise pedestrian;

  const ClassNoise& for_class(ObjectClass c) const { return c == ObjectClass::kVehicle ? vehicle : pedestrian; }
  ClassNoise& for_class(ObjectClass c) { return c == ObjectClass::kVehicle ? vehicle : pedestrian; }
};

struct SensedObject {
  int actor_id = 0;
  Detection2D detection;
  Estimate3D estimate;
  Estimate3D truth;
};

// Best & Fisher (1979) rejection sampler for the von Mises distribution
// centered at 0, result in [-pi, pi].
template <typename Rng>
double sample_von_mises(double kappa, Rng& rng) {
  if (std::isinf(kappa)) return 0.0;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (kappa < 1e-8) return kPi * (2.0 * uni(rng) - 1.0);
  if (kappa > 1e6) {
    // Wrapped-normal limit; the rejection constants lose precision here.
    return wrap_pi(std::normal_distribution<double>(0.0, 1.0 / std::sqrt(kappa))(rng));
  }
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  while (true) {
    const double u1 = uni(rng);
    const double u2 = uni(rng);
    const double u3 = uni(rng);
    const double z = std::cos(kPi * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double theta = std::acos(std::clamp(f, -1.0, 1.0));
      return u3 > 0.5 ? theta : -theta;
    }
  }
}

// Applies the estimation noise to one ground-truth estimate.
template <typename Rng>
Estimate3D perturb(const Estimate3D& truth, const ClassNoise& noise, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Estimate3D est = truth;
  est.depth_m = truth.depth_m * std::exp(noise.depth_sigma_log * gauss(rng));
  est.local_yaw_rad = wrap_two_pi(truth.local_yaw_rad + sample_von_mises(noise.yaw_kappa, rng));
  est.length_m = truth.length_m * std::exp(noise.dim_sigma_log * gauss(rng));
  est.width_m = truth.width_m * std::exp(noise.dim_sigma_log * gauss(rng));
  est.height_m = truth.height_m * std::exp(noise.dim_sigma_log * gauss(rng));
  return est;
}

struct SensorConfig {
  double max_depth_m = 64.0;
};

// Dash camera: 1920x1080 with a 60 degree horizontal field of view.
inline CameraIntrinsics default_camera() { return make_intrinsics(1920.0, 1080.0, 60.0); }

// Visible actors (in field of view, depth within range) with noisy estimates,
// ordered by actor id. The 2D box is recomputed from the noisy estimate along
// the true viewing ray, so the image offset stays consistent with the depth.
template <typename Rng>
std::vector<SensedObject> sense(const WorldState& w, const CameraIntrinsics& intr, const NoiseProfile& profile,
                                Rng& rng, const SensorConfig& cfg = {}) {
  std::vector<const ActorState*> order;
  order.reserve(w.actors.size());
  for (const ActorState& a : w.actors) order.push_back(&a);
  std::sort(order.begin(), order.end(), [](const ActorState* a, const ActorState* b) { return a->id < b->id; });

  const PlanPose ego = w.ego.pose;
  std::vector<SensedObject> out;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (const ActorState* a : order) {
    const auto obs = project_to_camera(a->object_class, w.relative_world_pose(*a), a->dims, ego, intr);
    if (!obs || obs->estimate.depth_m > cfg.max_depth_m) continue;
    const ClassNoise& noise = profile.for_class(a->object_class);
    if (noise.miss_rate > 0.0 && uni(rng) < noise.miss_rate) continue;

    SensedObject s;
    s.actor_id = a->id;
    s.truth = obs->estimate;
    s.estimate = perturb(obs->estimate, noise, rng);
    const PlanPose noisy = reproject(obs->detection, s.estimate, intr);
    s.detection = detection_from_camera_pose(a->object_class, noisy,
                                             {s.estimate.length_m, s.estimate.width_m, s.estimate.height_m}, intr);
    out.push_back(s);
  }
  return out;
}

// Camera-frame boxes for rendering, from the (noisy) estimates.
inline std::vector<PlanObject> to_plan_objects(std::span<const SensedObject> sensed, const CameraIntrinsics& intr) {
  std::vector<PlanObject> out;
  out.reserve(sensed.size());
  for (const SensedObject& s : sensed) {
    out.push_back({s.detection.object_class, reproject(s.detection, s.estimate, intr),
                   {s.estimate.length_m, s.estimate.width_m, s.estimate.height_m}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration.

struct CalibrationTargets {
  double abs_rel = 0.0;
  double os = 1.0;
  double dim = 1.0;
};

class UnreachableTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CalibrationOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 20190301;
  int max_iterations = 60;
};

namespace detail {

// Bisection for an increasing f on [lo, hi].
template <typename F>
double bisect_increasing(F f, double target, double lo, double hi, int iterations, const char* what) {
  const double flo = f(lo);
  const double fhi = f(hi);
  if (target < flo || target > fhi) {
    throw UnreachableTarget(std::string("calibrate: target for ") + what + " outside the reachable range");
  }
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline std::vector<double> standard_normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> z(n);
  for (double& v : z) v = gauss(rng);
  return z;
}

}  // namespace detail

// Monte-Carlo estimates of the three metrics under a given noise parameter.
inline double mc_abs_rel(double sigma, std::span<const double> z) {
  double sum = 0.0;
  for (double v : z) sum += std::abs(std::exp(sigma * v) - 1.0);
  return sum / static_cast<double>(z.size());
}

inline double mc_orientation_score(double kappa, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += 0.5 * (1.0 + std::cos(sample_von_mises(kappa, rng)));
  return sum / static_cast<double>(n);
}

// Volume ratio min(V'/V, V/V') with three independent log-normal factors.
inline double mc_dim(double sigma, std::span<const double> z) {
  double sum = 0.0;
  const std::size_t n = z.size() / 3;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(-std::abs(sigma * (z[3 * i] + z[3 * i + 1] + z[3 * i + 2])));
  return sum / static_cast<double>(n);
}

// Finds noise parameters that reproduce the target metrics. Each parameter
// is solved independently by bisection against a Monte-Carlo estimate that
// reuses the same draws at every trial value.
inline ClassNoise calibrate(const CalibrationTargets& targets, double miss_rate = 0.0,
                            const CalibrationOptions& opt = {}) {
  if (targets.abs_rel < 0.0 || targets.os < 0.0 || targets.os > 1.0 || targets.dim <= 0.0 || targets.dim > 1.0) {
    throw std::invalid_argument("calibrate: targets outside metric ranges");
  }
  ClassNoise noise;
  noise.miss_rate = miss_rate;
  const int iters = opt.max_iterations;

  if (targets.abs_rel > 0.0) {
    const auto z = detail::standard_normals(opt.samples, opt.seed);
    noise.depth_sigma_log = detail::bisect_increasing([&](double s) { return mc_abs_rel(s, z); }, targets.abs_rel, 0.0,
                                                      3.0, iters, "abs_rel");
  }

  if (targets.os < 1.0) {
    // OS increases with kappa; search over log(kappa).
    auto f = [&](double log_kappa) { return mc_orientation_score(std::exp(log_kappa), opt.samples, opt.seed + 1); };
    noise.yaw_kappa = std::exp(detail::bisect_increasing(f, targets.os, std::log(1e-6), std::log(1e6), iters, "os"));
  }

  if (targets.dim < 1.0) {
    const auto z = detail::standard_normals(3 * opt.samples, opt.seed + 2);
    // Dim decreases with sigma, so bisect on its negation.
    noise.dim_sigma_log = detail::bisect_increasing([&](double s) { return -mc_dim(s, z); }, -targets.dim, 0.0, 3.0,
                                                    iters, "dim");
  }
  return noise;
}

// Reported 3D-estimation quality of the reference perception stack.
inline constexpr CalibrationTargets kVehicleTargets{0.102, 0.945, 0.889};
inline constexpr CalibrationTargets kPedestrianTargets{0.059, 0.873, 0.968};
inline constexpr double kVehicleMissRate = 0.03;
inline constexpr double kPedestrianMissRate = 0.05;

// Profile calibrated to the reference targets; computed once per process.
inline const NoiseProfile& default_noise_profile() {
  static const NoiseProfile profile = [] {
    NoiseProfile p;
    p.vehicle = calibrate(kVehicleTargets, kVehicleMissRate);
    p.pedestrian = calibrate(kPedestrianTargets, kPedestrianMissRate);
    return p;
  }();
  return profile;
}

}  // namespace mpv

#endif  // MPV_SENSOR_HPP_
