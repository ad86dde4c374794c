#ifndef MPV_TESTS_ORACLES_HPP_
#define MPV_TESTS_ORACLES_HPP_

// Naive reference implementations used to cross-check the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mpv/bench.hpp"
#include "mpv/geometry.hpp"
#include "mpv/imitation.hpp"
#include "mpv/raster.hpp"

namespace oracle {

using mpv::Vec2;

// Every cell center of the grid tested against the quad, no culling.
inline std::vector<std::uint8_t> sweep_fill(const mpv::GridSpec& spec, const std::array<Vec2, 4>& q) {
  std::vector<std::uint8_t> out(spec.cells(), 0);
  double area2 = 0.0;
  for (int i = 0; i < 4; ++i) area2 += q[i].x * q[(i + 1) % 4].y - q[i].y * q[(i + 1) % 4].x;
  const double s = area2 >= 0 ? 1.0 : -1.0;
  for (int r = 0; r < spec.height_px; ++r) {
    for (int c = 0; c < spec.width_px; ++c) {
      const double px = spec.x_min() + (c + 0.5) * spec.meters_per_px;
      const double py = spec.y_max() - (r + 0.5) * spec.meters_per_px;
      bool in = true;
      for (int i = 0; i < 4; ++i) {
        const Vec2 a = q[i];
        const Vec2 b = q[(i + 1) % 4];
        if (s * ((b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)) < 0.0) in = false;
      }
      if (in) out[static_cast<std::size_t>(r) * spec.width_px + c] = 1;
    }
  }
  return out;
}

// Local-coordinate membership test for a yawed rectangle.
inline bool in_rect(Vec2 p, const mpv::PlanPose& pose, double l, double w) {
  const double dx = p.x - pose.x_m, dy = p.y - pose.y_m;
  const double c = std::cos(pose.yaw_rad), s = std::sin(pose.yaw_rad);
  const double u = c * dx + s * dy;   // along the box's width axis
  const double v = -s * dx + c * dy;  // along its length axis
  return std::abs(u) <= w / 2 && std::abs(v) <= l / 2;
}

struct Metrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0, d1 = 0, d2 = 0, d3 = 0, os = 0, dim = 0;
};

inline Metrics metrics(const std::vector<mpv::EstimatePair>& pairs) {
  Metrics m;
  const double n = static_cast<double>(pairs.size());
  std::vector<double> sq, lsq;
  for (const auto& pr : pairs) {
    const mpv::Estimate3D& e = pr.first;
    const mpv::Estimate3D& t = pr.second;
    m.abs_rel += std::fabs(e.depth_m - t.depth_m) / t.depth_m / n;
    m.sq_rel += std::pow(e.depth_m - t.depth_m, 2) / t.depth_m / n;
    sq.push_back(std::pow(e.depth_m - t.depth_m, 2));
    lsq.push_back(std::pow(std::log(e.depth_m / t.depth_m), 2));
    const double ratio = e.depth_m > t.depth_m ? e.depth_m / t.depth_m : t.depth_m / e.depth_m;
    if (ratio < 1.25) m.d1 += 1 / n;
    if (ratio < std::pow(1.25, 2)) m.d2 += 1 / n;
    if (ratio < std::pow(1.25, 3)) m.d3 += 1 / n;
    m.os += (1 + std::cos(e.local_yaw_rad - t.local_yaw_rad)) / 2 / n;
    const double vp = e.length_m * e.width_m * e.height_m, vg = t.length_m * t.width_m * t.height_m;
    m.dim += (vp < vg ? vp / vg : vg / vp) / n;
  }
  double a = 0, b = 0;
  for (double v : sq) a += v;
  for (double v : lsq) b += v;
  m.rmse = std::sqrt(a / n);
  m.rmse_log = std::sqrt(b / n);
  return m;
}

struct Agg {
  double between = 0, int_rate = 0, int_std = 0, col_rate = 0, col_std = 0;
};

inline Agg aggregate(const std::vector<mpv::RolloutMetrics>& ms) {
  Agg a;
  double dist = 0;
  int col = 0, itv = 0;
  for (const auto& m : ms) {
    dist += m.distance_m;
    col += m.collisions;
    itv += m.interventions;
  }
  a.between = dist / (itv > 0 ? itv : 1);
  a.int_rate = 100.0 * itv / dist;
  a.col_rate = 100.0 * col / dist;
  auto pstd = [&](bool collisions) {
    std::vector<double> r;
    for (const auto& m : ms) {
      if (m.distance_m > 0) r.push_back(100.0 * (collisions ? m.collisions : m.interventions) / m.distance_m);
    }
    if (r.empty()) return 0.0;
    double mu = 0;
    for (double v : r) mu += v / static_cast<double>(r.size());
    double var = 0;
    for (double v : r) var += (v - mu) * (v - mu) / static_cast<double>(r.size());
    return std::sqrt(var);
  };
  a.int_std = pstd(false);
  a.col_std = pstd(true);
  return a;
}

// Block average of one channel, pool cells row-major, by direct summation.
inline std::vector<double> pool(const mpv::PlanViewImage& img, mpv::Layer layer, int out = 16) {
  const auto& spec = img.spec();
  const int bh = spec.height_px / out, bw = spec.width_px / out;
  std::vector<double> v(static_cast<std::size_t>(out * out), 0.0);
  for (int pr = 0; pr < out; ++pr) {
    for (int pc = 0; pc < out; ++pc) {
      double s = 0;
      for (int r = pr * bh; r < (pr + 1) * bh; ++r) {
        for (int c = pc * bw; c < (pc + 1) * bw; ++c) s += img.at(layer, r, c);
      }
      v[static_cast<std::size_t>(pr * out + pc)] = s / (bh * bw);
    }
  }
  return v;
}

// Largest per-entry relative gap between the analytic gradient of the
// single-example cross-entropy and central differences (extended precision). Entries where both
// are exactly zero (zero features) are skipped.
inline double gradient_check(const mpv::LinearPolicyWeights& w, const mpv::FeatureVector& x, int label,
                             double h = 1e-5) {
  const std::vector<mpv::FeatureVector> xs = {x};
  const std::vector<int> ys = {label};
  const auto lg = mpv::loss_and_gradient(w, xs, ys);
  auto loss = [&](const mpv::LinearPolicyWeights& v) {
    long double z[9];
    long double mx = -1e300L;
    for (std::size_t k = 0; k < 9; ++k) {
      long double acc = 0;
      for (std::size_t j = 0; j < x.size(); ++j) acc += static_cast<long double>(v(k, j)) * x[j];
      z[k] = acc;
      mx = std::max(mx, acc);
    }
    long double sum = 0;
    for (long double zk : z) sum += std::exp(zk - mx);
    return std::log(sum) + mx - z[label];
  };
  double worst = 0;
  mpv::LinearPolicyWeights v = w;
  for (std::size_t k = 0; k < w.rows(); ++k) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double orig = v(k, j);
      v(k, j) = orig + h;
      const long double up = loss(v);
      v(k, j) = orig - h;
      const long double down = loss(v);
      v(k, j) = orig;
      const double num = static_cast<double>((up - down) / (2 * h));
      const double ana = lg.gradient(k, j);
      if (num == 0.0 && ana == 0.0) continue;
      worst = std::max(worst, std::abs(num - ana) / std::max(std::abs(num), std::abs(ana)));
    }
  }
  return worst;
}

}  // namespace oracle

#endif  // MPV_TESTS_ORACLES_HPP_
