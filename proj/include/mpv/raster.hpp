#ifndef MPV_RASTER_HPP_
#define MPV_RASTER_HPP_

// Per-class binary occupancy grids in the plan view.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mpv/geometry.hpp"

namespace mpv {

enum class Layer : std::size_t { kVehicles = 0, kPedestrians = 1, kMap = 2, kEgoHistory = 3 };
inline constexpr std::size_t kLayerCount = 4;

inline std::string_view layer_name(Layer l) {
  switch (l) {
    case Layer::kVehicles: return "vehicles";
    case Layer::kPedestrians: return "pedestrians";
    case Layer::kMap: return "map";
    case Layer::kEgoHistory: return "ego_history";
  }
  return "?";
}

inline Layer layer_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kLayerCount; ++i) {
    if (layer_name(static_cast<Layer>(i)) == name) return static_cast<Layer>(i);
  }
  throw std::invalid_argument("unknown channel: " + std::string(name));
}

inline Layer layer_for(ObjectClass c) {
  return c == ObjectClass::kVehicle ? Layer::kVehicles : Layer::kPedestrians;
}

struct LayerFlags {
  bool vehicles = true;
  bool pedestrians = true;
  bool map = false;
  bool ego_history = false;

  bool has(Layer l) const {
    switch (l) {
      case Layer::kVehicles: return vehicles;
      case Layer::kPedestrians: return pedestrians;
      case Layer::kMap: return map;
      case Layer::kEgoHistory: return ego_history;
    }
    return false;
  }
};

// Grid geometry. Travel frame: lateral [-W*res/2, W*res/2) by forward
// [0, H*res), ego at the bottom center. North-up frame: both axes centered on
// the ego.
struct GridSpec {
  int width_px = 512;
  int height_px = 512;
  double meters_per_px = 0.125;
  FrameTag frame = FrameTag::kTravel;
  LayerFlags layers;

  double x_min() const { return -0.5 * width_px * meters_per_px; }
  double y_min() const { return frame == FrameTag::kTravel ? 0.0 : -0.5 * height_px * meters_per_px; }
  double y_max() const { return y_min() + height_px * meters_per_px; }
  std::size_t cells() const { return static_cast<std::size_t>(width_px) * static_cast<std::size_t>(height_px); }

  void validate() const {
    if (width_px <= 0 || height_px <= 0) throw std::invalid_argument("GridSpec: non-positive size");
    if (!(meters_per_px > 0.0)) throw std::invalid_argument("GridSpec: non-positive resolution");
    if (frame != FrameTag::kTravel && frame != FrameTag::kNorthUp) {
      throw std::invalid_argument("GridSpec: frame must be travel or north_up");
    }
  }

  // Metric center of cell (row, col); row 0 is the top (farthest forward).
  Vec2 cell_center(int row, int col) const {
    return {x_min() + (col + 0.5) * meters_per_px, y_max() - (row + 0.5) * meters_per_px};
  }

  // Cell containing a metric point, or false when outside the grid.
  bool cell_of(Vec2 p, int& row, int& col) const {
    const double fc = std::floor((p.x - x_min()) / meters_per_px);
    const double fr = std::floor((p.y - y_min()) / meters_per_px);
    if (fc < 0.0 || fc >= width_px || fr < 0.0 || fr >= height_px) return false;
    col = static_cast<int>(fc);
    row = height_px - 1 - static_cast<int>(fr);
    return true;
  }
};

class PlanViewImage {
 public:
  PlanViewImage() = default;
  explicit PlanViewImage(const GridSpec& spec) : spec_(spec) {
    spec_.validate();
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      if (spec_.layers.has(static_cast<Layer>(i))) channels_[i].assign(spec_.cells(), 0);
    }
  }

  const GridSpec& spec() const { return spec_; }
  bool has(Layer l) const { return !channels_[static_cast<std::size_t>(l)].empty(); }

  std::span<const std::uint8_t> channel(Layer l) const { return checked(l); }
  std::span<std::uint8_t> channel(Layer l) {
    auto& c = channels_[static_cast<std::size_t>(l)];
    if (c.empty()) throw std::invalid_argument("channel not enabled: " + std::string(layer_name(l)));
    return c;
  }

  std::uint8_t at(Layer l, int row, int col) const {
    return checked(l)[static_cast<std::size_t>(row) * spec_.width_px + col];
  }
  void set(Layer l, int row, int col) { channel(l)[static_cast<std::size_t>(row) * spec_.width_px + col] = 1; }

  std::size_t count(Layer l) const {
    std::size_t n = 0;
    for (std::uint8_t v : checked(l)) n += v;
    return n;
  }

  friend bool operator==(const PlanViewImage& a, const PlanViewImage& b) {
    return a.channels_ == b.channels_ && a.spec_.width_px == b.spec_.width_px &&
           a.spec_.height_px == b.spec_.height_px;
  }

 private:
  const std::vector<std::uint8_t>& checked(Layer l) const {
    const auto& c = channels_[static_cast<std::size_t>(l)];
    if (c.empty()) throw std::invalid_argument("channel not enabled: " + std::string(layer_name(l)));
    return c;
  }

  GridSpec spec_;
  std::array<std::vector<std::uint8_t>, kLayerCount> channels_;
};

// Sets every cell whose center lies inside or on the boundary of the convex
// quadrilateral `corners` (grid metric coordinates, either winding).
inline void rasterize_box(PlanViewImage& img, Layer channel, const std::array<Vec2, 4>& corners) {
  const GridSpec& spec = img.spec();
  auto cells = img.channel(channel);

  double area2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) area2 += cross(corners[i], corners[(i + 1) % 4]);
  const double orient = area2 >= 0.0 ? 1.0 : -1.0;

  double lo_x = corners[0].x, hi_x = corners[0].x, lo_y = corners[0].y, hi_y = corners[0].y;
  for (const Vec2& c : corners) {
    lo_x = std::min(lo_x, c.x);
    hi_x = std::max(hi_x, c.x);
    lo_y = std::min(lo_y, c.y);
    hi_y = std::max(hi_y, c.y);
  }
  const double res = spec.meters_per_px;
  // Candidate column/row ranges, padded by one cell against rounding.
  const int c0 = std::max(0, static_cast<int>(std::floor((lo_x - spec.x_min()) / res)) - 1);
  const int c1 = std::min(spec.width_px - 1, static_cast<int>(std::floor((hi_x - spec.x_min()) / res)) + 1);
  const int r0 = std::max(0, static_cast<int>(std::floor((spec.y_max() - hi_y) / res)) - 1);
  const int r1 = std::min(spec.height_px - 1, static_cast<int>(std::floor((spec.y_max() - lo_y) / res)) + 1);
  if (c0 > c1 || r0 > r1) return;

  std::array<Vec2, 4> edge{};
  for (std::size_t i = 0; i < 4; ++i) edge[i] = corners[(i + 1) % 4] - corners[i];

  for (int r = r0; r <= r1; ++r) {
    // Horizontal extent of the quad at this row's center line narrows the
    // columns that need the exact test.
    const double y = spec.y_max() - (r + 0.5) * res;
    double xl = std::numeric_limits<double>::infinity();
    double xr = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 4; ++i) {
      const Vec2 a = corners[i];
      const Vec2 b = corners[(i + 1) % 4];
      if ((y < std::min(a.y, b.y)) || (y > std::max(a.y, b.y))) continue;
      if (a.y == b.y) {
        xl = std::min({xl, a.x, b.x});
        xr = std::max({xr, a.x, b.x});
        continue;
      }
      const double x = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
      xl = std::min(xl, x);
      xr = std::max(xr, x);
    }
    if (xl > xr) continue;
    const int ca = std::max(c0, static_cast<int>(std::floor((xl - spec.x_min()) / res)) - 1);
    const int cb = std::min(c1, static_cast<int>(std::floor((xr - spec.x_min()) / res)) + 1);
    for (int c = ca; c <= cb; ++c) {
      const Vec2 p = spec.cell_center(r, c);
      bool inside = true;
      for (std::size_t i = 0; i < 4 && inside; ++i) {
        inside = orient * cross(edge[i], p - corners[i]) >= 0.0;
      }
      if (inside) cells[static_cast<std::size_t>(r) * spec.width_px + c] = 1;
    }
  }
}

struct PlanObject {
  ObjectClass object_class = ObjectClass::kVehicle;
  PlanPose pose;  // camera frame
  Dimensions dims;
};

// Sensor-side cuts applied in the camera frame before rendering.
inline constexpr double kMaxRenderDepthM = 64.0;
inline constexpr double kMaxRenderLateralM = 32.0;

struct RenderInputs {
  std::span<const PlanObject> objects;
  PlanPose ego_world_pose{0.0, 0.0, 0.0, FrameTag::kWorld};
  // Past ego world positions, oldest first; only read when the history layer is on.
  std::span<const Vec2> history;
  // Drivable-area quads in world coordinates; only read when the map layer is on.
  std::span<const std::array<Vec2, 4>> map_polygons;
};

// World point -> grid metric coordinates for the spec's frame.
inline Vec2 world_to_grid(Vec2 p, const PlanPose& ego_world_pose, FrameTag frame) {
  const Vec2 rel = p - ego_world_pose.position();
  return frame == FrameTag::kNorthUp ? rel : rotate(rel, -ego_world_pose.yaw_rad);
}

inline PlanViewImage render_plan_view(const RenderInputs& in, const GridSpec& spec) {
  PlanViewImage img(spec);
  const PlanPose ego{in.ego_world_pose.x_m, in.ego_world_pose.y_m, in.ego_world_pose.yaw_rad, FrameTag::kWorld};

  if (spec.layers.map) {
    for (const auto& quad : in.map_polygons) {
      std::array<Vec2, 4> g{};
      for (std::size_t i = 0; i < 4; ++i) g[i] = world_to_grid(quad[i], ego, spec.frame);
      rasterize_box(img, Layer::kMap, g);
    }
  }

  for (const PlanObject& obj : in.objects) {
    if (!spec.layers.has(layer_for(obj.object_class))) continue;
    if (obj.pose.y_m > kMaxRenderDepthM || std::abs(obj.pose.x_m) > kMaxRenderLateralM) continue;
    const PlanPose framed = to_frame(obj.pose, ego, spec.frame);
    rasterize_box(img, layer_for(obj.object_class), box_corners(framed, obj.dims.length_m, obj.dims.width_m));
  }

  if (spec.layers.ego_history) {
    for (const Vec2& p : in.history) {
      int row = 0, col = 0;
      if (spec.cell_of(world_to_grid(p, ego, spec.frame), row, col)) img.set(Layer::kEgoHistory, row, col);
    }
  }
  return img;
}

// Binary PGM (P5, maxval 255) of one channel; grid "up" is the first row.
inline std::string export_pgm(const PlanViewImage& img, std::string_view channel_name) {
  const Layer layer = layer_from_name(channel_name);
  if (!img.has(layer)) throw std::invalid_argument("channel not enabled: " + std::string(channel_name));
  const auto cells = img.channel(layer);
  std::string out = "P5\n" + std::to_string(img.spec().width_px) + " " + std::to_string(img.spec().height_px) +
                    "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) out[header + i] = cells[i] ? static_cast<char>(0xFF) : '\0';
  return out;
}

}  // namespace mpv

#endif  // MPV_RASTER_HPP_
