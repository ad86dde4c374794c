#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "mpv/policy.hpp"
#include "oracles.hpp"

namespace {

using namespace mpv;

GridSpec travel_spec() { return GridSpec{}; }

TEST(ActionEncoding, NineStableIndices) {
  EXPECT_EQ((Action{Lateral::kLeft, Longitudinal::kFast}).index(), 0);
  EXPECT_EQ((Action{Lateral::kStraight, Longitudinal::kFast}).index(), 3);
  EXPECT_EQ((Action{Lateral::kRight, Longitudinal::kStop}).index(), 8);
  for (int i = 0; i < kActionCount; ++i) EXPECT_EQ(Action::from_index(i).index(), i);
  EXPECT_THROW(Action::from_index(9), std::out_of_range);
  EXPECT_THROW(Action::from_index(-1), std::out_of_range);
}

TEST(PidControl, Examples) {
  EgoControl c = pid_control({Lateral::kStraight, Longitudinal::kStop}, 0.0);
  EXPECT_EQ(c.throttle, 0.0);
  EXPECT_EQ(c.brake, 0.0);
  EXPECT_EQ(c.steer, 0.0);
  c = pid_control({Lateral::kStraight, Longitudinal::kFast}, 0.0);
  EXPECT_EQ(c.throttle, 1.0);
  EXPECT_EQ(c.brake, 0.0);
  c = pid_control({Lateral::kLeft, Longitudinal::kSlow}, 5.0);
  EXPECT_EQ(c.steer, -0.5);
  EXPECT_EQ(c.throttle, 0.0);
  EXPECT_EQ(c.brake, 0.0);
  c = pid_control({Lateral::kRight, Longitudinal::kSlow}, 3.0);
  EXPECT_EQ(c.steer, 0.5);
  EXPECT_DOUBLE_EQ(c.throttle, 0.5);
  c = pid_control({Lateral::kStraight, Longitudinal::kSlow}, 6.0);
  EXPECT_DOUBLE_EQ(c.brake, 0.5);
  // stopping from above 2 m/s brakes fully
  c = pid_control({Lateral::kStraight, Longitudinal::kStop}, 2.5);
  EXPECT_EQ(c.brake, 1.0);
  c = pid_control({Lateral::kStraight, Longitudinal::kStop}, 1.0);
  EXPECT_DOUBLE_EQ(c.brake, 0.5);
  EXPECT_THROW(pid_control({}, -0.1), std::domain_error);
}

TEST(PidControl, OutputsAlwaysValid) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> v(0, 35);
  for (int i = 0; i < 10000; ++i) {
    const Action a = Action::from_index(static_cast<int>(rng() % 9));
    const EgoControl c = pid_control(a, v(rng));
    ASSERT_NO_THROW(c.validate());
    ASSERT_EQ(c.throttle * c.brake, 0.0);
  }
}

// Arc length to the first occupied cell center inside each corridor, found by
// projecting cell centers onto the arc.
double oracle_clearance(const PlanViewImage& img, double c, double width, double range) {
  const GridSpec& spec = img.spec();
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < spec.height_px; ++r) {
    for (int col = 0; col < spec.width_px; ++col) {
      if (!img.at(Layer::kVehicles, r, col) && !img.at(Layer::kPedestrians, r, col)) continue;
      const Vec2 p = spec.cell_center(r, col);
      double s = 0, off = 0;
      if (c == 0.0) {
        s = p.y;
        off = p.x;
      } else {
        const double radius = 1.0 / std::abs(c);
        const Vec2 center{c > 0 ? -radius : radius, 0.0};
        const Vec2 d = p - center;
        // angle swept from the start point, measured in the direction of travel
        const double ang = c > 0 ? std::atan2(d.y, d.x) : std::atan2(d.y, -d.x);
        s = radius * ang;
        off = (c > 0 ? 1.0 : -1.0) * (norm(d) - radius);
      }
      if (s >= 0 && s <= range && std::abs(off) <= width / 2) best = std::min(best, s);
    }
  }
  return best;
}

TEST(Occupancy, EmptyGridGoesStraightFast) {
  const PlanViewImage img(travel_spec());
  EXPECT_EQ(occupancy_policy(img, 5.0), (Action{Lateral::kStraight, Longitudinal::kFast}));
}

TEST(Occupancy, EverythingBlockedStopsStraight) {
  PlanViewImage img(travel_spec());
  rasterize_box(img, Layer::kVehicles, {Vec2{-6, 0}, Vec2{6, 0}, Vec2{6, 4}, Vec2{-6, 4}});
  EXPECT_EQ(occupancy_policy(img, 5.0), (Action{Lateral::kStraight, Longitudinal::kStop}));
}

TEST(Occupancy, BlockOnStraightAndLeftPicksRight) {
  PlanViewImage img(travel_spec());
  rasterize_box(img, Layer::kVehicles, {Vec2{-4, 9.5}, Vec2{0.5, 9.5}, Vec2{0.5, 10.5}, Vec2{-4, 10.5}});
  const PolicyConfig cfg;
  const double straight = oracle_clearance(img, 0.0, 3.0, 24.0);
  const double left = oracle_clearance(img, 0.05, 3.0, 24.0);
  const double right = oracle_clearance(img, -0.05, 3.0, 24.0);
  EXPECT_NEAR(straight, 9.5625, 1e-9);
  EXPECT_LT(left, 11.0);
  EXPECT_TRUE(std::isinf(right));
  EXPECT_NEAR(corridor_clearance(img, 0.0, cfg), straight, 0.13);
  EXPECT_NEAR(corridor_clearance(img, 0.05, cfg), left, 0.13);
  EXPECT_TRUE(std::isinf(corridor_clearance(img, -0.05, cfg)));
  EXPECT_EQ(occupancy_policy(img, 5.0), (Action{Lateral::kRight, Longitudinal::kFast}));
}

TEST(Occupancy, SlowAndStopBands) {
  for (double y : {5.0, 12.0, 20.0}) {
    PlanViewImage img(travel_spec());
    // wall across every corridor at depth y
    rasterize_box(img, Layer::kPedestrians, {Vec2{-20, y}, Vec2{20, y}, Vec2{20, y + 1}, Vec2{-20, y + 1}});
    const Action a = occupancy_policy(img, 5.0);
    // 24 m along a curved corridor only reaches 18.6 m forward, so at 20 m
    // the left arc is clear and wins as the first strictly better option
    EXPECT_EQ(a.lateral, y < 18 ? Lateral::kStraight : Lateral::kLeft) << y;
    EXPECT_EQ(a.longitudinal, y < 8 ? Longitudinal::kStop : y < 16 ? Longitudinal::kSlow : Longitudinal::kFast) << y;
  }
}

TEST(Occupancy, ClearanceMatchesArcOracleOnRandomScenes) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> x(-12, 12), y(0, 30), yaw(0, kTwoPi);
  const PolicyConfig cfg;
  for (int t = 0; t < 40; ++t) {
    PlanViewImage img(travel_spec());
    for (int k = 0; k < 3; ++k) rasterize_box(img, Layer::kVehicles, box_corners({x(rng), y(rng), yaw(rng)}, 4.5, 1.9));
    for (double c : {0.05, 0.0, -0.05}) {
      const double got = corridor_clearance(img, c, cfg);
      const double want = oracle_clearance(img, c, cfg.corridor_width_m, cfg.corridor_range_m);
      if (std::isinf(want)) {
        EXPECT_TRUE(std::isinf(got) || got > cfg.corridor_range_m - 0.3) << t << " " << c;
      } else {
        ASSERT_FALSE(std::isinf(got)) << t << " " << c << " want " << want;
        EXPECT_NEAR(got, want, 0.3) << t << " " << c;
      }
    }
  }
}

TEST(Occupancy, InsertionOrderIrrelevant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> x(-10, 10), y(1, 30), yaw(0, kTwoPi);
  for (int t = 0; t < 20; ++t) {
    std::vector<PlanObject> objs;
    for (int k = 0; k < 6; ++k) objs.push_back({ObjectClass::kVehicle, {x(rng), y(rng), yaw(rng)}, {4.5, 1.9, 1.5}});
    RenderInputs in;
    in.objects = objs;
    const Action a = occupancy_policy(render_plan_view(in, travel_spec()), 8.0);
    std::reverse(objs.begin(), objs.end());
    in.objects = objs;
    EXPECT_EQ(a, occupancy_policy(render_plan_view(in, travel_spec()), 8.0));
  }
}

TEST(Occupancy, RejectsNorthUp) {
  GridSpec s;
  s.frame = FrameTag::kNorthUp;
  EXPECT_THROW(occupancy_policy(PlanViewImage(s), 0.0), FrameMismatch);
}

TEST(CorridorPoint, Geometry) {
  const Vec2 p = corridor_point(0.05, kPi / 0.05 / 2, 0.0);  // quarter circle of radius 20 to the left
  EXPECT_NEAR(p.x, -20.0, 1e-9);
  EXPECT_NEAR(p.y, 20.0, 1e-9);
  const Vec2 q = corridor_point(-0.05, kPi / 0.05 / 2, 1.0);
  EXPECT_NEAR(q.x, 20.0, 1e-9);
  EXPECT_NEAR(q.y, 20.0 - 1.0, 1e-9);
  EXPECT_EQ(corridor_point(0.0, 7.0, -1.0), (Vec2{-1.0, 7.0}));
}

// --- features and linear policy ---

TEST(Featurize, ZeroGrid) {
  const FeatureVector f = featurize(PlanViewImage(travel_spec()), 0.0, 0.0);
  ASSERT_EQ(f.size(), 515u);
  for (std::size_t i = 0; i + 1 < f.size(); ++i) ASSERT_EQ(f[i], 0.0);
  EXPECT_EQ(f.back(), 1.0);
}

TEST(Featurize, EgoTail) {
  const FeatureVector f = featurize(PlanViewImage(travel_spec()), 15.0, -0.2);
  EXPECT_DOUBLE_EQ(f[512], 0.5);
  EXPECT_DOUBLE_EQ(f[513], -0.2);
  EXPECT_EQ(f[514], 1.0);
}

TEST(Featurize, FullVehicleChannel) {
  PlanViewImage img(travel_spec());
  for (auto& v : img.channel(Layer::kVehicles)) v = 1;
  const FeatureVector f = featurize(img, 0.0, 0.0);
  for (std::size_t i = 0; i < 256; ++i) ASSERT_EQ(f[i], 1.0);
  for (std::size_t i = 256; i < 512; ++i) ASSERT_EQ(f[i], 0.0);
}

TEST(Featurize, BlockMassAndOracle) {
  PlanViewImage img(travel_spec());
  // 16 columns x 32 rows straddling pool boundaries
  for (int r = 100; r < 132; ++r) {
    for (int c = 40; c < 56; ++c) img.set(Layer::kPedestrians, r, c);
  }
  const FeatureVector f = featurize(img, 0.0, 0.0);
  double mass = 0;
  for (std::size_t i = 256; i < 512; ++i) mass += f[i];
  EXPECT_DOUBLE_EQ(mass, 512.0 / 1024.0);
  const auto want = oracle::pool(img, Layer::kPedestrians);
  for (std::size_t i = 0; i < 256; ++i) ASSERT_DOUBLE_EQ(f[256 + i], want[i]) << i;
  // rows 100..131 touch pool rows 3 and 4, columns 40..55 touch pool columns 1
  EXPECT_DOUBLE_EQ(f[256 + 3 * 16 + 1], 16.0 * 28 / 1024);
  EXPECT_DOUBLE_EQ(f[256 + 4 * 16 + 1], 16.0 * 4 / 1024);
}

TEST(Featurize, MatchesPoolingOracleWithAllLayers) {
  GridSpec spec;
  spec.layers.map = spec.layers.ego_history = true;
  PlanViewImage img(spec);
  std::mt19937_64 rng(9);
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    for (auto& v : img.channel(static_cast<Layer>(l))) v = (rng() % 7 == 0);
  }
  const FeatureVector f = featurize(img, 3.0, 0.1);
  ASSERT_EQ(f.size(), 4u * 256 + 3);
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    const auto want = oracle::pool(img, static_cast<Layer>(l));
    for (std::size_t i = 0; i < 256; ++i) ASSERT_DOUBLE_EQ(f[l * 256 + i], want[i]);
  }
  for (std::size_t i = 0; i < 1024; ++i) {
    ASSERT_GE(f[i], 0.0);
    ASSERT_LE(f[i], 1.0);
  }
  // blind variant keeps only the ego tail
  const FeatureVector b = featurize(img, 3.0, 0.1, {true});
  EXPECT_EQ(b, blind_features(spec.layers, 3.0, 0.1));
  for (std::size_t i = 0; i < 1024; ++i) ASSERT_EQ(b[i], 0.0);
  EXPECT_EQ(b[1026], 1.0);
}

TEST(Featurize, RejectsBadGrid) {
  GridSpec odd;
  odd.width_px = 500;
  EXPECT_THROW(featurize(PlanViewImage(odd), 0, 0), std::invalid_argument);
  GridSpec no_ped;
  no_ped.layers.pedestrians = false;
  EXPECT_THROW(featurize(PlanViewImage(no_ped), 0, 0), std::invalid_argument);
}

TEST(LinearPolicy, ZeroWeightsPickIndexZero) {
  const LinearPolicyWeights w(9, 515);
  const FeatureVector f = featurize(PlanViewImage(travel_spec()), 4.0, 0.1);
  for (double v : linear_policy_logits(w, f)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(linear_policy_action(w, f).index(), 0);
}

TEST(LinearPolicy, OneHotBiasRow) {
  const FeatureVector f = featurize(PlanViewImage(travel_spec()), 0.0, 0.0);
  for (int k = 0; k < 9; ++k) {
    LinearPolicyWeights w(9, 515);
    w(static_cast<std::size_t>(k), 514) = 1.0;
    EXPECT_EQ(linear_policy_action(w, f).index(), k);
  }
}

TEST(LinearPolicy, LogitsMatchDotProduct) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 50; ++t) {
    LinearPolicyWeights w(9, 515);
    for (double& v : w.data()) v = g(rng);
    FeatureVector f(515);
    for (double& v : f) v = g(rng);
    const auto got = linear_policy_logits(w, f);
    for (std::size_t k = 0; k < 9; ++k) {
      long double acc = 0;
      for (std::size_t j = 0; j < 515; ++j) acc += static_cast<long double>(w(k, j)) * f[j];
      EXPECT_NEAR(got[k], static_cast<double>(acc), 1e-12);
    }
  }
}

TEST(LinearPolicy, ArgmaxInvariantToCommonRowShift) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0, 1);
  for (int t = 0; t < 200; ++t) {
    LinearPolicyWeights w(9, 515);
    for (double& v : w.data()) v = g(rng);
    FeatureVector f(515);
    for (double& v : f) v = std::abs(g(rng));
    const int before = linear_policy_action(w, f).index();
    FeatureVector shift(515);
    for (double& v : shift) v = 3 * g(rng);
    for (std::size_t k = 0; k < 9; ++k) {
      for (std::size_t j = 0; j < 515; ++j) w(k, j) += shift[j];
    }
    EXPECT_EQ(linear_policy_action(w, f).index(), before);
  }
}

TEST(LinearPolicy, DimensionMismatch) {
  EXPECT_THROW(linear_policy_logits(LinearPolicyWeights(9, 515), FeatureVector(514)), std::invalid_argument);
  EXPECT_THROW(linear_policy_logits(LinearPolicyWeights(8, 515), FeatureVector(515)), std::invalid_argument);
}

TEST(Argmax, LowestIndexWinsTies) {
  const std::vector<double> s = {1, 3, 3, 2};
  EXPECT_EQ(argmax(s), 1);
}

TEST(WeightsFile, ByteLayout) {
  LinearPolicyWeights w(2, 3);
  w(0, 0) = 1.0;
  w(1, 2) = -2.5;
  const std::string b = encode_weights(w);
  ASSERT_EQ(b.size(), 12u + 6 * 8);
  EXPECT_EQ(b.substr(0, 4), "MPVW");
  EXPECT_EQ(b.substr(4, 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(b.substr(8, 4), std::string("\x03\x00\x00\x00", 4));
  // 1.0 is 0x3FF0000000000000, stored little-endian
  EXPECT_EQ(b.substr(12, 8), std::string("\x00\x00\x00\x00\x00\x00\xF0\x3F", 8));
  EXPECT_EQ(b.substr(12 + 5 * 8, 8), std::string("\x00\x00\x00\x00\x00\x00\x04\xC0", 8));
}

TEST(WeightsFile, RoundTripAndErrors) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0, 1);
  LinearPolicyWeights w(9, 515);
  for (double& v : w.data()) v = g(rng);
  EXPECT_EQ(decode_weights(encode_weights(w)), w);
  const std::string path = ::testing::TempDir() + "w.bin";
  save_weights(w, path);
  EXPECT_EQ(load_weights(path), w);
  std::string b = encode_weights(w);
  EXPECT_THROW(decode_weights(b.substr(0, b.size() - 1)), std::runtime_error);
  EXPECT_THROW(decode_weights("MPVX" + b.substr(4)), std::runtime_error);
  const auto nan = std::bit_cast<std::uint64_t>(std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < 8; ++i) b[12 + i] = static_cast<char>((nan >> (8 * i)) & 0xFF);
  EXPECT_THROW(decode_weights(b), std::runtime_error);
  EXPECT_THROW(load_weights(::testing::TempDir() + "missing.bin"), std::runtime_error);
}

}  // namespace
