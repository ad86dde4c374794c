#ifndef MPV_IMITATION_HPP_
#define MPV_IMITATION_HPP_

// Expert data collection with noise injection, the on-disk dataset format,
// behavior cloning of the linear policy and off-policy evaluation.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpv/action.hpp"
#include "mpv/policy.hpp"
#include "mpv/raster.hpp"
#include "mpv/sensor.hpp"
#include "mpv/world.hpp"

namespace mpv {

struct Frame {
  std::string scenario;
  std::int64_t frame_index = 0;
  double speed = 0.0;
  double yaw_rate = 0.0;
  PlanPose ego{0.0, 0.0, 0.0, FrameTag::kWorld};
  std::vector<SensedObject> objects;
  Action action;
  bool noise_flag = false;
};

// One rollout of expert driving, every simulated frame in order.
struct Dataset {
  std::vector<Frame> frames;
  std::string scenario;
  std::uint64_t seed = 0;
  double noise_period_s = 30.0;
};

class EmptyDataset : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Rendering a frame's plan view.

// Past decision-step positions drawn into the history layer.
inline constexpr int kHistoryDecisions = 36;
// Lane quads farther than this from the ego cannot reach either grid layout.
inline constexpr double kMapRadiusM = 72.0;

struct ViewConfig {
  FrameTag frame = FrameTag::kTravel;
  bool map = false;
  bool history = false;
  bool blind = false;

  GridSpec grid() const {
    GridSpec g;
    g.frame = frame;
    g.layers.map = map;
    g.layers.ego_history = history;
    return g;
  }

  std::string name() const {
    std::string n = frame == FrameTag::kTravel ? "travel" : "north";
    if (map) n += "+map";
    if (history) n += "+history";
    if (blind) n += "+blind";
    return n;
  }
};

inline PlanViewImage render_view(std::span<const SensedObject> sensed, const PlanPose& ego_world,
                                 std::span<const Vec2> history, const RoadNetwork& net, const GridSpec& spec,
                                 const CameraIntrinsics& intr) {
  const auto objects = to_plan_objects(sensed, intr);
  std::vector<std::array<Vec2, 4>> quads;
  if (spec.layers.map) quads = lane_polygons_near(net, ego_world.position(), kMapRadiusM);
  // History positions are re-expressed at the periodic image nearest the ego.
  std::vector<Vec2> hist;
  hist.reserve(history.size());
  for (const Vec2& p : history) hist.push_back(ego_world.position() + net.delta(ego_world.position(), p));
  RenderInputs in;
  in.objects = objects;
  in.ego_world_pose = ego_world;
  in.history = hist;
  in.map_polygons = quads;
  return render_plan_view(in, spec);
}

// ---------------------------------------------------------------------------
// Collection.

struct CollectOptions {
  double noise_period_s = 30.0;
  SimConfig sim;
  ExpertConfig expert;
  PolicyConfig policy;
  NoiseProfile profile = default_noise_profile();
  CameraIntrinsics camera = default_camera();
};

namespace detail {
inline constexpr std::uint64_t kSensorStream = 0x5E11507ULL;
inline constexpr std::uint64_t kNoiseStream = 0x401AE5ULL;
}  // namespace detail

// Runs the expert for n_decision_steps decisions (7 frames each). Every
// noise_period_s of simulated time the executed action of one decision is
// replaced by a uniformly random action; that frame and the 7 after it are
// flagged. Labels are always the expert's own action at the frame.
inline Dataset collect(const ScenarioId& id, std::uint64_t seed, int n_decision_steps,
                       const CollectOptions& opt = {}) {
  if (n_decision_steps <= 0) throw std::invalid_argument("collect: n_decision_steps must be positive");
  Dataset ds;
  ds.scenario = id.name();
  ds.seed = seed;
  ds.noise_period_s = opt.noise_period_s;

  WorldState w = make_scenario(id, seed);
  std::mt19937_64 sensor_rng(detail::splitmix64(seed ^ detail::kSensorStream));
  std::mt19937_64 noise_rng(detail::splitmix64(seed ^ detail::kNoiseStream));
  StuckMonitor monitor(opt.sim);
  monitor.observe(w);

  double next_noise = opt.noise_period_s;
  int flag_left = 0;
  const int frames = opt.sim.decision_frames;
  ds.frames.reserve(static_cast<std::size_t>(n_decision_steps) * static_cast<std::size_t>(frames));
  for (int step = 0; step < n_decision_steps; ++step) {
    Action executed = expert_action(w, opt.expert);
    if (std::isfinite(next_noise) && w.clock_s >= next_noise - 1e-9) {
      executed = Action::from_index(std::uniform_int_distribution<int>(0, kActionCount - 1)(noise_rng));
      flag_left = opt.sim.noise_flag_frames;
      while (next_noise <= w.clock_s + 1e-9) next_noise += opt.noise_period_s;
    }
    for (int f = 0; f < frames; ++f) {
      Frame fr;
      fr.scenario = ds.scenario;
      fr.frame_index = w.frame_index;
      fr.speed = w.ego.speed;
      fr.yaw_rate = w.ego.yaw_rate;
      fr.ego = w.ego.pose;
      fr.objects = sense(w, opt.camera, opt.profile, sensor_rng);
      fr.action = expert_action(w, opt.expert);
      fr.noise_flag = flag_left > 0;
      if (flag_left > 0) --flag_left;
      ds.frames.push_back(std::move(fr));

      advance(w, pid_control(executed, w.ego.speed, opt.policy), opt.sim);
      if (monitor.observe(w)) {
        teleport_ego(w);
        monitor.reset();
        monitor.observe(w);
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset files: gzip-compressed JSON lines, one frame per line.

namespace detail {

inline nlohmann::json estimate_json(const Estimate3D& e) {
  return nlohmann::json::array({e.depth_m, e.local_yaw_rad, e.length_m, e.width_m, e.height_m});
}

inline Estimate3D estimate_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 5) throw std::runtime_error("dataset: estimate must have 5 entries");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(), j[4].get<double>()};
}

inline std::string gzip_compress(const std::string& data) {
  z_stream zs{};
  // windowBits 15 + 16 selects the gzip wrapper; the header carries no timestamp.
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw std::runtime_error("gzip: deflateInit2 failed");
  }
  std::string out;
  out.resize(deflateBound(&zs, data.size()) + 32);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw std::runtime_error("gzip: deflate failed");
  out.resize(zs.total_out);
  return out;
}

inline std::string gzip_decompress(const std::string& data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw std::runtime_error("gzip: inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  char buf[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("gzip: corrupt stream");
    }
    out.append(buf, sizeof(buf) - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw std::runtime_error("gzip: truncated stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace detail

inline std::string frame_to_json_line(const Frame& f) {
  nlohmann::json j;
  j["scenario"] = f.scenario;
  j["frame"] = f.frame_index;
  j["speed"] = f.speed;
  j["yaw_rate"] = f.yaw_rate;
  j["ego"] = nlohmann::json::array({f.ego.x_m, f.ego.y_m, f.ego.yaw_rad});
  auto objs = nlohmann::json::array();
  for (const SensedObject& o : f.objects) {
    nlohmann::json jo;
    jo["id"] = o.actor_id;
    jo["class"] = std::string(to_string(o.detection.object_class));
    const Detection2D& d = o.detection;
    jo["det"] = nlohmann::json::array({d.u_min, d.v_min, d.u_max, d.v_max, d.x_center_offset});
    jo["est"] = detail::estimate_json(o.estimate);
    jo["truth"] = detail::estimate_json(o.truth);
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  j["action"] = f.action.index();
  j["noise_flag"] = f.noise_flag;
  return j.dump();
}

inline Frame frame_from_json_line(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  Frame f;
  f.scenario = j.at("scenario").get<std::string>();
  f.frame_index = j.at("frame").get<std::int64_t>();
  f.speed = j.at("speed").get<double>();
  f.yaw_rate = j.at("yaw_rate").get<double>();
  const auto& e = j.at("ego");
  f.ego = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>(), FrameTag::kWorld};
  for (const auto& jo : j.at("objects")) {
    SensedObject o;
    o.actor_id = jo.value("id", 0);
    const auto& d = jo.at("det");
    if (d.size() != 5) throw std::runtime_error("dataset: det must have 5 entries");
    o.detection.object_class = object_class_from_string(jo.at("class").get<std::string>());
    o.detection.u_min = d[0].get<double>();
    o.detection.v_min = d[1].get<double>();
    o.detection.u_max = d[2].get<double>();
    o.detection.v_max = d[3].get<double>();
    o.detection.x_center_offset = d[4].get<double>();
    o.estimate = detail::estimate_from_json(jo.at("est"));
    o.truth = detail::estimate_from_json(jo.at("truth"));
    f.objects.push_back(o);
  }
  f.action = Action::from_index(j.at("action").get<int>());
  f.noise_flag = j.at("noise_flag").get<bool>();
  return f;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::string text;
  for (const Frame& f : ds.frames) {
    text += frame_to_json_line(f);
    text += '\n';
  }
  const std::string gz = detail::gzip_compress(text);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(gz.data(), static_cast<std::streamsize>(gz.size()));
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  const std::string gz((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::istringstream text(detail::gzip_decompress(gz));
  Dataset ds;
  std::string line;
  while (std::getline(text, line)) {
    if (line.empty()) continue;
    ds.frames.push_back(frame_from_json_line(line));
  }
  if (!ds.frames.empty()) ds.scenario = ds.frames.front().scenario;
  return ds;
}

// ---------------------------------------------------------------------------
// Features and splits.

// Frames excluded from training: every flagged frame and the 7 after it.
inline std::vector<bool> usable_frames(const Dataset& ds, int after = 7) {
  std::vector<bool> ok(ds.frames.size(), true);
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    if (!ds.frames[i].noise_flag) continue;
    for (std::size_t k = i; k < ds.frames.size() && k <= i + static_cast<std::size_t>(after); ++k) ok[k] = false;
  }
  return ok;
}

// Row-major feature matrix (float storage) with labels.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<float> x;
  std::vector<int> y;
  std::vector<int> rollout;  // index of the source dataset

  std::size_t size() const { return y.size(); }
  std::span<const float> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
};

// History positions for frame i: the ego position at each of the previous
// kHistoryDecisions decision steps, oldest first.
inline std::vector<Vec2> frame_history(const Dataset& ds, std::size_t i, int decision_frames = 7) {
  std::vector<Vec2> h;
  for (int k = kHistoryDecisions; k >= 1; --k) {
    const std::int64_t j = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(k) * decision_frames;
    if (j >= 0) h.push_back(ds.frames[static_cast<std::size_t>(j)].ego.position());
  }
  return h;
}

inline FeatureVector frame_features(const Dataset& ds, std::size_t i, const ViewConfig& view,
                                    const CameraIntrinsics& intr = default_camera()) {
  const Frame& f = ds.frames[i];
  const GridSpec spec = view.grid();
  if (view.blind) return blind_features(spec.layers, f.speed, f.yaw_rate);
  const RoadNetwork& net = *network_for(parse_scenario(f.scenario).kind);
  const auto hist = view.history ? frame_history(ds, i) : std::vector<Vec2>{};
  const PlanViewImage img = render_view(f.objects, f.ego, hist, net, spec, intr);
  return featurize(img, f.speed, f.yaw_rate);
}

inline FeatureSet build_features(std::span<const Dataset> data, const ViewConfig& view) {
  FeatureSet fs;
  fs.dim = feature_size(view.grid().layers);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto ok = usable_frames(data[r]);
    for (std::size_t i = 0; i < data[r].frames.size(); ++i) {
      if (!ok[i]) continue;
      const FeatureVector v = frame_features(data[r], i, view);
      fs.x.insert(fs.x.end(), v.begin(), v.end());
      fs.y.push_back(data[r].frames[i].action.index());
      fs.rollout.push_back(static_cast<int>(r));
    }
  }
  return fs;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

inline constexpr double kValFraction = 0.1;

// Validation takes whole rollouts from the end of the list; a single rollout
// is split by its final frames instead.
inline Split split_train_val(const FeatureSet& fs, std::size_t n_rollouts) {
  Split s;
  if (n_rollouts >= 2) {
    const auto n_val = static_cast<std::size_t>(std::ceil(kValFraction * static_cast<double>(n_rollouts)));
    const int first_val = static_cast<int>(n_rollouts - n_val);
    for (std::size_t i = 0; i < fs.size(); ++i) (fs.rollout[i] >= first_val ? s.val : s.train).push_back(i);
  } else {
    const auto n_val = static_cast<std::size_t>(std::ceil(kValFraction * static_cast<double>(fs.size())));
    for (std::size_t i = 0; i < fs.size(); ++i) (i + n_val >= fs.size() ? s.val : s.train).push_back(i);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Loss.

namespace detail {

// Softmax probabilities in place; returns -log p[label].
inline double softmax_nll(std::array<double, kActionCount>& z, int label) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  const double log_p = std::log(z[static_cast<std::size_t>(label)] / sum);
  for (double& v : z) v /= sum;
  return -log_p;
}

template <typename Row>
std::array<double, kActionCount> logits_of(const std::vector<double>& w, std::size_t dim, const Row& x) {
  std::array<double, kActionCount> z{};
  for (std::size_t k = 0; k < kActionCount; ++k) {
    const double* wr = w.data() + k * dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) acc += wr[j] * x[j];
    z[k] = acc;
  }
  return z;
}

}  // namespace detail

struct LossGradient {
  double loss = 0.0;
  LinearPolicyWeights gradient;
};

// Mean softmax cross-entropy over the examples and its gradient in w.
inline LossGradient loss_and_gradient(const LinearPolicyWeights& w, std::span<const FeatureVector> feats,
                                      std::span<const int> labels) {
  if (feats.empty() || feats.size() != labels.size()) throw std::invalid_argument("loss_and_gradient: bad batch");
  LossGradient out{0.0, LinearPolicyWeights(w.rows(), w.cols())};
  const std::vector<double> wv(w.data().begin(), w.data().end());
  const double inv = 1.0 / static_cast<double>(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].size() != w.cols()) throw std::invalid_argument("loss_and_gradient: dimension mismatch");
    auto z = detail::logits_of(wv, w.cols(), feats[i]);
    out.loss += inv * detail::softmax_nll(z, labels[i]);
    z[static_cast<std::size_t>(labels[i])] -= 1.0;
    for (std::size_t k = 0; k < kActionCount; ++k) {
      for (std::size_t j = 0; j < w.cols(); ++j) out.gradient(k, j) += inv * z[k] * feats[i][j];
    }
  }
  return out;
}

// Mean negative log-likelihood (nats) of the labels under the policy.
inline double perplexity(const LinearPolicyWeights& w, const FeatureSet& fs, std::span<const std::size_t> idx) {
  if (idx.empty()) throw EmptyDataset("perplexity: no frames");
  if (w.rows() != kActionCount || w.cols() != fs.dim) throw std::invalid_argument("perplexity: dimension mismatch");
  const std::vector<double> wv(w.data().begin(), w.data().end());
  double sum = 0.0;
  for (std::size_t i : idx) {
    auto z = detail::logits_of(wv, fs.dim, fs.row(i));
    sum += detail::softmax_nll(z, fs.y[i]);
  }
  return sum / static_cast<double>(idx.size());
}

inline double perplexity(const LinearPolicyWeights& w, const FeatureSet& fs) {
  std::vector<std::size_t> all(fs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return perplexity(w, fs, all);
}

// ---------------------------------------------------------------------------
// Behavior cloning.

struct TrainOptions {
  int epochs = 2;
  double lr = 0.001;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct EpochStats {
  int epoch = 0;
  double train_ce = 0.0;
  double val_ce = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  LinearPolicyWeights weights;
  std::vector<EpochStats> epochs;
};

// Mini-batch gradient descent on the mean cross-entropy. Inputs are
// standardized per feature (train-set mean and spread) and the constant bias
// input is scaled to sqrt(dim) so it moves at the same rate as the feature
// block; the affine map is folded back so the returned weights act on raw
// features.
inline TrainResult train_bc(const FeatureSet& fs, std::span<const std::size_t> train, std::span<const std::size_t> val,
                            const TrainOptions& opt = {}) {
  if (train.empty()) throw EmptyDataset("train_bc: no training frames");
  if (opt.batch == 0 || opt.epochs < 0 || !(opt.lr > 0.0)) throw std::invalid_argument("train_bc: bad options");
  const std::size_t d = fs.dim;
  TrainResult result{LinearPolicyWeights(kActionCount, d), {}};
  if (opt.epochs == 0) return result;

  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  {
    std::vector<double> sq(d, 0.0);
    for (std::size_t i : train) {
      const auto x = fs.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        mean[j] += x[j];
        sq[j] += static_cast<double>(x[j]) * x[j];
      }
    }
    const double n = static_cast<double>(train.size());
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] /= n;
      const double var = std::max(0.0, sq[j] / n - mean[j] * mean[j]);
      if (var > 1e-12) {
        scale[j] = 1.0 / std::sqrt(var);
      } else {
        mean[j] = 0.0;
      }
    }
  }
  std::size_t bias = d;
  if (d > 0 && std::all_of(train.begin(), train.end(), [&](std::size_t i) { return fs.row(i)[d - 1] == 1.0f; })) {
    bias = d - 1;
    mean[bias] = 0.0;
    scale[bias] = std::sqrt(static_cast<double>(d));
  } else {
    // No constant input to absorb the centering offset.
    std::fill(mean.begin(), mean.end(), 0.0);
  }

  std::vector<double> w(kActionCount * d, 0.0);
  std::vector<double> z(d);
  std::vector<double> grad(kActionCount * d);
  auto normalized = [&](std::size_t i) {
    const auto x = fs.row(i);
    for (std::size_t j = 0; j < d; ++j) z[j] = (x[j] - mean[j]) * scale[j];
  };
  auto mean_ce = [&](std::span<const std::size_t> idx) {
    double sum = 0.0;
    for (std::size_t i : idx) {
      normalized(i);
      auto lg = detail::logits_of(w, d, z);
      sum += detail::softmax_nll(lg, fs.y[i]);
    }
    return sum / static_cast<double>(idx.size());
  };

  std::vector<std::size_t> order(train.begin(), train.end());
  std::mt19937_64 rng(detail::splitmix64(opt.seed));
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    if (opt.shuffle) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += opt.batch) {
      const std::size_t b1 = std::min(order.size(), b0 + opt.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t i = order[b];
        normalized(i);
        auto p = detail::logits_of(w, d, z);
        detail::softmax_nll(p, fs.y[i]);
        p[static_cast<std::size_t>(fs.y[i])] -= 1.0;
        for (std::size_t k = 0; k < kActionCount; ++k) {
          double* g = grad.data() + k * d;
          for (std::size_t j = 0; j < d; ++j) g[j] += p[k] * z[j];
        }
      }
      const double step = opt.lr / static_cast<double>(b1 - b0);
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * grad[k];
    }
    EpochStats st;
    st.epoch = epoch + 1;
    st.train_ce = mean_ce(train);
    if (!val.empty()) st.val_ce = mean_ce(val);
    result.epochs.push_back(st);
  }

  // Fold the input affine map into raw-feature weights.
  for (std::size_t k = 0; k < kActionCount; ++k) {
    double offset = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = w[k * d + j];
      result.weights(k, j) = v * scale[j];
      offset += v * scale[j] * mean[j];
    }
    if (bias < d) {
      result.weights(k, bias) -= offset;
    }
  }
  return result;
}

}  // namespace mpv

#endif  // MPV_IMITATION_HPP_
