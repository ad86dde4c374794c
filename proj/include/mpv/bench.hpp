#ifndef MPV_BENCH_HPP_
#define MPV_BENCH_HPP_

// On-policy rollouts, per-100 m metrics, the 3D estimation metric suite and
// the plan-view ablation runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mpv/action.hpp"
#include "mpv/imitation.hpp"
#include "mpv/policy.hpp"
#include "mpv/sensor.hpp"
#include "mpv/world.hpp"

namespace mpv {

// ---------------------------------------------------------------------------
// Policies as seen by the rollout loop.

struct PolicyInput {
  const WorldState& world;
  std::span<const SensedObject> sensed;
  std::span<const Vec2> history;  // past decision-step ego positions, oldest first
};

struct DrivingPolicy {
  std::string name;
  bool needs_sensing = true;
  std::function<Action(const PolicyInput&)> decide;
};

inline DrivingPolicy make_expert_policy(ExpertConfig cfg = {}) {
  return {"expert", false, [cfg](const PolicyInput& in) { return expert_action(in.world, cfg); }};
}

inline DrivingPolicy make_occupancy_policy(PolicyConfig cfg = {}, CameraIntrinsics intr = default_camera()) {
  return {"occupancy", true, [cfg, intr](const PolicyInput& in) {
            const GridSpec spec;  // travel frame, vehicles + pedestrians
            const PlanViewImage img = render_view(in.sensed, in.world.ego.pose, {}, in.world.net(), spec, intr);
            return occupancy_policy(img, in.world.ego.speed, cfg);
          }};
}

inline DrivingPolicy make_linear_policy(LinearPolicyWeights w, ViewConfig view, CameraIntrinsics intr = default_camera()) {
  const GridSpec spec = view.grid();
  if (w.rows() != kActionCount || w.cols() != feature_size(spec.layers)) {
    throw std::invalid_argument("make_linear_policy: weights do not match view " + view.name());
  }
  auto shared = std::make_shared<const LinearPolicyWeights>(std::move(w));
  return {view.blind ? "blind" : "bc", !view.blind, [shared, view, spec, intr](const PolicyInput& in) {
            const EgoState& ego = in.world.ego;
            FeatureVector f;
            if (view.blind) {
              f = blind_features(spec.layers, ego.speed, ego.yaw_rate);
            } else {
              const PlanViewImage img = render_view(in.sensed, ego.pose, in.history, in.world.net(), spec, intr);
              f = featurize(img, ego.speed, ego.yaw_rate);
            }
            return linear_policy_action(*shared, f);
          }};
}

// ---------------------------------------------------------------------------
// Rollouts.

struct RolloutMetrics {
  double distance_m = 0.0;
  int collisions = 0;
  int interventions = 0;
  int steps = 0;

  friend bool operator==(const RolloutMetrics&, const RolloutMetrics&) = default;
};

struct RolloutOptions {
  int n_steps = 800;
  SimConfig sim;
  PolicyConfig control;
  NoiseProfile profile = default_noise_profile();
  CameraIntrinsics camera = default_camera();
};

// One decision per 7 frames: sense, decide, then hold the action's PID
// control for the 7 frames. Stuck episodes are resolved by a teleport whose
// displacement is not counted as driven distance.
inline RolloutMetrics run_rollout(const DrivingPolicy& policy, const ScenarioId& id, std::uint64_t seed,
                                  const RolloutOptions& opt = {}) {
  WorldState w = make_scenario(id, seed);
  std::mt19937_64 sensor_rng(detail::splitmix64(seed ^ detail::kSensorStream));
  StuckMonitor monitor(opt.sim);
  monitor.observe(w);
  CollisionTracker tracker;
  tracker.update(w);
  std::deque<Vec2> history;

  RolloutMetrics m;
  std::vector<SensedObject> sensed;
  for (int step = 0; step < opt.n_steps; ++step) {
    sensed.clear();
    if (policy.needs_sensing) sensed = sense(w, opt.camera, opt.profile, sensor_rng);
    const std::vector<Vec2> hist(history.begin(), history.end());
    const Action action = policy.decide(PolicyInput{w, sensed, hist});
    history.push_back(w.ego.pose.position());
    if (history.size() > static_cast<std::size_t>(kHistoryDecisions)) history.pop_front();

    for (int f = 0; f < opt.sim.decision_frames; ++f) {
      const Vec2 before = w.ego.pose.position();
      advance(w, pid_control(action, w.ego.speed, opt.control), opt.sim);
      m.distance_m += norm(w.net().delta(before, w.ego.pose.position()));
      m.collisions += static_cast<int>(tracker.update(w).size());
      if (monitor.observe(w)) {
        ++m.interventions;
        teleport_ego(w);
        tracker.update(w);
        monitor.reset();
        monitor.observe(w);
      }
    }
    ++m.steps;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Aggregation.

struct Aggregate {
  std::size_t rollouts = 0;
  double total_distance_m = 0.0;
  int collisions = 0;
  int interventions = 0;
  double distance_between_interventions_m = 0.0;
  double interventions_per_100m = 0.0;
  double interventions_per_100m_std = 0.0;
  double collisions_per_100m = 0.0;
  double collisions_per_100m_std = 0.0;
};

// Rates pool counts over total distance; the spreads are population standard
// deviations of the per-rollout rates (rollouts that did not move are left out).
inline Aggregate aggregate(std::span<const RolloutMetrics> ms) {
  if (ms.empty()) throw std::invalid_argument("aggregate: no rollouts");
  Aggregate a;
  a.rollouts = ms.size();
  for (const RolloutMetrics& m : ms) {
    if (m.distance_m < 0.0 || m.collisions < 0 || m.interventions < 0) {
      throw std::invalid_argument("aggregate: negative metric");
    }
    a.total_distance_m += m.distance_m;
    a.collisions += m.collisions;
    a.interventions += m.interventions;
  }
  if (!(a.total_distance_m > 0.0)) throw std::domain_error("aggregate: zero total distance");
  a.distance_between_interventions_m = a.total_distance_m / std::max(a.interventions, 1);
  a.interventions_per_100m = 100.0 * a.interventions / a.total_distance_m;
  a.collisions_per_100m = 100.0 * a.collisions / a.total_distance_m;

  auto spread = [&](auto count) {
    std::vector<double> rates;
    for (const RolloutMetrics& m : ms) {
      if (m.distance_m > 0.0) rates.push_back(100.0 * count(m) / m.distance_m);
    }
    if (rates.empty()) return 0.0;
    double mean = 0.0;
    for (double r : rates) mean += r;
    mean /= static_cast<double>(rates.size());
    double var = 0.0;
    for (double r : rates) var += (r - mean) * (r - mean);
    return std::sqrt(var / static_cast<double>(rates.size()));
  };
  a.interventions_per_100m_std = spread([](const RolloutMetrics& m) { return m.interventions; });
  a.collisions_per_100m_std = spread([](const RolloutMetrics& m) { return m.collisions; });
  return a;
}

// ---------------------------------------------------------------------------
// 3D estimation metrics.

struct Estimation3DMetrics {
  std::size_t count = 0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double os = 0.0;
  double dim = 0.0;
};

using EstimatePair = std::pair<Estimate3D, Estimate3D>;  // (estimate, truth)

inline Estimation3DMetrics estimation_metrics(std::span<const EstimatePair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("estimation_metrics: no pairs");
  Estimation3DMetrics m;
  m.count = pairs.size();
  double se = 0.0, sle = 0.0;
  for (const auto& [est, gt] : pairs) {
    if (!(gt.depth_m > 0.0 && gt.length_m > 0.0 && gt.width_m > 0.0 && gt.height_m > 0.0)) {
      throw std::domain_error("estimation_metrics: non-positive truth");
    }
    if (!(est.depth_m > 0.0)) throw std::domain_error("estimation_metrics: non-positive estimated depth");
    const double d = est.depth_m;
    const double g = gt.depth_m;
    const double diff = d - g;
    m.abs_rel += std::abs(diff) / g;
    m.sq_rel += diff * diff / g;
    se += diff * diff;
    const double ld = std::log(d) - std::log(g);
    sle += ld * ld;
    const double ratio = std::max(d / g, g / d);
    m.delta1 += ratio < 1.25 ? 1.0 : 0.0;
    m.delta2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
    m.delta3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
    m.os += 0.5 * (1.0 + std::cos(est.local_yaw_rad - gt.local_yaw_rad));
    const double vp = est.length_m * est.width_m * est.height_m;
    const double vg = gt.length_m * gt.width_m * gt.height_m;
    m.dim += std::min(vp / vg, vg / vp);
  }
  const double n = static_cast<double>(pairs.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(sle / n);
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  m.os /= n;
  m.dim /= n;
  return m;
}

// (estimate, truth) pairs of one class from a dataset.
inline std::vector<EstimatePair> estimate_pairs(const Dataset& ds, ObjectClass cls) {
  std::vector<EstimatePair> out;
  for (const Frame& f : ds.frames) {
    for (const SensedObject& o : f.objects) {
      if (o.detection.object_class == cls) out.emplace_back(o.estimate, o.truth);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parallel execution with ordered results.

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, F fn, unsigned threads = default_threads()) {
  std::vector<T> out(n);
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr error;
  auto worker = [&] {
    while (true) {
      std::size_t i = 0;
      {
        std::lock_guard lock(mu);
        if (next >= n || error) return;
        i = next++;
      }
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

struct RolloutJob {
  ScenarioId scenario;
  std::uint64_t seed = 0;
};

// Rollouts `seed .. seed + rollouts - 1` on every scenario, scenario-major.
inline std::vector<RolloutJob> rollout_jobs(std::span<const ScenarioId> scenarios, int rollouts, std::uint64_t seed) {
  std::vector<RolloutJob> jobs;
  for (const ScenarioId& s : scenarios) {
    for (int r = 0; r < rollouts; ++r) jobs.push_back({s, seed + static_cast<std::uint64_t>(r)});
  }
  return jobs;
}

inline std::vector<RolloutMetrics> run_rollouts(const DrivingPolicy& policy, std::span<const RolloutJob> jobs,
                                                const RolloutOptions& opt = {}, unsigned threads = default_threads()) {
  return parallel_map<RolloutMetrics>(
      jobs.size(), [&](std::size_t i) { return run_rollout(policy, jobs[i].scenario, jobs[i].seed, opt); }, threads);
}

// ---------------------------------------------------------------------------
// Reports: an aligned text table followed by one "row<TAB>key=value..." line
// per table row.

class Report {
 public:
  explicit Report(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) throw std::invalid_argument("Report: wrong number of cells");
    rows_.push_back(std::move(cells));
  }

  void add_note(std::string note) { notes_.push_back(std::move(note)); }

  std::string str() const {
    std::vector<std::size_t> width(columns_.size());
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      width[c] = columns_[c].size();
      for (const auto& r : rows_) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream os;
    for (const auto& n : notes_) os << "# " << n << '\n';
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) os << "  ";
        os << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
      }
      os << '\n';
    };
    line(columns_);
    for (const auto& r : rows_) line(r);
    for (const auto& r : rows_) {
      os << "row";
      for (std::size_t c = 0; c < r.size(); ++c) os << '\t' << columns_[c] << '=' << r[c];
      os << '\n';
    }
    return os.str();
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::string> notes_;
};

inline std::string fixed(double v, int precision = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Plan-view ablation.

struct AblationOptions {
  std::vector<ScenarioId> scenarios = all_scenarios();
  int collect_rollouts = 1;
  int collect_steps = 400;
  std::uint64_t collect_seed = 1000;
  int eval_rollouts = 2;
  int eval_steps = 400;
  std::uint64_t eval_seed = 0;
  TrainOptions train;
  CollectOptions collect;
  RolloutOptions rollout;
  unsigned threads = default_threads();
};

struct AblationRow {
  ViewConfig view;
  double val_perplexity = 0.0;
  Aggregate driving;
};

inline std::vector<ViewConfig> ablation_grid() {
  std::vector<ViewConfig> grid;
  for (FrameTag frame : {FrameTag::kTravel, FrameTag::kNorthUp}) {
    for (bool map : {false, true}) {
      for (bool history : {false, true}) grid.push_back({frame, map, history, false});
    }
  }
  return grid;
}

inline std::vector<Dataset> collect_all(const AblationOptions& opt) {
  std::vector<RolloutJob> jobs;
  for (const ScenarioId& s : opt.scenarios) {
    for (int r = 0; r < opt.collect_rollouts; ++r) jobs.push_back({s, opt.collect_seed + static_cast<std::uint64_t>(r)});
  }
  // Rollout-major order so the validation tail mixes scenarios.
  std::stable_sort(jobs.begin(), jobs.end(), [](const RolloutJob& a, const RolloutJob& b) { return a.seed < b.seed; });
  return parallel_map<Dataset>(
      jobs.size(),
      [&](std::size_t i) { return collect(jobs[i].scenario, jobs[i].seed, opt.collect_steps, opt.collect); },
      opt.threads);
}

// One BC policy per view configuration, all trained on the same collected
// data and driven on the same scenario seeds.
inline std::vector<AblationRow> run_ablation(const AblationOptions& opt, std::span<const ViewConfig> views) {
  const std::vector<Dataset> data = collect_all(opt);
  const auto jobs = rollout_jobs(opt.scenarios, opt.eval_rollouts, opt.eval_seed);
  RolloutOptions ro = opt.rollout;
  ro.n_steps = opt.eval_steps;
  std::vector<AblationRow> rows;
  for (const ViewConfig& view : views) {
    const FeatureSet fs = build_features(data, view);
    const Split split = split_train_val(fs, data.size());
    const TrainResult tr = train_bc(fs, split.train, split.val, opt.train);
    AblationRow row;
    row.view = view;
    row.val_perplexity = perplexity(tr.weights, fs, split.val);
    const DrivingPolicy policy = make_linear_policy(tr.weights, view, ro.camera);
    const auto metrics = run_rollouts(policy, jobs, ro, opt.threads);
    row.driving = aggregate(metrics);
    rows.push_back(row);
  }
  return rows;
}

inline Report ablation_report(std::span<const AblationRow> rows) {
  Report rep({"frame", "map", "history", "perplexity", "distance_m", "interventions_100m", "interventions_std",
              "collisions_100m", "collisions_std"});
  rep.add_note("perplexity: mean validation NLL in nats; std across rollouts of per-rollout rates");
  for (const AblationRow& r : rows) {
    rep.add_row({r.view.frame == FrameTag::kTravel ? "travel" : "north", r.view.map ? "yes" : "no",
                 r.view.history ? "yes" : "no", fixed(r.val_perplexity, 4), fixed(r.driving.distance_between_interventions_m, 2),
                 fixed(r.driving.interventions_per_100m, 3), fixed(r.driving.interventions_per_100m_std, 3),
                 fixed(r.driving.collisions_per_100m, 3), fixed(r.driving.collisions_per_100m_std, 3)});
  }
  return rep;
}

}  // namespace mpv

#endif  // MPV_BENCH_HPP_
