// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mpv/bench.hpp"
#include "mpv/geometry.hpp"
#include "mpv/imitation.hpp"
#include "mpv/raster.hpp"
#include "mpv/sensor.hpp"
#include "mpv/world.hpp"
#include "oracles.hpp"

#ifndef MPV_CLI_PATH
#error "MPV_CLI_PATH must name the mpv executable"
#endif

namespace fs = std::filesystem;
using namespace mpv;

namespace {

int failures = 0;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(int n, bool ok, const std::string& detail) {
  std::cout << "criterion " << n << ": " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
  failures += ok ? 0 : 1;
}

std::string num(double v, int precision = 4) { return fixed(v, precision); }

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

// --- 1: camera round trip ---

void criterion1() {
  Stopwatch sw;
  const CameraIntrinsics intr = default_camera();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> depth(0.5, 80.0), frac(-0.98, 0.98), yaw(0.0, kTwoPi), pos(-500, 500);
  double worst = 0.0;
  int done = 0;
  while (done < 10000) {
    const PlanPose ego{pos(rng), pos(rng), yaw(rng), FrameTag::kWorld};
    const double y = depth(rng);
    const PlanPose cam{frac(rng) * y * std::tan(intr.hfov_deg * kPi / 360.0), y, yaw(rng), FrameTag::kCamera};
    const auto obs = project_to_camera(ObjectClass::kVehicle, camera_to_world(cam, ego), {4.5, 1.9, 1.5}, ego, intr);
    if (!obs) continue;
    ++done;
    const Vec2 p = plan_location(obs->estimate.depth_m, obs->detection.x_center_offset, intr.focal_length_px);
    const double g = local_to_global_yaw(obs->estimate.local_yaw_rad, obs->detection.x_center_offset, intr.focal_length_px);
    worst = std::max({worst, std::abs(p.x - cam.x_m), std::abs(p.y - cam.y_m), angle_distance(g, cam.yaw_rad)});
  }
  const double t = sw.seconds();
  report(1, worst < 1e-9 && t < 1.0, "max error " + sci(worst) + " over 10000 objects, " + num(t, 3) + " s");
}

// --- 2: rasterization oracle ---

void criterion2() {
  Stopwatch sw;
  GridSpec spec;
  spec.frame = FrameTag::kTravel;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> x(-34, 34), y(-2, 66), yaw(0, kTwoPi), len(0.3, 9), wid(0.3, 4);
  int mismatched = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto q = box_corners({x(rng), y(rng), yaw(rng), FrameTag::kTravel}, len(rng), wid(rng));
    PlanViewImage img(spec);
    rasterize_box(img, Layer::kVehicles, q);
    const auto ch = img.channel(Layer::kVehicles);
    if (std::vector<std::uint8_t>(ch.begin(), ch.end()) != oracle::sweep_fill(spec, q)) ++mismatched;
  }
  GridSpec north;
  north.frame = FrameTag::kNorthUp;
  PlanViewImage box(north);
  rasterize_box(box, Layer::kVehicles, box_corners({0, 0, 0, FrameTag::kNorthUp}, 4.0, 2.0));
  const double t = sw.seconds();
  report(2, mismatched == 0 && box.count(Layer::kVehicles) == 512 && t < 30.0,
         std::to_string(mismatched) + "/1000 boxes differ from the sweep; 2x4 m box fills " +
             std::to_string(box.count(Layer::kVehicles)) + " cells; " + num(t, 2) + " s");
}

// --- 3: calibrated sensor statistics ---

void criterion3() {
  Stopwatch sw;
  const NoiseProfile& profile = default_noise_profile();
  bool ok = true;
  std::ostringstream detail;
  struct Row {
    ObjectClass cls;
    CalibrationTargets target;
    double l, w, h;
  };
  const Row rows[] = {{ObjectClass::kVehicle, kVehicleTargets, 4.5, 1.9, 1.5},
                      {ObjectClass::kPedestrian, kPedestrianTargets, 0.6, 0.6, 1.75}};
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> depth(2.0, 64.0), yaw(0.0, kTwoPi);
  for (const Row& r : rows) {
    std::vector<EstimatePair> pairs;
    constexpr int kSamples = 200000;
    pairs.reserve(kSamples);
    for (int i = 0; i < kSamples; ++i) {
      const Estimate3D truth{depth(rng), yaw(rng), r.l, r.w, r.h};
      pairs.emplace_back(perturb(truth, profile.for_class(r.cls), rng), truth);
    }
    const Estimation3DMetrics m = estimation_metrics(pairs);
    const bool good = std::abs(m.abs_rel - r.target.abs_rel) <= 0.01 && std::abs(m.os - r.target.os) <= 0.01 &&
                      std::abs(m.dim - r.target.dim) <= 0.02;
    ok = ok && good;
    detail << to_string(r.cls) << " abs_rel " << num(m.abs_rel) << " os " << num(m.os) << " dim " << num(m.dim)
           << " (n=" << m.count << "); ";
  }
  const double t = sw.seconds();
  detail << num(t, 2) << " s";
  report(3, ok && t < 60.0, detail.str());
}

// --- 4: metric oracles ---

void criterion4() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> depth(1, 80), yaw(-kPi, kPi), size(0.3, 5), ln(-0.4, 0.4), dist(0, 900);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<EstimatePair> p(1 + rng() % 50);
    for (auto& [e, g] : p) {
      g = {depth(rng), yaw(rng), size(rng), size(rng), size(rng)};
      e = {g.depth_m * std::exp(ln(rng)), yaw(rng), size(rng), size(rng), size(rng)};
    }
    const Estimation3DMetrics a = estimation_metrics(p);
    const oracle::Metrics b = oracle::metrics(p);
    for (double d : {a.abs_rel - b.abs_rel, a.sq_rel - b.sq_rel, a.rmse - b.rmse, a.rmse_log - b.rmse_log,
                     a.delta1 - b.d1, a.delta2 - b.d2, a.delta3 - b.d3, a.os - b.os, a.dim - b.dim}) {
      worst = std::max(worst, std::abs(d));
    }

    std::vector<RolloutMetrics> ms(1 + rng() % 12);
    for (auto& m : ms) m = {dist(rng), static_cast<int>(rng() % 7), static_cast<int>(rng() % 7), 800};
    ms.front().distance_m += 1.0;
    const Aggregate c = aggregate(ms);
    const oracle::Agg d = oracle::aggregate(ms);
    for (double x : {(c.distance_between_interventions_m - d.between) / std::max(1.0, d.between),
                     c.interventions_per_100m - d.int_rate, c.interventions_per_100m_std - d.int_std,
                     c.collisions_per_100m - d.col_rate, c.collisions_per_100m_std - d.col_std}) {
      worst = std::max(worst, std::abs(x));
    }
  }
  const std::vector<EstimatePair> pair = {{{11, 0.3, 4, 2, 1.5}, {10, 0.3, 4, 2, 1.5}}};
  const Estimation3DMetrics w = estimation_metrics(pair);
  const bool worked = std::abs(w.abs_rel - 0.1) < 1e-5 && std::abs(w.rmse - 1.0) < 1e-5 &&
                      std::abs(w.rmse_log - 0.09531) < 1e-5;
  report(4, worst < 1e-12 && worked,
         "max oracle gap " + sci(worst) + "; worked pair abs_rel " + num(w.abs_rel, 6) + " rmse " +
             num(w.rmse, 6) + " rmse_log " + num(w.rmse_log, 6));
}

// --- 5: behavior cloning ---

struct BcData {
  std::vector<Dataset> data;
};

void criterion5(const BcData& bc) {
  Stopwatch sw;
  std::size_t frames = 0;
  for (const Dataset& d : bc.data) frames += d.frames.size();
  const FeatureSet fs = build_features(bc.data, ViewConfig{});
  const Split split = split_train_val(fs, bc.data.size());
  const TrainResult tr = train_bc(fs, split.train, split.val);
  const double val = perplexity(tr.weights, fs, split.val);

  std::mt19937_64 rng(505);
  std::normal_distribution<double> g(0, 0.05);
  double grad = 0.0;
  for (int t = 0; t < 10; ++t) {
    LinearPolicyWeights w(kActionCount, fs.dim);
    for (double& v : w.data()) v = g(rng);
    const std::size_t i = rng() % fs.size();
    const auto row = fs.row(i);
    const FeatureVector x(row.begin(), row.end());
    grad = std::max(grad, oracle::gradient_check(w, x, fs.y[i]));
  }
  const double t = sw.seconds();
  report(5, frames >= 50000 && val < 1.8 && val < std::log(9.0) && grad < 1e-6 && t < 600.0,
         std::to_string(frames) + " frames (" + std::to_string(fs.size()) + " usable), held-out NLL " + num(val) +
             " nats, gradient rel. error " + sci(grad) + ", " + num(t, 1) + " s after collection");
}

// --- 6: collision ordering ---

void criterion6(const BcData& bc) {
  Stopwatch sw;
  ViewConfig blind_view;
  blind_view.blind = true;
  const FeatureSet fs = build_features(bc.data, blind_view);
  const Split split = split_train_val(fs, bc.data.size());
  const TrainResult blind = train_bc(fs, split.train, split.val);

  const auto scenarios = all_scenarios();
  const auto jobs = rollout_jobs(scenarios, 10, 0);
  const RolloutOptions opt;  // 800 steps
  const Aggregate expert = aggregate(run_rollouts(make_expert_policy(), jobs, opt));
  const Aggregate occ = aggregate(run_rollouts(make_occupancy_policy(), jobs, opt));
  const Aggregate bl = aggregate(run_rollouts(make_linear_policy(blind.weights, blind_view), jobs, opt));
  const double t = sw.seconds();
  const bool ok = expert.collisions_per_100m <= occ.collisions_per_100m &&
                  occ.collisions_per_100m < bl.collisions_per_100m &&
                  occ.collisions_per_100m < 0.5 * bl.collisions_per_100m;
  report(6, ok,
         "collisions/100 m over " + std::to_string(jobs.size()) + " rollouts: expert " + num(expert.collisions_per_100m) +
             ", occupancy " + num(occ.collisions_per_100m) + ", blind " + num(bl.collisions_per_100m) + "; " +
             num(t, 1) + " s");
}

// --- 7: protocol timing ---

void criterion7() {
  std::vector<std::string> bad;

  // stuck from rest: the event lands on frame 360 = 30.0 s, and again every 30 s
  {
    WorldState w = make_scenario(ScenarioKind::kUrban, 8);
    w.actors.clear();
    StuckMonitor m;
    m.observe(w);
    std::vector<double> at;
    for (int i = 0; i < 12 * 65; ++i) {
      advance(w, {});
      if (auto ev = m.observe(w)) at.push_back(ev->clock_s);
    }
    if (at.size() != 2 || std::abs(at[0] - 30.0) > 1e-9 || std::abs(at[1] - 60.0) > 1e-9) bad.push_back("stuck timing");
  }
  // 1.5 m in 30 s is enough movement, 0.9 m is not
  for (const auto& [speed, expect] : {std::pair{0.05, false}, std::pair{0.03, true}}) {
    WorldState w = make_scenario(ScenarioKind::kHighway, 8);
    w.actors.clear();
    w.ego.speed = speed;
    SimConfig cfg;
    cfg.drag = 0.0;
    StuckMonitor m(cfg);
    m.observe(w);
    bool fired = false;
    for (int i = 0; i < 12 * 40 && !fired; ++i) {
      advance(w, {}, cfg);
      fired = m.observe(w).has_value();
    }
    if (fired != expect) bad.push_back("crawl at " + num(speed, 2));
  }
  // decision cadence and injection bookkeeping
  {
    const Dataset ds = collect({ScenarioKind::kHighway, 1}, 2, 400);
    if (ds.frames.size() != 400u * 7) bad.push_back("frames per decision");
    WorldState w = make_scenario(ScenarioKind::kHighway, 1);
    for (int i = 0; i < 7; ++i) advance(w, {});
    if (std::abs(w.clock_s - 7.0 / 12.0) > 1e-12) bad.push_back("12 fps clock");
    std::vector<std::size_t> starts;
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
      flagged += ds.frames[i].noise_flag;
      if (ds.frames[i].noise_flag && (i == 0 || !ds.frames[i - 1].noise_flag)) starts.push_back(i);
    }
    const std::size_t events = static_cast<std::size_t>(400 * 7 / 12.0 / 30.0);
    if (starts.size() != events || flagged != 8 * events) bad.push_back("noise flags");
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const double t = static_cast<double>(starts[k]) / 12.0;
      // first decision at or after each 30 s mark
      if (t < 30.0 * static_cast<double>(k + 1) - 1e-9 || t >= 30.0 * static_cast<double>(k + 1) + 7.0 / 12.0) {
        bad.push_back("injection time");
      }
      if (starts[k] % 7 != 0) bad.push_back("injection off the decision grid");
    }
  }
  // a stopped policy is rescued once per full 30 s window
  {
    DrivingPolicy stop{"stop", false, [](const PolicyInput&) { return Action{Lateral::kStraight, Longitudinal::kStop}; }};
    RolloutOptions opt;
    opt.n_steps = 800;
    const RolloutMetrics m = run_rollout(stop, {ScenarioKind::kUrban, 3}, 1, opt);
    if (m.interventions < 800 * 7 / 12 / 30) bad.push_back("always-stop interventions");
  }
  std::string detail = "stuck at 30.0 s, crawl threshold, 7 frames per decision at 12 fps, 8 flagged frames per 30 s";
  for (const auto& b : bad) detail += "; bad: " + b;
  report(7, bad.empty(), detail);
}

// --- 8: CLI determinism ---

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {(std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()};
}

bool run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MPV_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str()) == 0;
}

void criterion8() {
  Stopwatch sw;
  const fs::path dir = fs::temp_directory_path() / "mpv_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "cli.log";
  std::vector<std::string> bad;
  auto same = [&](const std::string& what, const fs::path& a, const fs::path& b) {
    const std::string x = slurp(a), y = slurp(b);
    if (x.empty() || x != y) bad.push_back(what);
  };
  auto p = [&](const std::string& name) { return "\"" + (dir / name).string() + "\""; };

  bool ran = true;
  for (const char* tag : {"a", "b"}) {
    const std::string threads = tag[0] == 'a' ? " --threads 1" : " --threads 4";
    const std::string t = tag;
    ran = ran && run("collect --scenario urban-1 --seed 5 --steps 120 --out " + p("u_" + t + ".jsonl.gz") + threads, log);
    ran = ran && run("collect --scenario highway-0 --seed 6 --steps 120 --out " + p("h_" + t + ".jsonl.gz") + threads, log);
    ran = ran && run("train --data " + p("u_a.jsonl.gz") + " " + p("h_a.jsonl.gz") +
                         " --epochs 2 --lr 0.001 --batch 64 --frame north --map --history --out " + p("w_" + t + ".bin") +
                         threads,
                     log);
    ran = ran && run("drive --policy bc --weights " + p("w_a.bin") +
                         " --frame north --map --history --scenario urban-0,highway-1 --rollouts 3 --steps 60 --seed 2"
                         " --report " + p("d_" + t + ".txt") + threads,
                     log);
    ran = ran && run("drive --policy occupancy --scenario all --rollouts 1 --steps 40 --seed 9 --report " +
                         p("o_" + t + ".txt") + threads,
                     log);
    ran = ran && run("render --data " + p("u_a.jsonl.gz") + " --frame 500 --view north --map --history --out " +
                         p("r_" + t + ".pgm") + threads,
                     log);
    ran = ran && run("metrics3d --data " + p("u_a.jsonl.gz") + " --report " + p("m_" + t + ".txt") + threads, log);
    ran = ran && run("ablate --scenarios urban-0,highway-0 --set bench.collect_steps=60 --set bench.eval_rollouts=1"
                     " --set bench.eval_steps=20 --out " + p("t_" + t + ".txt") + threads,
                     log);
  }
  if (!ran) bad.push_back("a command failed (see " + log.string() + ")");
  same("dataset", dir / "u_a.jsonl.gz", dir / "u_b.jsonl.gz");
  same("dataset", dir / "h_a.jsonl.gz", dir / "h_b.jsonl.gz");
  same("weights", dir / "w_a.bin", dir / "w_b.bin");
  same("bc report", dir / "d_a.txt", dir / "d_b.txt");
  same("occupancy report", dir / "o_a.txt", dir / "o_b.txt");
  same("pgm", dir / "r_a.pgm", dir / "r_b.pgm");
  same("metrics3d", dir / "m_a.txt", dir / "m_b.txt");
  same("ablation table", dir / "t_a.txt", dir / "t_b.txt");
  std::string detail = "collect, train, drive, render, metrics3d, ablate repeated with 1 and 4 threads";
  for (const auto& b : bad) detail += "; differs: " + b;
  report(8, bad.empty(), detail + "; " + num(sw.seconds(), 1) + " s");
}

}  // namespace

int main() {
  try {
    criterion1();
    criterion2();
    criterion3();
    criterion4();

    Stopwatch sw;
    BcData bc;
    std::vector<RolloutJob> jobs;
    for (const ScenarioId& s : all_scenarios()) jobs.push_back({s, 7000 + static_cast<std::uint64_t>(jobs.size())});
    // 8 x 900 decisions x 7 frames = 50400 frames
    bc.data = parallel_map<Dataset>(jobs.size(), [&](std::size_t i) { return collect(jobs[i].scenario, jobs[i].seed, 900); });
    std::cout << "collected " << bc.data.size() << " rollouts in " << num(sw.seconds(), 1) << " s" << std::endl;

    criterion5(bc);
    criterion6(bc);
    criterion7();
    criterion8();
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
