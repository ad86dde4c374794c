// mpv: command-line front end for data collection, training, driving
// evaluation, plan-view rendering, 3D metrics and the ablation table.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpv/bench.hpp"
#include "mpv/config.hpp"
#include "mpv/imitation.hpp"
#include "mpv/policy.hpp"
#include "mpv/raster.hpp"
#include "mpv/sensor.hpp"
#include "mpv/world.hpp"

namespace {

using namespace mpv;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  unsigned threads = default_threads();
};

Config load_config(const Common& c) {
  Config cfg;
  cfg.load_env();
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  for (const auto& o : c.overrides) cfg.set_assignment(o);
  check_raster_config(cfg);
  const auto stray = cfg.unknown_keys({"sim.", "sensor.", "policy.", "raster.", "bench."});
  if (!stray.empty()) throw ConfigError("unknown config key " + stray.front());
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<ScenarioId> parse_scenarios(const std::string& spec) {
  if (spec == "all") return all_scenarios();
  std::vector<ScenarioId> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string name = spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!name.empty()) out.push_back(parse_scenario(name));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("no scenarios given");
  return out;
}

FrameTag parse_frame(const std::string& s) {
  if (s == "travel") return FrameTag::kTravel;
  if (s == "north" || s == "north_up") return FrameTag::kNorthUp;
  throw std::invalid_argument("frame must be travel or north: " + s);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "config file (key = value lines)");
  sub->add_option("--set", c.overrides, "config override key=value (repeatable)");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

void add_view(CLI::App* sub, std::string& frame, bool& map, bool& history, bool& blind) {
  sub->add_option("--frame", frame, "plan-view frame: travel or north")->capture_default_str();
  sub->add_flag("--map", map, "include the road map layer");
  sub->add_flag("--history", history, "include the ego history layer");
  sub->add_flag("--blind", blind, "zero the plan-view features (ego state only)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"monocular plan view driving toolkit"};
  app.require_subcommand(1);

  // collect
  Common collect_c;
  std::string collect_scenario;
  std::uint64_t collect_seed = 0;
  int collect_steps = 800;
  std::string collect_out;
  double collect_noise = -1.0;
  auto* collect_cmd = app.add_subcommand("collect", "record expert driving with noise injection");
  collect_cmd->add_option("--scenario", collect_scenario, "scenario name, e.g. urban-3")->required();
  collect_cmd->add_option("--seed", collect_seed, "rollout seed")->required();
  collect_cmd->add_option("--steps", collect_steps, "decision steps")->check(CLI::PositiveNumber)->capture_default_str();
  collect_cmd->add_option("--out", collect_out, "output .jsonl.gz")->required();
  collect_cmd->add_option("--noise-period", collect_noise, "seconds between noise injections (inf disables)");
  add_common(collect_cmd, collect_c);

  // train
  Common train_c;
  std::vector<std::string> train_data;
  int train_epochs = 2;
  double train_lr = 0.001;
  std::size_t train_batch = 64;
  std::uint64_t train_seed = 0;
  std::string train_frame = "travel";
  bool train_map = false, train_history = false, train_blind = false;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "behavior cloning of the linear policy");
  train_cmd->add_option("--data", train_data, "dataset files")->required()->expected(1, -1);
  train_cmd->add_option("--epochs", train_epochs)->capture_default_str();
  train_cmd->add_option("--lr", train_lr)->capture_default_str();
  train_cmd->add_option("--batch", train_batch)->capture_default_str();
  train_cmd->add_option("--seed", train_seed, "shuffle seed")->capture_default_str();
  add_view(train_cmd, train_frame, train_map, train_history, train_blind);
  train_cmd->add_option("--out", train_out, "weights file")->required();
  add_common(train_cmd, train_c);

  // drive
  Common drive_c;
  std::string drive_policy;
  std::string drive_weights;
  std::string drive_scenario;
  int drive_rollouts = 10;
  int drive_steps = 800;
  std::uint64_t drive_seed = 0;
  std::string drive_report;
  std::string drive_frame = "travel";
  bool drive_map = false, drive_history = false, drive_blind = false;
  auto* drive_cmd = app.add_subcommand("drive", "on-policy evaluation");
  drive_cmd->add_option("--policy", drive_policy, "expert, occupancy or bc")
      ->required()
      ->check(CLI::IsMember({"expert", "occupancy", "bc"}));
  drive_cmd->add_option("--weights", drive_weights, "weights file (bc only)");
  drive_cmd->add_option("--scenario", drive_scenario, "scenario name, comma list or all")->required();
  drive_cmd->add_option("--rollouts", drive_rollouts)->check(CLI::PositiveNumber)->capture_default_str();
  drive_cmd->add_option("--steps", drive_steps, "decision steps per rollout")->check(CLI::PositiveNumber)->capture_default_str();
  drive_cmd->add_option("--seed", drive_seed, "first rollout seed")->capture_default_str();
  drive_cmd->add_option("--report", drive_report, "report path")->required();
  add_view(drive_cmd, drive_frame, drive_map, drive_history, drive_blind);
  add_common(drive_cmd, drive_c);

  // render
  Common render_c;
  std::string render_data;
  std::size_t render_index = 0;
  std::string render_out;
  std::string render_channel = "vehicles";
  std::string render_view_frame = "travel";
  bool render_map = false, render_history = false;
  auto* render_cmd = app.add_subcommand("render", "plan view of one dataset frame as PGM");
  render_cmd->add_option("--data", render_data, "dataset file")->required();
  render_cmd->add_option("--frame", render_index, "frame index within the file")->required();
  render_cmd->add_option("--out", render_out, "output .pgm")->required();
  render_cmd->add_option("--channel", render_channel, "vehicles, pedestrians, map or ego_history")->capture_default_str();
  render_cmd->add_option("--view", render_view_frame, "travel or north")->capture_default_str();
  render_cmd->add_flag("--map", render_map);
  render_cmd->add_flag("--history", render_history);
  add_common(render_cmd, render_c);

  // metrics3d
  Common metrics_c;
  std::vector<std::string> metrics_data;
  std::string metrics_report;
  auto* metrics_cmd = app.add_subcommand("metrics3d", "3D estimation metrics of recorded detections");
  metrics_cmd->add_option("--data", metrics_data, "dataset files")->required()->expected(1, -1);
  metrics_cmd->add_option("--report", metrics_report, "also write the table here");
  add_common(metrics_cmd, metrics_c);

  // ablate
  Common ablate_c;
  std::string ablate_scenarios = "all";
  std::string ablate_out;
  auto* ablate_cmd = app.add_subcommand("ablate", "plan-view design ablation");
  ablate_cmd->add_option("--scenarios", ablate_scenarios, "all or a comma list")->capture_default_str();
  ablate_cmd->add_option("--out", ablate_out, "table path")->required();
  add_common(ablate_cmd, ablate_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*collect_cmd) {
      const Config cfg = load_config(collect_c);
      CollectOptions opt;
      opt.sim = sim_config(cfg);
      opt.expert = expert_config(cfg);
      opt.policy = policy_config(cfg);
      opt.profile = noise_profile(cfg);
      opt.camera = camera_config(cfg);
      opt.noise_period_s = collect_noise >= 0.0 ? collect_noise : opt.sim.noise_period_s;
      if (!(opt.noise_period_s > 0.0)) throw std::invalid_argument("noise period must be positive");
      const Dataset ds = collect(parse_scenario(collect_scenario), collect_seed, collect_steps, opt);
      save_dataset(ds, collect_out);
      std::size_t flagged = 0;
      for (const Frame& f : ds.frames) flagged += f.noise_flag ? 1 : 0;
      std::cout << "frames=" << ds.frames.size() << " flagged=" << flagged << " out=" << collect_out << '\n';
    } else if (*train_cmd) {
      const Config cfg = load_config(train_c);
      (void)cfg;
      std::vector<Dataset> data;
      for (const auto& p : train_data) data.push_back(load_dataset(p));
      const ViewConfig view{parse_frame(train_frame), train_map, train_history, train_blind};
      const FeatureSet fs = build_features(data, view);
      const Split split = split_train_val(fs, data.size());
      TrainOptions topt;
      topt.epochs = train_epochs;
      topt.lr = train_lr;
      topt.batch = train_batch;
      topt.seed = train_seed;
      const TrainResult tr = train_bc(fs, split.train, split.val, topt);
      save_weights(tr.weights, train_out);
      Report rep({"epoch", "train_ce", "val_ce"});
      rep.add_note("view " + view.name() + ", " + std::to_string(split.train.size()) + " train / " +
                   std::to_string(split.val.size()) + " val frames");
      for (const EpochStats& e : tr.epochs) rep.add_row({std::to_string(e.epoch), fixed(e.train_ce, 4), fixed(e.val_ce, 4)});
      std::cout << rep.str();
    } else if (*drive_cmd) {
      const Config cfg = load_config(drive_c);
      RolloutOptions ro;
      ro.n_steps = drive_steps;
      ro.sim = sim_config(cfg);
      ro.control = policy_config(cfg);
      ro.profile = noise_profile(cfg);
      ro.camera = camera_config(cfg);
      DrivingPolicy policy;
      const ViewConfig view{parse_frame(drive_frame), drive_map, drive_history, drive_blind};
      if (drive_policy == "expert") {
        policy = make_expert_policy(expert_config(cfg));
      } else if (drive_policy == "occupancy") {
        policy = make_occupancy_policy(ro.control, ro.camera);
      } else {
        if (drive_weights.empty()) throw std::invalid_argument("--policy bc needs --weights");
        policy = make_linear_policy(load_weights(drive_weights), view, ro.camera);
      }
      const auto scenarios = parse_scenarios(drive_scenario);
      const auto jobs = rollout_jobs(scenarios, drive_rollouts, drive_seed);
      const auto metrics = run_rollouts(policy, jobs, ro, drive_c.threads);

      Report rep({"scenario", "seed", "steps", "distance_m", "collisions", "interventions"});
      rep.add_note("policy " + policy.name + (drive_policy == "bc" ? " view " + view.name() : ""));
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        rep.add_row({jobs[i].scenario.name(), std::to_string(jobs[i].seed), std::to_string(metrics[i].steps),
                     fixed(metrics[i].distance_m, 2), std::to_string(metrics[i].collisions),
                     std::to_string(metrics[i].interventions)});
      }
      const Aggregate a = aggregate(metrics);
      Report sum({"policy", "rollouts", "distance_m", "distance_between_interventions_m", "interventions_100m",
                  "interventions_std", "collisions_100m", "collisions_std"});
      sum.add_note("std: population std across rollouts of per-rollout rates");
      sum.add_row({policy.name, std::to_string(a.rollouts), fixed(a.total_distance_m, 2),
                   fixed(a.distance_between_interventions_m, 2), fixed(a.interventions_per_100m, 4),
                   fixed(a.interventions_per_100m_std, 4), fixed(a.collisions_per_100m, 4),
                   fixed(a.collisions_per_100m_std, 4)});
      const std::string text = rep.str() + "\n" + sum.str();
      write_text(drive_report, text);
      std::cout << sum.str();
    } else if (*render_cmd) {
      const Config cfg = load_config(render_c);
      const Dataset ds = load_dataset(render_data);
      if (render_index >= ds.frames.size()) {
        throw std::out_of_range("frame " + std::to_string(render_index) + " outside dataset of " +
                                std::to_string(ds.frames.size()));
      }
      const ViewConfig view{parse_frame(render_view_frame), render_map, render_history, false};
      const Frame& f = ds.frames[render_index];
      const auto hist = view.history ? frame_history(ds, render_index) : std::vector<Vec2>{};
      const PlanViewImage img = render_view(f.objects, f.ego, hist, *network_for(parse_scenario(f.scenario).kind),
                                            view.grid(), camera_config(cfg));
      write_text(render_out, export_pgm(img, render_channel));
      std::cout << "cells=" << img.count(layer_from_name(render_channel)) << " out=" << render_out << '\n';
    } else if (*metrics_cmd) {
      load_config(metrics_c);
      Report rep({"class", "count", "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "os", "dim"});
      std::vector<Dataset> data;
      for (const auto& p : metrics_data) data.push_back(load_dataset(p));
      for (ObjectClass cls : {ObjectClass::kVehicle, ObjectClass::kPedestrian}) {
        std::vector<EstimatePair> pairs;
        for (const Dataset& ds : data) {
          const auto p = estimate_pairs(ds, cls);
          pairs.insert(pairs.end(), p.begin(), p.end());
        }
        if (pairs.empty()) continue;
        const Estimation3DMetrics m = estimation_metrics(pairs);
        rep.add_row({std::string(to_string(cls)), std::to_string(m.count), fixed(m.abs_rel, 4), fixed(m.sq_rel, 4),
                     fixed(m.rmse, 4), fixed(m.rmse_log, 4), fixed(m.delta1, 4), fixed(m.delta2, 4), fixed(m.delta3, 4),
                     fixed(m.os, 4), fixed(m.dim, 4)});
      }
      std::cout << rep.str();
      if (!metrics_report.empty()) write_text(metrics_report, rep.str());
    } else if (*ablate_cmd) {
      const Config cfg = load_config(ablate_c);
      AblationOptions opt;
      opt.scenarios = parse_scenarios(ablate_scenarios);
      opt.collect_rollouts = cfg.get("bench.collect_rollouts", opt.collect_rollouts);
      opt.collect_steps = cfg.get("bench.collect_steps", opt.collect_steps);
      opt.eval_rollouts = cfg.get("bench.eval_rollouts", opt.eval_rollouts);
      opt.eval_steps = cfg.get("bench.eval_steps", opt.eval_steps);
      opt.collect.sim = opt.rollout.sim = sim_config(cfg);
      opt.collect.policy = opt.rollout.control = policy_config(cfg);
      opt.collect.expert = expert_config(cfg);
      opt.collect.profile = opt.rollout.profile = noise_profile(cfg);
      opt.collect.camera = opt.rollout.camera = camera_config(cfg);
      opt.threads = ablate_c.threads;
      const auto grid = ablation_grid();
      const auto rows = run_ablation(opt, grid);
      const std::string text = ablation_report(rows).str();
      write_text(ablate_out, text);
      std::cout << text;
    }
  } catch (const std::exception& e) {
    std::cerr << "mpv: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
