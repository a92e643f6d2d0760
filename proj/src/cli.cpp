#include "toa_slam/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <future>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "toa_slam/errors.hpp"
#include "toa_slam/io.hpp"

namespace toa_slam {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- experiment API

BackendConfig backend_config_for(const ScenarioConfig& config, const ScenarioData& data) {
  BackendConfig bc;
  bc.initial_transform =
      data.true_transform * random_perturbation(config.perturbation_translation_m,
                                                config.perturbation_rotation_deg * std::numbers::pi / 180.0,
                                                config.seed);
  bc.odometry_sigma_translation = config.odometry.sigma_translation;
  bc.odometry_sigma_rotation = config.odometry.sigma_rotation;
  bc.loop_closure_sigma_translation = config.loop_closure.sigma_translation;
  bc.loop_closure_sigma_rotation = config.loop_closure.sigma_rotation;
  return bc;
}

ScenarioConfig resolved_config(const ScenarioConfig& config, const ScenarioData& data) {
  ScenarioConfig out = config;
  for (auto& sc : out.stations) {
    const auto it = std::find_if(data.stations.begin(), data.stations.end(),
                                 [&](const BaseStation& b) { return b.id == sc.id; });
    if (it == data.stations.end()) continue;
    sc.sigma = it->sigma;
    sc.bias = it->bias;
  }
  return out;
}

std::vector<BaseStation> stations_of(const ScenarioConfig& resolved) {
  std::vector<BaseStation> out;
  for (const auto& sc : resolved.stations) {
    if (!sc.sigma || !sc.bias)
      throw Error(ErrorCode::ConfigError, "station " + std::to_string(sc.id) + " has no resolved sigma/bias");
    BaseStation b;
    b.id = sc.id;
    b.position = sc.position;
    b.sigma = *sc.sigma;
    b.bias = *sc.bias;
    if (sc.intervals) b.intervals = *sc.intervals;
    out.push_back(b);
  }
  return out;
}

EvalReport evaluate_run(const ScenarioConfig& config, const ScenarioData& data,
                        const BackendEstimate& estimate, bool toa_used) {
  EvalInputs in;
  in.estimate = &estimate;
  in.ground_truth = &data.ground_truth;
  in.mode = config.mode;
  in.toa_used = toa_used;
  in.true_scale = 1.0 / config.odometry.scale_drift;
  for (const auto& s : data.stations) in.stations.push_back(s.position);
  return evaluate(in);
}

ExperimentResult run_experiment(const ScenarioConfig& config, bool use_toa) {
  ExperimentResult r;
  r.data = build_scenario(config);
  const std::vector<ToaMeasurement> none;
  const auto& toa = use_toa ? r.data.toa : none;
  r.estimate = run_backend(r.data.odometry, toa, r.data.loop_closures, r.data.stations, config.mode,
                           backend_config_for(config, r.data));
  r.report = evaluate_run(config, r.data, r.estimate, use_toa && !toa.empty());
  return r;
}

// ---------------------------------------------------------------- manifest

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["format"] = "toa-slam-manifest/1";
  j["config_source"] = m.config_source;
  j["seed"] = m.config.seed;
  j["config"] = json::parse(config_to_json(m.config));
  j["artifacts"] = m.artifacts;
  if (!m.run.empty()) j["run"] = m.run;
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, source + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "toa-slam-manifest/1")
    throw Error(ErrorCode::ConfigError, source + ": not a toa-slam manifest");
  RunManifest m;
  try {
    m.config_source = j.at("config_source").get<std::string>();
    m.config = parse_config(j.at("config").dump(2), source + " (config)");
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    if (j.contains("run")) m.run = j.at("run").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, source + ": " + e.what());
  }
  return m;
}

// ---------------------------------------------------------------- command line

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All file output goes through here, so nothing lands outside --out.
class OutputDir {
 public:
  explicit OutputDir(const std::string& root) {
    if (root.empty()) throw UsageError("--out is required");
    root_ = fs::absolute(root).lexically_normal();
  }

  std::string write(const std::string& relative, const std::string& text) const {
    const fs::path target = (root_ / relative).lexically_normal();
    const auto [end, _] = std::mismatch(root_.begin(), root_.end(), target.begin(), target.end());
    if (end != root_.end()) throw Error(ErrorCode::IoError, "refusing to write outside " + root_.string());
    fs::create_directories(target.parent_path());
    write_text_file(target, text);
    return relative;
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
};

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string tum_text(const Trajectory& t) {
  std::ostringstream ss;
  write_tum(ss, t);
  return ss.str();
}

std::string toa_text(const OutputDir& dir, const std::vector<ToaMeasurement>& toa, const std::string& name) {
  // write_toa_csv takes a path, so this writes straight under --out
  const fs::path p = dir.root() / name;
  fs::create_directories(p.parent_path());
  write_toa_csv(p, toa);
  return name;
}

json pose_json(const RigidTransform& T) {
  const auto& q = T.rotation();
  return {{"translation", {T.translation().x(), T.translation().y(), T.translation().z()}},
          {"quaternion_xyzw", {q.x(), q.y(), q.z(), q.w()}}};
}

std::string estimate_json(const BackendEstimate& e) {
  json j;
  j["transform"] = pose_json(e.transform);
  j["transform_initialized"] = e.transform_initialized;
  j["scale"] = e.scale;
  json biases = json::object();
  for (const auto& [id, b] : e.biases) biases[std::to_string(id)] = b;
  j["biases_m"] = biases;
  json stations = json::object();
  for (const auto& [id, p] : e.stations) stations[std::to_string(id)] = {p.x(), p.y(), p.z()};
  j["stations"] = stations;
  j["stats"] = {{"keyframes", e.stats.keyframes},
                {"tracking_steps", e.stats.tracking_steps},
                {"local_refinements", e.stats.local_refinements},
                {"global_refinements", e.stats.global_refinements},
                {"transformation_refinements", e.stats.transformation_refinements},
                {"scale_refinements", e.stats.scale_refinements},
                {"toa_used", e.stats.toa_used},
                {"toa_dropped", e.stats.toa_dropped},
                {"loop_closures_used", e.stats.loop_closures_used}};
  return j.dump(2) + "\n";
}

void write_error_record(const std::string& out_dir, const std::string& command, const std::string& code,
                        const std::string& message) {
  if (out_dir.empty()) return;
  try {
    OutputDir dir(out_dir);
    json j{{"command", command}, {"error", code}, {"message", message}};
    dir.write("error.json", j.dump(2) + "\n");
  } catch (...) {
    // the error itself is already on stderr
  }
}

SensorClass parse_sensor(const std::string& s) {
  return s == "monocular" ? SensorClass::Monocular : SensorClass::RangeScaled;
}

struct Options {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;

  std::string manifest;
  std::string mode;
  std::string stations;
  std::string loop_closure;
  bool no_toa = false;
  bool baseline = false;

  std::string estimate;
  std::string reference;
  std::string alignment = "se3";

  std::vector<std::string> layouts;

  std::string axis;
  std::vector<std::string> values;
  int seeds = 0;
  int jobs = 1;
};

ScenarioConfig load_scenario(const Options& o) {
  if (o.config.empty()) throw UsageError("--config is required");
  ScenarioConfig c = resolve_config(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

RunManifest write_simulation(const OutputDir& dir, const std::string& source, const ScenarioConfig& config,
                             const ScenarioData& data) {
  RunManifest m;
  m.config_source = source;
  m.config = resolved_config(config, data);
  m.artifacts["ground_truth"] = dir.write("ground_truth.tum", tum_text(data.ground_truth));
  m.artifacts["odometry"] = dir.write("odometry.tum", tum_text(odometry_to_trajectory(data.odometry)));
  m.artifacts["toa"] = toa_text(dir, data.toa, "toa.csv");
  if (config.mode.loop_closure) {
    write_loop_closure_csv(dir.root() / "loop_closures.csv", data.loop_closures);
    m.artifacts["loop_closures"] = "loop_closures.csv";
  }
  return m;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const OutputDir dir(o.out);
  const ScenarioConfig config = load_scenario(o);
  const ScenarioData data = build_scenario(config);
  const RunManifest m = write_simulation(dir, o.config, config, data);
  dir.write("manifest.json", manifest_to_json(m));
  out << "simulated " << data.ground_truth.size() << " poses, " << data.toa.size() << " ranges, "
      << data.loop_closures.size() << " loop closures -> " << dir.root().string() << "\n";
  return kExitOk;
}

ScenarioData load_manifest_data(const RunManifest& m, const fs::path& base) {
  auto path = [&](const std::string& key) {
    const auto it = m.artifacts.find(key);
    if (it == m.artifacts.end()) throw Error(ErrorCode::ConfigError, "manifest has no '" + key + "' artifact");
    const fs::path p(it->second);
    return p.is_absolute() ? p : base / p;
  };
  ScenarioData d;
  d.ground_truth = read_tum(path("ground_truth"));
  if (d.ground_truth.empty()) throw Error(ErrorCode::EmptyStream, "ground truth is empty");
  d.true_transform = d.ground_truth.front().pose;
  d.odometry = trajectory_to_odometry(read_tum(path("odometry")));
  d.toa = read_toa_csv(path("toa"));
  if (m.artifacts.count("loop_closures")) d.loop_closures = read_loop_closure_csv(path("loop_closures"));
  d.stations = stations_of(m.config);
  return d;
}

int cmd_run(const Options& o, std::ostream& out) {
  const OutputDir dir(o.out);
  RunManifest m;
  ScenarioData data;
  if (!o.manifest.empty()) {
    if (!o.config.empty()) throw UsageError("give either --manifest or --config, not both");
    if (o.seed) throw UsageError("--seed comes from the manifest when --manifest is given");
    m = parse_manifest(read_text_file(o.manifest), o.manifest);
    data = load_manifest_data(m, fs::path(o.manifest).parent_path());
    // copy the inputs so the output directory stands on its own
    dir.write("ground_truth.tum", tum_text(data.ground_truth));
    dir.write("odometry.tum", tum_text(odometry_to_trajectory(data.odometry)));
    toa_text(dir, data.toa, "toa.csv");
    m.artifacts = {{"ground_truth", "ground_truth.tum"}, {"odometry", "odometry.tum"}, {"toa", "toa.csv"}};
    if (!data.loop_closures.empty() || m.config.mode.loop_closure) {
      write_loop_closure_csv(dir.root() / "loop_closures.csv", data.loop_closures);
      m.artifacts["loop_closures"] = "loop_closures.csv";
    }
  } else if (!o.config.empty()) {
    const ScenarioConfig config = load_scenario(o);
    data = build_scenario(config);
    m = write_simulation(dir, o.config, config, data);
  } else {
    throw UsageError("run needs --manifest or --config");
  }

  ScenarioConfig config = m.config;
  if (!o.mode.empty()) config.mode.sensor = parse_sensor(o.mode);
  if (!o.stations.empty())
    config.mode.stations = o.stations == "unknown" ? StationKnowledge::Unknown : StationKnowledge::Known;
  if (!o.loop_closure.empty()) config.mode.loop_closure = o.loop_closure == "on";
  if (config.mode.loop_closure && data.loop_closures.empty() && !m.artifacts.count("loop_closures"))
    out << "note: loop closure enabled but the scenario has no loop-closure measurements\n";

  const std::vector<ToaMeasurement> none;
  const auto& toa = o.no_toa ? none : data.toa;
  const BackendEstimate est =
      run_backend(data.odometry, toa, data.loop_closures, data.stations, config.mode, backend_config_for(config, data));
  EvalReport report = evaluate_run(config, data, est, !toa.empty());
  if (o.baseline) {
    std::optional<double> base;
    try {
      const auto b = run_backend(data.odometry, {}, data.loop_closures, data.stations, config.mode,
                                 backend_config_for(config, data));
      base = local_error(evaluate_run(config, data, b, false));
    } catch (const Error&) {
      base.reset();
    }
    attach_improvement(report, "no_toa", base);
  }

  m.artifacts["estimate_local"] = dir.write("estimate_local.tum", tum_text(est.keyframes));
  if (est.transform_initialized) m.artifacts["estimate_global"] = dir.write("estimate_global.tum", tum_text(est.global));
  m.artifacts["estimate"] = dir.write("estimate.json", estimate_json(est));
  m.artifacts["report"] = dir.write("report.csv", eval_csv_header() + "\n" + eval_csv_row(config.name, report) + "\n");
  m.run = {{"sensor", std::string(to_string(config.mode.sensor))},
           {"stations", std::string(to_string(config.mode.stations))},
           {"loop_closure", config.mode.loop_closure ? "on" : "off"},
           {"toa", o.no_toa ? "off" : "on"},
           {"baseline", o.baseline ? "no_toa" : "none"}};
  m.config.mode = config.mode;
  dir.write("manifest.json", manifest_to_json(m));

  out << "local ATE (" << (report.local_ate_sim3 ? "Sim3" : "SE3") << "): " << fmt(local_error(report)) << " m\n";
  out << "global ATE: " << (report.global_ate ? fmt(*report.global_ate) + " m" : std::string("N/A")) << "\n";
  if (report.scale_error) out << "scale error: " << fmt(*report.scale_error, "%.3f") << " %\n";
  if (o.baseline)
    out << "improvement vs no_toa: "
        << (report.improvement ? fmt(*report.improvement, "%.2f") + " %" : std::string("undefined (baseline failed)"))
        << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Trajectory est = read_tum(o.estimate);
  const Trajectory ref = read_tum(o.reference);
  const Alignment a = o.alignment == "none" ? Alignment::None : o.alignment == "sim3" ? Alignment::Sim3 : Alignment::SE3;
  const AteResult r = ate_rmse(est, ref, a);
  const std::string row = o.alignment + "," + fmt(r.rmse, "%.9f") + "," + fmt(r.scale, "%.9f") + "," +
                          std::to_string(r.pairs);
  out << "alignment,ate_rmse_m,scale,pairs\n" << row << "\n";
  if (!o.out.empty()) OutputDir(o.out).write("eval.csv", "alignment,ate_rmse_m,scale,pairs\n" + row + "\n");
  return kExitOk;
}

int cmd_gdop(const Options& o, std::ostream& out) {
  const OutputDir dir(o.out);
  const ScenarioConfig config = load_scenario(o);
  const ScenarioData data = build_scenario(config);

  std::vector<std::pair<std::string, std::vector<Vec3>>> layouts;
  std::vector<std::string> names = o.layouts;
  if (names.size() == 1 && names[0] == "all") names = gdop_layout_names();
  if (names.empty()) {
    std::vector<Vec3> p;
    for (const auto& s : data.stations) p.push_back(s.position);
    layouts.emplace_back(config.name, p);
  }
  for (const auto& n : names) {
    std::vector<Vec3> p;
    for (const auto& s : station_layout(n)) p.push_back(s.position);
    layouts.emplace_back(n, p);
  }

  struct Row {
    std::string name;
    GdopProfile profile;
  };
  std::vector<Row> rows;
  for (const auto& [name, stations] : layouts) {
    rows.push_back({name, gdop_profile(data.ground_truth, stations)});
    dir.write("gdop_" + name + ".csv", gdop_series_csv(rows.back().profile));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.profile.mean < b.profile.mean; });
  std::string summary = "rank,layout,mean_gdop,max_gdop,singular_samples\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    summary += std::to_string(i + 1) + "," + rows[i].name + "," + fmt(rows[i].profile.mean, "%.9f") + "," +
               fmt(rows[i].profile.max, "%.9f") + "," + std::to_string(rows[i].profile.singular) + "\n";
  dir.write("gdop_summary.csv", summary);
  out << summary;
  return kExitOk;
}

struct Cell {
  std::string value;
  std::uint64_t seed = 0;
  ScenarioConfig config;
  bool ok = false;
  std::string failure;
  EvalReport report;
};

void run_cell(Cell& cell, bool baseline) {
  try {
    const auto r = run_experiment(cell.config, true);
    cell.report = r.report;
    if (baseline) {
      std::optional<double> base;
      try {
        base = local_error(run_experiment(cell.config, false).report);
      } catch (const Error&) {
        base.reset();
      }
      attach_improvement(cell.report, "no_toa", base);
    }
    cell.ok = true;
  } catch (const Error& e) {
    cell.failure = std::string(to_string(e.code()));
  }
}

std::string mean_or_na(const std::vector<double>& v) {
  if (v.empty()) return "N/A";
  double s = 0.0;
  for (double x : v) s += x;
  return fmt(s / static_cast<double>(v.size()), "%.12f");
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const OutputDir dir(o.out);
  const ScenarioConfig base = load_scenario(o);
  if (o.jobs < 1) throw UsageError("--jobs must be at least 1");

  std::vector<std::string> values = o.values;
  int seeds = o.seeds;
  if (o.axis == "configurations") {
    if (values.empty()) values = gdop_layout_names();
    if (seeds == 0) seeds = 1;
  } else if (o.axis == "frequencies") {
    if (values.empty()) values = {"28ghz", "78ghz"};
    if (seeds == 0) seeds = 1;
  } else {
    if (!values.empty()) throw UsageError("the seeds axis takes --seeds N, not --values");
    if (seeds == 0) seeds = 5;
    values = {"seeds"};
  }
  if (seeds < 1) throw UsageError("--seeds must be at least 1");

  std::vector<Cell> cells;
  for (const auto& v : values) {
    for (int k = 0; k < seeds; ++k) {
      Cell c;
      c.value = v;
      c.seed = base.seed + static_cast<std::uint64_t>(k);
      c.config = base;
      c.config.seed = c.seed;
      if (o.axis == "configurations") {
        c.config.stations.clear();
        for (const auto& s : station_layout(v)) c.config.stations.push_back({s.id, s.position, {}, {}, {}});
        c.config.name = v;
      } else if (o.axis == "frequencies") {
        if (v == "28ghz") c.config.frequency = FrequencyPreset::Ghz28;
        else if (v == "78ghz") c.config.frequency = FrequencyPreset::Ghz78;
        else throw UsageError("frequency values are 28ghz and 78ghz");
        for (auto& s : c.config.stations) s.sigma.reset(), s.bias.reset();
      }
      cells.push_back(std::move(c));
    }
  }

  // Cells are independent; run them in batches of --jobs.
  for (std::size_t i = 0; i < cells.size(); i += static_cast<std::size_t>(o.jobs)) {
    std::vector<std::future<void>> batch;
    for (std::size_t j = i; j < std::min(cells.size(), i + static_cast<std::size_t>(o.jobs)); ++j)
      batch.push_back(std::async(std::launch::async, run_cell, std::ref(cells[j]), o.baseline));
    for (auto& f : batch) f.get();
  }

  std::string table = "axis_value,seed,status," + eval_csv_header() + "\n";
  for (const auto& c : cells) {
    const std::string label = c.value + "_seed" + std::to_string(c.seed);
    if (c.ok) {
      const std::string row = eval_csv_row(label, c.report);
      table += c.value + "," + std::to_string(c.seed) + ",ok," + row + "\n";
      dir.write("cells/" + label + "/report.csv", eval_csv_header() + "\n" + row + "\n");
    } else {
      table += c.value + "," + std::to_string(c.seed) + ",failed: " + c.failure + "\n";
    }
  }
  dir.write("sweep_cells.csv", table);

  std::string means = "axis_value,cells_ok,cells_failed,mean_local_error_m,mean_global_ate_m,mean_scale_error_pct,"
                      "mean_gdop,mean_improvement_pct\n";
  std::size_t ok_total = 0;
  for (const auto& v : values) {
    std::vector<double> local, global, scale, gd, imp;
    int ok = 0, failed = 0;
    for (const auto& c : cells) {
      if (c.value != v) continue;
      if (!c.ok) {
        ++failed;
        continue;
      }
      ++ok;
      local.push_back(local_error(c.report));
      if (c.report.global_ate) global.push_back(*c.report.global_ate);
      if (c.report.scale_error) scale.push_back(*c.report.scale_error);
      if (c.report.gdop_mean) gd.push_back(*c.report.gdop_mean);
      if (c.report.improvement) imp.push_back(*c.report.improvement);
    }
    ok_total += static_cast<std::size_t>(ok);
    means += v + "," + std::to_string(ok) + "," + std::to_string(failed) + "," + mean_or_na(local) + "," +
             mean_or_na(global) + "," + mean_or_na(scale) + "," + mean_or_na(gd) + "," + mean_or_na(imp) + "\n";
  }
  dir.write("sweep_means.csv", means);
  out << means;
  return ok_total > 0 ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Factor-graph back-end fusing odometry with ToA ranges: simulation, estimation, evaluation.",
               "toa-slam"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--seed", o.seed, "Override the scenario seed");
  app.add_option("--out", o.out, "Output directory; nothing is written elsewhere");
  app.add_option("--config", o.config, "Scenario config file or preset name");

  const std::vector<std::string> sensors{"range_scaled", "monocular"};
  auto* sim = app.add_subcommand("simulate", "Generate ground truth, odometry, ToA ranges and a manifest");
  auto* run = app.add_subcommand("run", "Run the back-end on a manifest or config and evaluate it");
  run->add_option("--manifest", o.manifest, "manifest.json written by simulate")->check(CLI::ExistingFile);
  run->add_option("--mode", o.mode, "Sensor class")->check(CLI::IsMember(sensors));
  run->add_option("--stations", o.stations, "Station knowledge")->check(CLI::IsMember({"known", "unknown"}));
  run->add_option("--loop-closure", o.loop_closure, "Loop-closure factors")->check(CLI::IsMember({"on", "off"}));
  run->add_flag("--no-toa", o.no_toa, "Drop all ranges (odometry-only baseline)");
  run->add_flag("--baseline", o.baseline, "Also run the no-ToA baseline and report the improvement");

  auto* ev = app.add_subcommand("eval", "ATE between two TUM trajectories");
  ev->add_option("--estimate", o.estimate, "Estimated trajectory (TUM)")->required()->check(CLI::ExistingFile);
  ev->add_option("--reference", o.reference, "Reference trajectory (TUM)")->required()->check(CLI::ExistingFile);
  ev->add_option("--alignment", o.alignment, "none, se3 or sim3")->check(CLI::IsMember({"none", "se3", "sim3"}));

  auto* gd = app.add_subcommand("gdop", "GDOP along the scenario trajectory, ranked across layouts");
  gd->add_option("--layouts", o.layouts, "Comma-separated layout names, or 'all'")->delimiter(',');

  auto* sw = app.add_subcommand("sweep", "Run a grid of scenarios and aggregate the reports");
  sw->add_option("--axis", o.axis, "configurations, frequencies or seeds")
      ->required()
      ->check(CLI::IsMember({"configurations", "frequencies", "seeds"}));
  sw->add_option("--values", o.values, "Comma-separated axis values (defaults per axis)")->delimiter(',');
  sw->add_option("--seeds", o.seeds, "Seeds per cell, counting up from --seed");
  sw->add_option("--jobs", o.jobs, "Cells run concurrently");
  sw->add_flag("--baseline", o.baseline, "Also run no-ToA baselines and report improvements");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::string command = "toa-slam";
  for (auto* sub : app.get_subcommands()) command = sub->get_name();
  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (run->parsed()) return cmd_run(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (gd->parsed()) return cmd_gdop(o, out);
    if (sw->parsed()) return cmd_sweep(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    write_error_record(o.out, command, std::string(to_string(e.code())), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    write_error_record(o.out, command, "Internal", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace toa_slam
