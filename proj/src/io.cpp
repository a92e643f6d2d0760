#include "toa_slam/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "toa_slam/errors.hpp"

namespace toa_slam {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::IoError, where + ": invalid number '" + tok + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------- TUM

Trajectory parse_tum(std::istream& in, const std::string& source) {
  Trajectory out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    const std::string where = source + ":" + std::to_string(lineno);
    if (tok.size() != 8) throw Error(ErrorCode::IoError, where + ": expected 8 fields, got " + std::to_string(tok.size()));
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parse_double(tok[i], where);
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-6) throw Error(ErrorCode::IoError, where + ": zero quaternion");
    if (!out.empty() && v[0] <= out.back().timestamp)
      throw Error(ErrorCode::NonMonotonicTimestamps, where + ": timestamps must increase");
    out.push_back({v[0], RigidTransform(q, Vec3(v[1], v[2], v[3]))});
  }
  return out;
}

Trajectory read_tum(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  return parse_tum(in, path.string());
}

void write_tum(std::ostream& out, const Trajectory& trajectory) {
  for (const auto& p : trajectory) {
    const auto& t = p.pose.translation();
    const auto& q = p.pose.rotation();
    out << fmt("%.6f", p.timestamp);
    for (double v : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) out << ' ' << fmt("%.12f", v);
    out << '\n';
  }
}

void write_tum(const fs::path& path, const Trajectory& trajectory) {
  std::ostringstream ss;
  write_tum(ss, trajectory);
  write_text_file(path, ss.str());
}

Trajectory odometry_to_trajectory(const std::vector<OdometryMeasurement>& odometry) {
  Trajectory out;
  if (odometry.empty()) return out;
  out.push_back({odometry.front().t_from, RigidTransform::identity()});
  for (const auto& m : odometry) out.push_back({m.t_to, out.back().pose * m.relative});
  return out;
}

std::vector<OdometryMeasurement> trajectory_to_odometry(const Trajectory& trajectory) {
  std::vector<OdometryMeasurement> out;
  for (std::size_t i = 0; i + 1 < trajectory.size(); ++i)
    out.push_back({trajectory[i].timestamp, trajectory[i + 1].timestamp,
                   trajectory[i].pose.inverse() * trajectory[i + 1].pose});
  return out;
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::vector<std::string>> read_csv(std::istream& in, const std::string& source,
                                               const std::string& header, std::size_t fields) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  int lineno = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      std::string compact;
      for (char c : line)
        if (c != ' ') compact += c;
      if (compact != header)
        throw Error(ErrorCode::IoError, source + ":" + std::to_string(lineno) + ": expected header '" + header + "'");
      seen_header = true;
      continue;
    }
    std::vector<std::string> tok;
    std::istringstream ss(line);
    for (std::string t; std::getline(ss, t, ',');) tok.push_back(trim(t));
    if (tok.size() != fields)
      throw Error(ErrorCode::IoError, source + ":" + std::to_string(lineno) + ": expected " +
                                          std::to_string(fields) + " fields");
    tok.push_back(source + ":" + std::to_string(lineno));
    rows.push_back(std::move(tok));
  }
  if (!seen_header) throw Error(ErrorCode::IoError, source + ": missing header '" + header + "'");
  return rows;
}

}  // namespace

std::vector<ToaMeasurement> parse_toa_csv(std::istream& in, const std::string& source) {
  std::vector<ToaMeasurement> out;
  for (const auto& row : read_csv(in, source, "timestamp,station_id,range_m", 3)) {
    const std::string& where = row[3];
    ToaMeasurement m;
    m.timestamp = parse_double(row[0], where);
    const double id = parse_double(row[1], where);
    if (id != static_cast<int>(id)) throw Error(ErrorCode::IoError, where + ": station_id must be an integer");
    m.station_id = static_cast<int>(id);
    m.range = parse_double(row[2], where);
    if (!(m.range > 0.0)) throw Error(ErrorCode::IoError, where + ": range must be positive");
    if (!out.empty() && m.timestamp < out.back().timestamp)
      throw Error(ErrorCode::NonMonotonicTimestamps, where + ": timestamps must not decrease");
    out.push_back(m);
  }
  return out;
}

std::vector<ToaMeasurement> read_toa_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  return parse_toa_csv(in, path.string());
}

void write_toa_csv(const fs::path& path, const std::vector<ToaMeasurement>& toa) {
  std::ostringstream ss;
  ss << "timestamp,station_id,range_m\n";
  for (const auto& m : toa)
    ss << fmt("%.6f", m.timestamp) << ',' << m.station_id << ',' << fmt("%.9f", m.range) << '\n';
  write_text_file(path, ss.str());
}

std::vector<LoopClosureMeasurement> read_loop_closure_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::vector<LoopClosureMeasurement> out;
  for (const auto& row : read_csv(in, path.string(), "t_from,t_to,tx,ty,tz,qx,qy,qz,qw", 9)) {
    double v[9];
    for (int i = 0; i < 9; ++i) v[i] = parse_double(row[i], row[9]);
    out.push_back({v[0], v[1], RigidTransform(Eigen::Quaterniond(v[8], v[5], v[6], v[7]),
                                              Vec3(v[2], v[3], v[4]))});
  }
  return out;
}

void write_loop_closure_csv(const fs::path& path,
                            const std::vector<LoopClosureMeasurement>& closures) {
  std::ostringstream ss;
  ss << "t_from,t_to,tx,ty,tz,qx,qy,qz,qw\n";
  for (const auto& c : closures) {
    const auto& t = c.relative.translation();
    const auto& q = c.relative.rotation();
    ss << fmt("%.6f", c.t_from) << ',' << fmt("%.6f", c.t_to);
    for (double v : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) ss << ',' << fmt("%.12f", v);
    ss << '\n';
  }
  write_text_file(path, ss.str());
}

// ---------------------------------------------------------------- config

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct ConfigReader {
  const std::string& text;
  const std::string& source;

  int line_of(std::string_view key) const {
    const std::string needle = "\"" + std::string(key) + "\"";
    const auto pos = text.find(needle);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
  }

  [[noreturn]] void fail(std::string_view key, const std::string& msg) const {
    const int line = line_of(key);
    std::string where = source;
    if (line > 0) where += ":" + std::to_string(line);
    throw Error(ErrorCode::ConfigError, where + ": " + msg);
  }

  void check_keys(const json& obj, std::string_view context, std::initializer_list<std::string_view> allowed) const {
    if (!obj.is_object()) fail(context, "'" + std::string(context) + "' must be an object");
    for (const auto& [k, v] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        fail(k, "unknown key '" + k + "' in " + std::string(context));
    }
  }

  double number(const json& obj, std::string_view key) const {
    const auto& v = obj.at(std::string(key));
    if (!v.is_number()) fail(key, "'" + std::string(key) + "' must be a number");
    return v.get<double>();
  }

  bool boolean(const json& obj, std::string_view key) const {
    const auto& v = obj.at(std::string(key));
    if (!v.is_boolean()) fail(key, "'" + std::string(key) + "' must be true or false");
    return v.get<bool>();
  }

  std::string string(const json& obj, std::string_view key) const {
    const auto& v = obj.at(std::string(key));
    if (!v.is_string()) fail(key, "'" + std::string(key) + "' must be a string");
    return v.get<std::string>();
  }

  Vec3 vec3(const json& obj, std::string_view key) const {
    const auto& v = obj.at(std::string(key));
    if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }))
      fail(key, "'" + std::string(key) + "' must be an array of three numbers");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }

  Box box(const json& obj) const {
    check_keys(obj, "box", {"center", "size"});
    Box b;
    if (obj.contains("center")) b.center = vec3(obj, "center");
    if (obj.contains("size")) b.size = vec3(obj, "size");
    if ((b.size.array() <= 0.0).any()) fail("size", "box size must be positive");
    return b;
  }
};

std::string frequency_name(FrequencyPreset f) {
  switch (f) {
    case FrequencyPreset::Ghz28: return "28ghz";
    case FrequencyPreset::Ghz78: return "78ghz";
    case FrequencyPreset::Custom: return "custom";
  }
  return "custom";
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

ScenarioConfig parse_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto end = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(end), '\n'));
    throw Error(ErrorCode::ConfigError, source + ":" + std::to_string(line) + ": parse error: " + e.what());
  }
  const ConfigReader r{text, source};
  r.check_keys(root, "config",
               {"name", "seed", "trajectory", "stations", "frequency", "toa_rate_hz", "toa_enabled",
                "odometry", "mode", "loop_closure", "perturbation"});

  ScenarioConfig c;
  if (root.contains("name")) c.name = r.string(root, "name");
  if (root.contains("seed")) {
    const auto& s = root["seed"];
    if (!s.is_number_unsigned()) r.fail("seed", "'seed' must be a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }

  if (root.contains("trajectory")) {
    const auto& t = root["trajectory"];
    r.check_keys(t, "trajectory", {"type", "duration_s", "rate_hz", "box", "waypoints", "path"});
    const std::string type = t.contains("type") ? r.string(t, "type") : "lissajous";
    if (t.contains("rate_hz")) c.odometry_rate_hz = r.number(t, "rate_hz");
    if (t.contains("box")) c.box = r.box(t["box"]);
    if (t.contains("duration_s")) c.duration_s = r.number(t, "duration_s");
    if (type == "lissajous") {
      c.trajectory_kind = ScenarioConfig::TrajectoryKind::Lissajous;
    } else if (type == "waypoints") {
      c.trajectory_kind = ScenarioConfig::TrajectoryKind::Waypoints;
      if (!t.contains("waypoints") || !t["waypoints"].is_array())
        r.fail("waypoints", "'waypoints' must be an array");
      for (const auto& w : t["waypoints"]) {
        r.check_keys(w, "waypoints[]", {"t", "position", "yaw_deg"});
        if (!w.contains("t") || !w.contains("position")) r.fail("waypoints", "each waypoint needs 't' and 'position'");
        Waypoint wp;
        wp.time = r.number(w, "t");
        wp.position = r.vec3(w, "position");
        if (w.contains("yaw_deg")) wp.yaw = r.number(w, "yaw_deg") * kDeg;
        c.waypoints.push_back(wp);
      }
      if (!c.waypoints.empty()) c.duration_s = c.waypoints.back().time - c.waypoints.front().time;
    } else if (type == "tum") {
      c.trajectory_kind = ScenarioConfig::TrajectoryKind::TumFile;
      if (!t.contains("path")) r.fail("path", "tum trajectory needs 'path'");
      c.tum_path = r.string(t, "path");
    } else {
      r.fail("type", "trajectory type must be lissajous, waypoints or tum");
    }
  }

  if (root.contains("stations")) {
    const auto& arr = root["stations"];
    if (!arr.is_array()) r.fail("stations", "'stations' must be an array");
    std::set<int> ids;
    int next_id = 1;
    for (const auto& s : arr) {
      r.check_keys(s, "stations[]", {"id", "position", "sigma_m", "bias_m", "intervals"});
      StationConfig sc;
      sc.id = s.contains("id") ? static_cast<int>(r.number(s, "id")) : next_id;
      next_id = sc.id + 1;
      if (!ids.insert(sc.id).second) r.fail("id", "duplicate station id " + std::to_string(sc.id));
      if (!s.contains("position")) r.fail("stations", "each station needs 'position'");
      sc.position = r.vec3(s, "position");
      if (s.contains("sigma_m")) {
        sc.sigma = r.number(s, "sigma_m");
        if (*sc.sigma < 0.0) r.fail("sigma_m", "'sigma_m' must be non-negative");
      }
      if (s.contains("bias_m")) sc.bias = r.number(s, "bias_m");
      if (s.contains("intervals")) {
        const auto& iv = s["intervals"];
        if (!iv.is_array()) r.fail("intervals", "'intervals' must be an array of [start, end] pairs");
        std::vector<Interval> list;
        for (const auto& p : iv) {
          if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            r.fail("intervals", "each interval must be [start, end]");
          Interval i{p[0].get<double>(), p[1].get<double>()};
          if (!(i.start < i.end)) r.fail("intervals", "interval start must precede end");
          if (!list.empty() && i.start < list.back().end)
            r.fail("intervals", "intervals must be sorted and non-overlapping");
          list.push_back(i);
        }
        sc.intervals = list;
      }
      c.stations.push_back(sc);
    }
  }

  if (root.contains("frequency")) {
    const std::string f = r.string(root, "frequency");
    if (f == "28ghz") c.frequency = FrequencyPreset::Ghz28;
    else if (f == "78ghz") c.frequency = FrequencyPreset::Ghz78;
    else if (f == "custom") c.frequency = FrequencyPreset::Custom;
    else r.fail("frequency", "frequency must be 28ghz, 78ghz or custom");
  }
  if (root.contains("toa_rate_hz")) c.toa_rate_hz = r.number(root, "toa_rate_hz");
  if (root.contains("toa_enabled")) c.toa_enabled = r.boolean(root, "toa_enabled");

  if (root.contains("odometry")) {
    const auto& o = root["odometry"];
    r.check_keys(o, "odometry", {"sigma_translation_m", "sigma_rotation_rad", "scale_drift", "velocity_bias_walk"});
    if (o.contains("sigma_translation_m")) c.odometry.sigma_translation = r.number(o, "sigma_translation_m");
    if (o.contains("sigma_rotation_rad")) c.odometry.sigma_rotation = r.number(o, "sigma_rotation_rad");
    if (o.contains("scale_drift")) c.odometry.scale_drift = r.number(o, "scale_drift");
    if (o.contains("velocity_bias_walk")) c.odometry.velocity_bias_walk = r.number(o, "velocity_bias_walk");
    if (c.odometry.sigma_translation < 0 || c.odometry.sigma_rotation < 0 || c.odometry.velocity_bias_walk < 0)
      r.fail("odometry", "odometry sigmas must be non-negative");
    if (!(c.odometry.scale_drift > 0)) r.fail("scale_drift", "'scale_drift' must be positive");
  }

  if (root.contains("mode")) {
    const auto& m = root["mode"];
    r.check_keys(m, "mode", {"sensor", "stations", "loop_closure"});
    if (m.contains("sensor")) {
      const std::string s = r.string(m, "sensor");
      if (s == "range_scaled") c.mode.sensor = SensorClass::RangeScaled;
      else if (s == "monocular") c.mode.sensor = SensorClass::Monocular;
      else r.fail("sensor", "mode.sensor must be range_scaled or monocular");
    }
    if (m.contains("stations")) {
      const std::string s = r.string(m, "stations");
      if (s == "known") c.mode.stations = StationKnowledge::Known;
      else if (s == "unknown") c.mode.stations = StationKnowledge::Unknown;
      else r.fail("stations", "mode.stations must be known or unknown");
    }
    if (m.contains("loop_closure")) c.mode.loop_closure = r.boolean(m, "loop_closure");
  }

  if (root.contains("loop_closure")) {
    const auto& l = root["loop_closure"];
    r.check_keys(l, "loop_closure", {"keyframe_stride", "window", "radius_m", "sigma_translation_m", "sigma_rotation_deg"});
    if (l.contains("keyframe_stride")) c.loop_closure.keyframe_stride = static_cast<int>(r.number(l, "keyframe_stride"));
    if (l.contains("window")) c.loop_closure.window = static_cast<int>(r.number(l, "window"));
    if (l.contains("radius_m")) c.loop_closure.radius = r.number(l, "radius_m");
    if (l.contains("sigma_translation_m")) c.loop_closure.sigma_translation = r.number(l, "sigma_translation_m");
    if (l.contains("sigma_rotation_deg")) c.loop_closure.sigma_rotation = r.number(l, "sigma_rotation_deg") * kDeg;
  }

  if (root.contains("perturbation")) {
    const auto& p = root["perturbation"];
    r.check_keys(p, "perturbation", {"translation_m", "rotation_deg"});
    if (p.contains("translation_m")) c.perturbation_translation_m = r.number(p, "translation_m");
    if (p.contains("rotation_deg")) c.perturbation_rotation_deg = r.number(p, "rotation_deg");
  }

  if (!(c.toa_rate_hz > 0)) r.fail("toa_rate_hz", "'toa_rate_hz' must be positive");
  if (!(c.odometry_rate_hz > 0)) r.fail("rate_hz", "'rate_hz' must be positive");
  if (!(c.duration_s > 0)) r.fail("duration_s", "duration must be positive");
  return c;
}

ScenarioConfig load_config(const fs::path& path) {
  ScenarioConfig c = parse_config(read_text_file(path), path.string());
  if (c.trajectory_kind == ScenarioConfig::TrajectoryKind::TumFile && fs::path(c.tum_path).is_relative())
    c.tum_path = (path.parent_path() / c.tum_path).string();
  return c;
}

std::string config_to_json(const ScenarioConfig& c) {
  json root;
  root["name"] = c.name;
  root["seed"] = c.seed;
  json t;
  switch (c.trajectory_kind) {
    case ScenarioConfig::TrajectoryKind::Lissajous:
      t["type"] = "lissajous";
      t["duration_s"] = c.duration_s;
      break;
    case ScenarioConfig::TrajectoryKind::Waypoints: {
      t["type"] = "waypoints";
      json arr = json::array();
      for (const auto& w : c.waypoints) {
        json e{{"t", w.time}, {"position", vec_json(w.position)}};
        if (w.yaw) e["yaw_deg"] = *w.yaw / kDeg;
        arr.push_back(e);
      }
      t["waypoints"] = arr;
      break;
    }
    case ScenarioConfig::TrajectoryKind::TumFile:
      t["type"] = "tum";
      t["path"] = c.tum_path;
      break;
  }
  t["rate_hz"] = c.odometry_rate_hz;
  t["box"] = json{{"center", vec_json(c.box.center)}, {"size", vec_json(c.box.size)}};
  root["trajectory"] = t;

  json st = json::array();
  for (const auto& s : c.stations) {
    json e{{"id", s.id}, {"position", vec_json(s.position)}};
    if (s.sigma) e["sigma_m"] = *s.sigma;
    if (s.bias) e["bias_m"] = *s.bias;
    if (s.intervals) {
      json iv = json::array();
      for (const auto& i : *s.intervals) iv.push_back(json::array({i.start, i.end}));
      e["intervals"] = iv;
    }
    st.push_back(e);
  }
  root["stations"] = st;
  root["frequency"] = frequency_name(c.frequency);
  root["toa_rate_hz"] = c.toa_rate_hz;
  root["toa_enabled"] = c.toa_enabled;
  root["odometry"] = json{{"sigma_translation_m", c.odometry.sigma_translation},
                          {"sigma_rotation_rad", c.odometry.sigma_rotation},
                          {"scale_drift", c.odometry.scale_drift},
                          {"velocity_bias_walk", c.odometry.velocity_bias_walk}};
  root["mode"] = json{{"sensor", std::string(to_string(c.mode.sensor))},
                      {"stations", std::string(to_string(c.mode.stations))},
                      {"loop_closure", c.mode.loop_closure}};
  root["loop_closure"] = json{{"keyframe_stride", c.loop_closure.keyframe_stride},
                              {"window", c.loop_closure.window},
                              {"radius_m", c.loop_closure.radius},
                              {"sigma_translation_m", c.loop_closure.sigma_translation},
                              {"sigma_rotation_deg", c.loop_closure.sigma_rotation / kDeg}};
  root["perturbation"] = json{{"translation_m", c.perturbation_translation_m},
                              {"rotation_deg", c.perturbation_rotation_deg}};
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------- presets

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"aerolab_28ghz", "aerolab_78ghz", "sequential_3bs",
                                              "uwbvo_mh",      "tetrahedral",   "diamond",
                                              "z_shape",       "asymmetric",    "clustered"};
  return names;
}

namespace {

std::vector<StationConfig> stations_from_layout(const std::string& layout) {
  std::vector<StationConfig> out;
  for (const auto& bs : station_layout(layout)) out.push_back({bs.id, bs.position, {}, {}, {}});
  return out;
}

}  // namespace

ScenarioConfig preset_config(const std::string& name) {
  ScenarioConfig c;
  c.name = name;
  if (name == "aerolab_28ghz" || name == "aerolab_78ghz") {
    c.stations = stations_from_layout("aerolab");
    c.frequency = name == "aerolab_28ghz" ? FrequencyPreset::Ghz28 : FrequencyPreset::Ghz78;
    return c;
  }
  if (name == "sequential_3bs") {
    auto all = stations_from_layout("aerolab");
    const auto schedule = sequential_schedule();
    for (auto& s : all) {
      auto it = schedule.find(s.id);
      if (it == schedule.end()) continue;
      s.intervals = it->second;
      c.stations.push_back(s);
    }
    c.mode = {SensorClass::Monocular, StationKnowledge::Unknown, false};
    c.odometry.scale_drift = 0.8;
    return c;
  }
  if (name == "uwbvo_mh") {
    c.stations = {{1, Vec3(10, 10, 10), 0.05, 0.0, {}}};
    c.frequency = FrequencyPreset::Custom;
    c.toa_rate_hz = 5.0;
    c.mode.sensor = SensorClass::Monocular;
    c.odometry.scale_drift = 0.8;
    return c;
  }
  const auto& layouts = gdop_layout_names();
  if (std::find(layouts.begin(), layouts.end(), name) != layouts.end()) {
    c.stations = stations_from_layout(name);
    // Flight volume below the 3 m top station of these room layouts.
    c.box.center = Vec3(0.0, 0.0, 1.5);
    c.box.size = Vec3(5.0, 5.0, 3.0);
    return c;
  }
  throw Error(ErrorCode::ConfigError, "unknown preset '" + name + "'");
}

ScenarioConfig resolve_config(const std::string& path_or_preset) {
  if (fs::exists(path_or_preset)) return load_config(path_or_preset);
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), path_or_preset) != names.end())
    return preset_config(path_or_preset);
  // anything that looks like a path reports the missing file
  if (path_or_preset.find('/') != std::string::npos || fs::path(path_or_preset).has_extension())
    return load_config(path_or_preset);
  throw Error(ErrorCode::ConfigError, "'" + path_or_preset + "' is neither a readable file nor a preset name");
}

}  // namespace toa_slam
