#include "uam/telemetry.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace uam {

namespace {

template <typename Derived>
Json arr(const Eigen::MatrixBase<Derived>& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) a.push_back(m(i));
  return a;
}

}  // namespace

Json event_to_json(const MissionEvent& e) {
  Json j;
  j["t"] = e.t;
  j["kind"] = e.kind;
  if (!e.detail.empty()) j["detail"] = e.detail;
  if (!e.note.empty()) j["note"] = e.note;
  if (e.value) j["value"] = *e.value;
  return j;
}

Json record_to_json(const TelemetryRecord& r) {
  Json j;
  j["t"] = r.t;
  j["phase"] = to_string(r.phase);
  j["mode"] = to_string(r.mode);
  const Quat& o = r.base.orientation;
  j["base_pos"] = arr(r.base.position);
  j["base_quat"] = Json::array({o.w(), o.x(), o.y(), o.z()});
  j["base_twist"] = arr(r.base_twist);
  j["base_ref"] = arr(r.base_ref);
  j["base_vel_cmd"] = arr(r.base_vel_cmd);
  j["q"] = arr(r.q);
  j["q_ref"] = arr(r.q_ref);
  j["ee"] = arr(r.ee);
  j["ee_ref"] = arr(r.ee_ref);
  j["f_ext"] = arr(r.f_ext);
  j["f_d"] = r.f_d;
  j["f_true"] = r.f_true;
  j["battery_x"] = r.battery_x;
  j["battery_ref"] = r.battery_ref;
  j["thrusts"] = r.thrusts;
  j["tilts"] = r.tilts;
  j["saturated"] = r.saturated;
  j["contact"] = r.in_contact;
  j["vacuum"] = r.vacuum;
  j["echometer"] = r.echometer ? Json(*r.echometer) : Json(nullptr);
  Json ev = Json::array();
  for (const auto& e : r.events) ev.push_back(event_to_json(e));
  j["events"] = std::move(ev);
  return j;
}

Json telemetry_header(const ExperimentConfig& cfg, double rate_hz) {
  Json h;
  h["schema"] = kTelemetrySchema;
  h["version"] = kTelemetryVersion;
  h["seed"] = cfg.sim.seed;
  h["dt"] = cfg.sim.dt;
  h["rate_hz"] = rate_hz;
  h["config"] = config_to_json(cfg);
  return h;
}

void TelemetryWriter::header(const Json& h) { out_ << h.dump() << '\n'; }

void TelemetryWriter::write(const TelemetryRecord& r) {
  out_ << record_to_json(r).dump() << '\n';
  ++records_;
}

void TelemetryWriter::flush() { out_.flush(); }

namespace {

struct Comparer {
  const ReplayOptions& opt;
  ReplayReport& rep;
  std::size_t line = 0;
  double t = 0.0;

  void add(const std::string& field, const Json& a, const Json& b) {
    rep.equal = false;
    ++rep.total_diffs;
    if (rep.diffs.size() < opt.max_diffs) {
      rep.diffs.push_back({line, t, field, a.dump(), b.dump()});
    }
  }

  double tolerance(const std::string& top) const {
    const auto it = opt.tolerances.find(top);
    return it == opt.tolerances.end() ? 0.0 : it->second;
  }

  void compare(const std::string& path, const std::string& top, const Json& a, const Json& b) {
    if (a.is_number() && b.is_number()) {
      const double x = a.get<double>();
      const double y = b.get<double>();
      const double tol = tolerance(top);
      const bool same = tol == 0.0 ? x == y : std::abs(x - y) <= tol;
      if (!same) add(path, a, b);
      return;
    }
    if (a.type() != b.type()) {
      add(path, a, b);
      return;
    }
    if (a.is_object()) {
      for (const auto& [k, v] : a.items()) {
        const std::string p = path.empty() ? k : path + "." + k;
        if (!b.contains(k)) {
          add(p, v, Json("<missing>"));
        } else {
          compare(p, top.empty() ? k : top, v, b.at(k));
        }
      }
      for (const auto& [k, v] : b.items()) {
        if (!a.contains(k)) add(path.empty() ? k : path + "." + k, Json("<missing>"), v);
      }
      return;
    }
    if (a.is_array()) {
      if (a.size() != b.size()) {
        add(path + ".size", Json(a.size()), Json(b.size()));
        return;
      }
      for (std::size_t i = 0; i < a.size(); ++i) compare(path + "[" + std::to_string(i) + "]", top, a[i], b[i]);
      return;
    }
    if (a != b) add(path, a, b);
  }
};

Json parse_line(const std::string& s, std::size_t line, const char* which) {
  try {
    return Json::parse(s);
  } catch (const Json::parse_error&) {
    throw std::runtime_error(std::string(which) + ": line " + std::to_string(line) + " is not valid JSON");
  }
}

}  // namespace

ReplayReport replay_check(std::istream& a, std::istream& b, const ReplayOptions& opt) {
  ReplayReport rep;
  std::string la;
  std::string lb;
  if (!std::getline(a, la)) throw std::runtime_error("A: empty telemetry file");
  if (!std::getline(b, lb)) throw std::runtime_error("B: empty telemetry file");
  const Json ha = parse_line(la, 1, "A");
  const Json hb = parse_line(lb, 1, "B");
  for (const Json* h : {&ha, &hb}) {
    if (!h->is_object() || h->value("schema", "") != std::string(kTelemetrySchema)) {
      throw std::runtime_error("telemetry header has the wrong schema name");
    }
  }
  if (ha.value("version", -1) != hb.value("version", -2)) throw std::runtime_error("telemetry schema versions differ");
  if (ha.value("version", -1) != kTelemetryVersion) throw std::runtime_error("unsupported telemetry schema version");

  Comparer cmp{opt, rep};
  cmp.line = 1;
  cmp.compare("header", "", ha, hb);
  rep.lines_a = rep.lines_b = 1;

  std::size_t line = 1;
  while (true) {
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool gb = static_cast<bool>(std::getline(b, lb));
    if (!ga && !gb) break;
    ++line;
    if (ga) ++rep.lines_a;
    if (gb) ++rep.lines_b;
    if (ga != gb) {
      cmp.line = line;
      cmp.add("<line count>", Json(rep.lines_a), Json(rep.lines_b));
      // drain the longer one for the line totals
      while (ga && std::getline(a, la)) ++rep.lines_a;
      while (gb && std::getline(b, lb)) ++rep.lines_b;
      break;
    }
    const Json ra = parse_line(la, line, "A");
    const Json rb = parse_line(lb, line, "B");
    cmp.line = line;
    cmp.t = ra.value("t", 0.0);
    cmp.compare("", "", ra, rb);
  }
  return rep;
}

ReplayReport replay_check_files(const std::string& a, const std::string& b, const ReplayOptions& opt) {
  std::ifstream fa(a);
  if (!fa) throw std::runtime_error("cannot open " + a);
  std::ifstream fb(b);
  if (!fb) throw std::runtime_error("cannot open " + b);
  return replay_check(fa, fb, opt);
}

}  // namespace uam
