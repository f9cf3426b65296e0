#pragma once

#include "uam/config.hpp"
#include "uam/flight_control.hpp"
#include "uam/mission.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uam {

inline constexpr const char* kTelemetrySchema = "uam.telemetry";
inline constexpr int kTelemetryVersion = 1;

struct TelemetryRecord {
  double t = 0.0;
  MissionPhase phase = MissionPhase::Home;
  ControlMode mode = ControlMode::ImpedanceOnly;
  Pose base;
  SpatialTwist base_twist = SpatialTwist::Zero();
  Vec3 base_ref = Vec3::Zero();
  SpatialTwist base_vel_cmd = SpatialTwist::Zero();  // operator velocity forwarded to the flight loop
  Vec5 q = Vec5::Zero();
  Vec5 q_ref = Vec5::Zero();
  Vec3 ee = Vec3::Zero();      // measured probe tip in F_base
  Vec3 ee_ref = Vec3::Zero();  // x_d position in F_base
  Vec6 f_ext = Vec6::Zero();   // sensor reading in F_base, probe on surface
  double f_d = 0.0;            // desired push along the approach axis
  double f_true = 0.0;         // simulated normal force, for evaluation only
  double battery_x = 0.0;
  double battery_ref = 0.0;
  std::array<double, kRotors> thrusts{};
  std::array<double, kTiltArms> tilts{};
  bool saturated = false;
  bool in_contact = false;
  bool vacuum = false;
  std::optional<double> echometer;
  std::vector<MissionEvent> events;
};

Json record_to_json(const TelemetryRecord& r);
Json event_to_json(const MissionEvent& e);

Json telemetry_header(const ExperimentConfig& cfg, double rate_hz);

/// JSON Lines: one header object, then one record per line.
class TelemetryWriter {
 public:
  explicit TelemetryWriter(std::ostream& out) : out_(out) {}
  void header(const Json& h);
  void write(const TelemetryRecord& r);
  void flush();
  std::size_t records() const { return records_; }

 private:
  std::ostream& out_;
  std::size_t records_ = 0;
};

struct FieldDiff {
  std::size_t line = 0;  // 1-based, header is line 1
  double t = 0.0;
  std::string field;
  std::string a;
  std::string b;
};

struct ReplayReport {
  bool equal = true;
  std::vector<FieldDiff> diffs;  // capped at max_diffs
  std::size_t total_diffs = 0;
  std::size_t lines_a = 0;
  std::size_t lines_b = 0;
};

struct ReplayOptions {
  std::map<std::string, double> tolerances;  // absolute, by field name; default exact
  std::size_t max_diffs = 20;
};

/// Throws std::runtime_error on unreadable input or schema mismatch.
ReplayReport replay_check(std::istream& a, std::istream& b, const ReplayOptions& opt = {});
ReplayReport replay_check_files(const std::string& a, const std::string& b, const ReplayOptions& opt = {});

}  // namespace uam
