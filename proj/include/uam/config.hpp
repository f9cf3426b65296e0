#pragma once

#include "uam/flight_control.hpp"
#include "uam/interaction_control.hpp"
#include "uam/mission.hpp"
#include "uam/sim_world.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace uam {

using Json = nlohmann::ordered_json;

/// Bad config content: unknown keys, wrong types, failed validation.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SimSettings {
  double dt = 1e-3;
  double control_rate_hz = 250.0;
  double telemetry_rate_hz = 100.0;
  double duration = 120.0;  // s simulated
  double ground_height = 0.0;
  std::uint64_t seed = 1;
};

struct BridgeSettings {
  int port = 8765;
  double rate_hz = 20.0;
  int queue_depth = 64;
  double command_timeout = 2.0;  // s an HTTP command waits for its tick
};

struct ExperimentConfig {
  SimSettings sim;
  WorldParams world;  // world.seed is overwritten by sim.seed
  FlightGains flight;
  InteractionConfig interaction;
  MissionParams mission;  // mission.approach_axis follows interaction.approach_axis
  BridgeSettings bridge;

  static ExperimentConfig defaults();

  /// Throws ConfigError naming the offending section.
  void validate() const;

  int control_every() const;    // steps per control tick
  int telemetry_every() const;  // steps per telemetry record
  int bridge_every() const;     // steps per bridge frame
  WorldParams world_params() const;
  MissionParams mission_params() const;
};

inline constexpr const char* kConfigSchema = "uam.config";
inline constexpr int kConfigVersion = 1;

Json config_to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config(const std::string& path);

}  // namespace uam
