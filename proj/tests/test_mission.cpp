#include <doctest.h>

#include "uam/mission.hpp"

#include <map>

using namespace uam;

namespace {

const ArmKinematics kKin = ArmKinematics::default_arm();
constexpr double kDt = 0.004;

OperatorCommand trigger(std::optional<MissionPhase> target = std::nullopt) {
  OperatorCommand c;
  c.kind = CommandKind::TriggerNextPhase;
  c.target = target;
  return c;
}

OperatorCommand simple(CommandKind k) {
  OperatorCommand c;
  c.kind = k;
  return c;
}

struct Driver {
  Mission m{MissionParams{}, kKin};
  double t = 0.0;

  const MissionOutput& tick(double fx, bool vacuum = false) {
    MissionFeedback fb;
    t += kDt;
    fb.t = t;
    fb.f_ext(0) = fx;
    fb.vacuum_established = vacuum;
    fb.ee_reference = m.phase() == MissionPhase::Home ? m.home_pose() : last.reference.x_d;
    last = m.tick(fb, kDt);
    return last;
  }
  void run(double seconds, double fx, bool vacuum = false) {
    const int n = static_cast<int>(std::lround(seconds / kDt));
    for (int k = 0; k < n; ++k) tick(fx, vacuum);
  }
  bool has_event(const std::string& kind) {
    for (const auto& e : m.take_events()) {
      if (e.kind == kind) return true;
    }
    return false;
  }
  MissionOutput last;
};

// Drives a fresh mission into the requested phase.
void reach(Driver& d, MissionPhase p) {
  if (p == MissionPhase::Home) return;
  REQUIRE(d.m.handle_command(trigger()).accepted);
  if (p == MissionPhase::Retract) {
    REQUIRE(d.m.handle_command(simple(CommandKind::Abort)).accepted);
    return;
  }
  d.tick(0.0);  // nulls the bias
  if (p == MissionPhase::Approach) return;
  d.run(0.4, 1.0);
  REQUIRE(d.m.handle_command(trigger()).accepted);
  REQUIRE(d.m.phase() == MissionPhase::Measure);
}

}  // namespace

TEST_CASE("phase and command names round trip") {
  for (auto p : {MissionPhase::Home, MissionPhase::Approach, MissionPhase::Measure, MissionPhase::Retract}) {
    CHECK(phase_from_string(to_string(p)) == p);
  }
  for (auto k : {CommandKind::VelocitySetpoint, CommandKind::TriggerNextPhase, CommandKind::Abort, CommandKind::Land,
                 CommandKind::SetForce}) {
    CHECK(command_kind_from_string(to_string(k)) == k);
  }
  CHECK_FALSE(phase_from_string("CONTACT"));
  CHECK_FALSE(command_kind_from_string("jump"));
}

TEST_CASE("phase graph: every trigger from every phase") {
  using P = MissionPhase;
  const std::vector<std::optional<P>> targets = {std::nullopt, P::Home, P::Approach, P::Measure, P::Retract};
  // expected reason per (phase, target); empty = accepted
  const std::map<P, std::vector<std::string>> expected = {
      {P::Home, {"", "illegal transition", "", "illegal transition", "illegal transition"}},
      {P::Approach,
       {"not in contact", "illegal transition", "illegal transition", "not in contact", "illegal transition"}},
      {P::Measure, {"", "illegal transition", "illegal transition", "illegal transition", ""}},
      {P::Retract,
       {"retract in progress", "retract in progress", "retract in progress", "retract in progress",
        "retract in progress"}},
  };
  const std::map<P, P> next = {{P::Home, P::Approach}, {P::Approach, P::Measure}, {P::Measure, P::Retract}};
  for (const auto& [phase, reasons] : expected) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      Driver d;
      reach(d, phase);
      const CommandResult r = d.m.handle_command(trigger(targets[i]));
      CAPTURE(to_string(phase));
      CAPTURE(i);
      CHECK(r.reason == reasons[i]);
      CHECK(r.accepted == reasons[i].empty());
      CHECK(d.m.phase() == (r.accepted ? next.at(phase) : phase));
    }
  }
}

TEST_CASE("approach with contact allows MEASURE") {
  Driver d;
  reach(d, MissionPhase::Approach);
  d.run(0.4, 1.0);
  const CommandResult r = d.m.handle_command(trigger(MissionPhase::Measure));
  CHECK(r.accepted);
  CHECK(r.phase == MissionPhase::Measure);
}

TEST_CASE("abort, land and set_force rules") {
  Driver d;
  CHECK(d.m.handle_command(simple(CommandKind::Abort)).reason == "nothing to abort");
  OperatorCommand f = simple(CommandKind::SetForce);
  f.force = 12.0;
  CHECK(d.m.handle_command(f).reason == "force out of range");
  f.force = -1.0;
  CHECK(d.m.handle_command(f).reason == "force out of range");
  f.force = 3.0;
  CHECK(d.m.handle_command(f).accepted);

  reach(d, MissionPhase::Approach);
  CHECK(d.m.handle_command(simple(CommandKind::Land)).reason == "land only from HOME");
  CHECK(d.m.handle_command(simple(CommandKind::Abort)).accepted);
  CHECK(d.m.phase() == MissionPhase::Retract);
  CHECK(d.m.handle_command(simple(CommandKind::Abort)).reason == "already retracting");

  Driver h;
  CHECK(h.m.handle_command(simple(CommandKind::Land)).accepted);
  CHECK(h.m.handle_command(trigger()).reason == "landing");
  const MissionOutput& out = h.tick(0.0);
  CHECK(out.landing);
  CHECK(out.base_velocity(2) == doctest::Approx(-0.3));
}

TEST_CASE("velocity setpoints are clamped and zeroed in MEASURE") {
  Driver d;
  OperatorCommand v = simple(CommandKind::VelocitySetpoint);
  v.velocity << 3.0, 4.0, 0.0, 0.0, 0.0, 1.0;
  CHECK(d.m.handle_command(v).accepted);
  const MissionOutput& out = d.tick(0.0);
  CHECK(out.base_velocity.head<3>().norm() == doctest::Approx(0.5));
  CHECK(out.base_velocity(5) == doctest::Approx(0.3));

  v.velocity(0) = std::numeric_limits<double>::infinity();
  CHECK(d.m.handle_command(v).reason == "non-finite velocity");

  Driver m;
  reach(m, MissionPhase::Measure);
  v.velocity << 0.1, 0.0, 0.0, 0.0, 0.0, 0.0;
  CHECK(m.m.handle_command(v).accepted);
  CHECK(m.tick(1.0).base_velocity.norm() == 0.0);
}

TEST_CASE("bias nulling is deferred while loaded") {
  Driver d;
  REQUIRE(d.m.handle_command(trigger()).accepted);
  CHECK_FALSE(d.tick(0.8).null_bias);
  CHECK_FALSE(d.m.bias_nulled());
  CHECK(d.tick(0.1).null_bias);
  CHECK(d.m.bias_nulled());
  CHECK_FALSE(d.tick(0.1).null_bias);
}

TEST_CASE("approach advances the reference until contact is stable") {
  Driver d;
  reach(d, MissionPhase::Approach);
  const double x0 = d.last.reference.x_d.position.x();
  d.run(1.0, 0.0);
  const double x1 = d.last.reference.x_d.position.x();
  CHECK(x1 - x0 == doctest::Approx(0.02).epsilon(0.01));
  d.run(0.4, 1.0);
  CHECK(d.has_event("contact_detected"));
  const double x2 = d.last.reference.x_d.position.x();
  d.run(1.0, 1.0);
  CHECK(d.last.reference.x_d.position.x() == x2);
  // a dip between the loss and detection thresholds keeps the contact
  d.run(0.2, 0.35);
  CHECK(d.m.handle_command(trigger()).accepted);
}

TEST_CASE("approach gives up after its travel limit") {
  Driver d;
  reach(d, MissionPhase::Approach);
  d.run(5.2, 0.0);
  CHECK(d.m.phase() == MissionPhase::Retract);
}

TEST_CASE("force ramp is rate limited") {
  ForceRamp r;
  r.target = 3.5;
  for (int k = 0; k < 250; ++k) r.step(kDt);
  CHECK(r.current == doctest::Approx(1.75));
  for (int k = 0; k < 500; ++k) r.step(kDt);
  CHECK(r.current == 3.5);
  CHECK(r.settled());
}

TEST_CASE("measure runs in parallel mode and captures after settling") {
  Driver d;
  reach(d, MissionPhase::Measure);
  const MissionOutput& first = d.tick(1.0);
  CHECK(first.mode == ControlMode::Parallel);
  CHECK(first.pump);
  d.run(2.5, 3.5, true);
  CHECK(d.last.reference.f_d.x() == 3.5);
  CHECK_FALSE(d.last.read_echometer);  // minimum dwell not reached
  d.run(6.0, 3.5, true);
  CHECK(d.last.read_echometer);
  d.m.record_reading(d.t, 0.019);
  CHECK(d.m.phase() == MissionPhase::Retract);
  CHECK(d.m.readings().size() == 1);
}

TEST_CASE("missing echometer reading keeps measuring") {
  Driver d;
  reach(d, MissionPhase::Measure);
  d.run(9.0, 3.5, true);
  REQUIRE(d.last.read_echometer);
  d.m.record_reading(d.t, std::nullopt);
  CHECK(d.m.phase() == MissionPhase::Measure);
}

TEST_CASE("contact lost during MEASURE falls back to APPROACH") {
  Driver d;
  reach(d, MissionPhase::Measure);
  d.run(1.0, 2.0);
  d.m.take_events();
  d.run(0.2, 0.0);
  CHECK(d.m.phase() == MissionPhase::Approach);
}

TEST_CASE("retract ramps the force down, withdraws and returns HOME") {
  Driver d;
  reach(d, MissionPhase::Measure);
  d.run(3.0, 3.5, true);
  REQUIRE(d.m.handle_command(trigger()).accepted);
  CHECK(d.tick(3.5).mode == ControlMode::Parallel);
  d.run(2.1, 3.0);
  CHECK(d.last.mode == ControlMode::ImpedanceOnly);
  d.run(3.0, 0.0);
  CHECK(d.m.phase() == MissionPhase::Home);
  CHECK((d.last.reference.x_d.position - d.m.home_pose().position).norm() < 1e-12);
}

TEST_CASE("mission parameter validation") {
  MissionParams p;
  CHECK_NOTHROW(p.validate(kKin));
  p.contact_lost_threshold = 0.6;
  CHECK_THROWS_AS(p.validate(kKin), std::invalid_argument);
  p = MissionParams{};
  p.desired_force = 11.0;
  CHECK_THROWS_AS(p.validate(kKin), std::invalid_argument);
  p = MissionParams{};
  p.approach_axis = 4;
  CHECK_THROWS_AS(p.validate(kKin), std::invalid_argument);
  p = MissionParams{};
  p.q_home(2) = 3.0;
  CHECK_THROWS_AS(p.validate(kKin), std::invalid_argument);
}
