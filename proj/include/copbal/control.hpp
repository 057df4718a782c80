#pragma once

#include "copbal/cop.hpp"

#include <array>
#include <span>
#include <string_view>

namespace copbal {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;

  bool valid() const;
  bool operator==(const PidGains&) const = default;
};

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool initialized = false;

  bool operator==(const PidState&) const = default;
};

struct PidOptions {
  double integral_limit = 10.0;
  bool suppress_first_derivative = true;
};

struct PidOutput {
  double correction = 0.0;
  PidState state;
};

// Discrete PID over CoP error: e = setpoint - input; rectangular integral,
// backward-difference derivative (zero on the first step after reset).
PidOutput pid_step(const PidState& state, const PidGains& gains, double setpoint, double input,
                   double dt, const PidOptions& options = {});

// The five roll compensation joints.
enum class Joint : int { Torso = 0, HipLeft, HipRight, AnkleLeft, AnkleRight };
constexpr int kJointCount = 5;
using JointAngles = std::array<double, kJointCount>;  // degrees from neutral

std::string_view joint_name(Joint joint);
int joint_index(std::string_view name);  // -1 when unknown

struct CompensationFactors {
  double torso = 0.8;
  double hip = 1.0;
  double ankle = 0.4;
};

struct JointCorrection {
  double theta_e = 0.0;
  JointAngles delta{};    // requested deltas, before clamping
  JointAngles target{};   // current + delta, clamped to limits
  bool clamped = false;
};

JointCorrection distribute_correction(double theta_e_roll, const JointAngles& current,
                                      double joint_limit_deg = 30.0,
                                      const CompensationFactors& factors = {});

// Pitch deltas for the optional pitch mapping: (hip pitch, ankle pitch) pairs.
struct PitchCorrection {
  double hip_deg = 0.0;
  double ankle_deg = 0.0;
};
PitchCorrection distribute_pitch_correction(double theta_e_pitch,
                                            const CompensationFactors& factors = {});

struct Setpoints {
  double cop_set_x = 0.0;
  double cop_set_y = 0.0;
};

constexpr std::size_t kMinSetpointSamples = 20;

Setpoints capture_setpoint(std::span<const RobotCop> window);

// Roll + pitch PID with incremental joint compensation and stale-input fail-safe.
class BalanceController {
public:
  struct Config {
    PidGains roll_gains{};
    PidGains pitch_gains{};
    PidOptions pid{};
    CompensationFactors factors{};
    double joint_limit_deg = 30.0;
    double dt_s = 0.05;
    bool pitch_mapping = false;
  };

  struct Output {
    double theta_roll = 0.0;
    double theta_pitch = 0.0;
    JointAngles offsets{};  // accumulated compensation added to the motion targets
    PitchCorrection pitch{};
    bool clamped = false;
    bool frozen = false;
  };

  BalanceController() = default;
  explicit BalanceController(Config config);

  // `base` is the motion-script pose; offsets are clamped so base + offsets stays in limits.
  Output step(const RobotCop& cop, bool inputs_fresh, const JointAngles& base);

  void set_gains(const PidGains& roll);
  void set_setpoints(const Setpoints& setpoints) { setpoints_ = setpoints; }
  void reset();

  const Config& config() const { return config_; }
  const Setpoints& setpoints() const { return setpoints_; }
  const PidState& roll_state() const { return roll_; }
  const Output& last_output() const { return last_; }

private:
  Config config_{};
  Setpoints setpoints_{};
  PidState roll_{};
  PidState pitch_{};
  Output last_{};
  bool was_frozen_ = false;
};

} // namespace copbal
