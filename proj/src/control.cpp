#include "copbal/control.hpp"

#include "copbal/errors.hpp"

#include <algorithm>
#include <cmath>

namespace copbal {

bool PidGains::valid() const {
  const auto ok = [](double g) { return std::isfinite(g) && g >= 0.0; };
  return ok(kp) && ok(ki) && ok(kd);
}

PidOutput pid_step(const PidState& state, const PidGains& gains, double setpoint, double input,
                   double dt, const PidOptions& options) {
  const double error = setpoint - input;
  PidOutput out;
  out.state.integral =
      std::clamp(state.integral + error * dt, -options.integral_limit, options.integral_limit);
  double derivative = 0.0;
  if (state.initialized || !options.suppress_first_derivative) {
    derivative = (error - state.prev_error) / dt;
  }
  out.state.prev_error = error;
  out.state.initialized = true;
  out.correction = gains.kp * error + gains.ki * out.state.integral + gains.kd * derivative;
  return out;
}

std::string_view joint_name(Joint joint) {
  switch (joint) {
  case Joint::Torso:
    return "torso";
  case Joint::HipLeft:
    return "hip_left";
  case Joint::HipRight:
    return "hip_right";
  case Joint::AnkleLeft:
    return "ankle_left";
  case Joint::AnkleRight:
    return "ankle_right";
  }
  return "?";
}

int joint_index(std::string_view name) {
  for (int j = 0; j < kJointCount; ++j) {
    if (joint_name(static_cast<Joint>(j)) == name) {
      return j;
    }
  }
  return -1;
}

JointCorrection distribute_correction(double theta_e_roll, const JointAngles& current,
                                      double joint_limit_deg, const CompensationFactors& factors) {
  JointCorrection c;
  c.theta_e = theta_e_roll;
  // Both sides get equal-sign roll deltas.
  c.delta = {factors.torso * theta_e_roll, factors.hip * theta_e_roll, factors.hip * theta_e_roll,
             factors.ankle * theta_e_roll, factors.ankle * theta_e_roll};
  for (int j = 0; j < kJointCount; ++j) {
    const double wanted = current[j] + c.delta[j];
    c.target[j] = std::clamp(wanted, -joint_limit_deg, joint_limit_deg);
    c.clamped = c.clamped || c.target[j] != wanted;
  }
  return c;
}

PitchCorrection distribute_pitch_correction(double theta_e_pitch,
                                            const CompensationFactors& factors) {
  return {factors.hip * theta_e_pitch, factors.ankle * theta_e_pitch};
}

Setpoints capture_setpoint(std::span<const RobotCop> window) {
  if (window.size() < kMinSetpointSamples) {
    throw InsufficientData("setpoint capture needs at least " +
                           std::to_string(kMinSetpointSamples) + " samples, got " +
                           std::to_string(window.size()));
  }
  double sx = 0.0;
  double sy = 0.0;
  for (const auto& cop : window) {
    sx += cop.x;
    sy += cop.y;
  }
  const auto n = static_cast<double>(window.size());
  return {sx / n, sy / n};
}

BalanceController::BalanceController(Config config) : config_(config) {
  if (!config_.roll_gains.valid() || !config_.pitch_gains.valid()) {
    throw ConfigError("PID gains must be finite and non-negative");
  }
  if (!(config_.dt_s > 0.0)) {
    throw ConfigError("control period must be positive");
  }
}

void BalanceController::set_gains(const PidGains& roll) {
  if (!roll.valid()) {
    throw ConfigError("PID gains must be finite and non-negative");
  }
  config_.roll_gains = roll;
}

void BalanceController::reset() {
  roll_ = {};
  pitch_ = {};
  last_ = {};
  was_frozen_ = false;
}

BalanceController::Output BalanceController::step(const RobotCop& cop, bool inputs_fresh,
                                                   const JointAngles& base) {
  if (!inputs_fresh) {
    if (!was_frozen_) {
      roll_ = {};
      pitch_ = {};
      was_frozen_ = true;
    }
    last_.theta_roll = 0.0;
    last_.theta_pitch = 0.0;
    last_.frozen = true;
    return last_;
  }
  was_frozen_ = false;

  const auto roll = pid_step(roll_, config_.roll_gains, setpoints_.cop_set_x, cop.x, config_.dt_s,
                             config_.pid);
  const auto pitch = pid_step(pitch_, config_.pitch_gains, setpoints_.cop_set_y, cop.y,
                              config_.dt_s, config_.pid);
  roll_ = roll.state;
  pitch_ = pitch.state;

  JointAngles current{};
  for (int j = 0; j < kJointCount; ++j) {
    current[j] = base[j] + last_.offsets[j];
  }
  const auto corr =
      distribute_correction(roll.correction, current, config_.joint_limit_deg, config_.factors);

  Output out;
  out.theta_roll = roll.correction;
  out.theta_pitch = pitch.correction;
  for (int j = 0; j < kJointCount; ++j) {
    out.offsets[j] = corr.target[j] - base[j];
  }
  out.clamped = corr.clamped;
  if (config_.pitch_mapping) {
    const auto p = distribute_pitch_correction(pitch.correction, config_.factors);
    out.pitch.hip_deg = last_.pitch.hip_deg + p.hip_deg;
    out.pitch.ankle_deg = last_.pitch.ankle_deg + p.ankle_deg;
  }
  last_ = out;
  return out;
}

} // namespace copbal
