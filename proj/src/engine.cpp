#include "copbal/engine.hpp"

#include "copbal/errors.hpp"

#include <cmath>
#include <vector>

namespace copbal {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace {

enum Stream : std::uint64_t { kCalibration = 1, kNoise = 2, kChannel = 3 };

SensorBank make_sensors(const EngineConfig& config) {
  auto rng = make_rng(config.seed, kCalibration);
  return SensorBank(config.sensor, rng, config.calibration_samples);
}

ChannelModel seeded_channel(const EngineConfig& config) {
  ChannelModel model = config.channel;
  model.seed = make_rng(config.seed, kChannel)();
  return model;
}

} // namespace

BalanceEngine::BalanceEngine(EngineConfig config, MotionScript script)
    : config_(config), script_(std::move(script)),
      sensor_rng_(make_rng(config.seed, kNoise)), sensors_(make_sensors(config)),
      channel_(seeded_channel(config)), receiver_(config.staleness_timeout_ms),
      controller_(config.controller) {
  config_.plant.validate();
  script_.validate();
  if (config_.control_period_ms == 0) {
    throw ConfigError("control period must be positive");
  }
  config_.controller.dt_s = config_.control_period_ms / 1000.0;
  controller_ = BalanceController(config_.controller);
  plant_.support = play_motion(script_, 0.0).support;
  plant_.joint_angles_deg = play_motion(script_, 0.0).targets;
  last_support_ = plant_.support;
}

bool BalanceEngine::script_finished() const {
  return now_ms_ >= script_start_ms_ + script_.duration_ms();
}

void BalanceEngine::transmit(const PadMasses& readings) {
  for (int foot = 0; foot < kFeet; ++foot) {
    std::span<const double, kCellsPerFoot> cells(readings.data() + foot * kCellsPerFoot,
                                                 kCellsPerFoot);
    FootCopSample sample = foot_cop(cells, PadGeometry{}, config_.cop);
    sample.foot = static_cast<Foot>(foot);
    sample.seq = seq_[foot]++;
    sample.timestamp_ms = now_ms_;
    auto bytes = encode(sample);
    if (sink_) {
      sink_(std::move(bytes), now_ms_);
    } else {
      channel_.submit(std::move(bytes), now_ms_);
    }
  }
}

TickLog BalanceEngine::tick() {
  TickLog log;
  log.t_ms = now_ms_;
  const double script_t = static_cast<double>(now_ms_ - script_start_ms_);
  const MotionSample motion = play_motion(script_, script_t);
  plant_.support = motion.support;
  log.support = motion.support;

  // Foot units sample and transmit.
  const PadMasses truth = pad_forces(plant_, config_.plant);
  log.cells = sensors_.measure(truth, sensor_rng_);
  log.true_cop = ground_truth_cop(plant_, config_.plant);
  transmit(log.cells);

  if (!sink_) {
    for (auto& d : channel_.step(now_ms_)) {
      receiver_.accept(d.bytes, d.deliver_ms);
    }
  }

  auto left = receiver_.poll(Foot::Left, now_ms_);
  auto right = receiver_.poll(Foot::Right, now_ms_);
  if (left && right) {
    log.cop = robot_cop(left->sample, right->sample, config_.cop);
    log.fresh = left->freshness == Freshness::Fresh && right->freshness == Freshness::Fresh;
  }

  // Setpoint comes from the most recent stable double-support window.
  if (motion.support == Support::Double) {
    if (log.fresh) {
      double_support_window_.push_back(log.cop);
      if (double_support_window_.size() > config_.setpoint_window) {
        double_support_window_.pop_front();
      }
    }
  } else if (last_support_ == Support::Double && !manual_setpoint_) {
    try {
      std::vector<RobotCop> window(double_support_window_.begin(), double_support_window_.end());
      controller_.set_setpoints(capture_setpoint(window));
      controller_.reset();
      active_ = true;
    } catch (const InsufficientData&) {
      // Controller stays disengaged for this phase.
    }
  }
  last_support_ = motion.support;

  JointAngles offsets{};
  if (config_.control_enabled && active_) {
    const auto out = controller_.step(log.cop, log.fresh, motion.targets);
    offsets = out.offsets;
    log.theta_e = out.theta_roll;
    log.clamped = out.clamped;
    log.control_active = true;
  }
  log.setpoint_x = controller_.setpoints().cop_set_x;
  for (int j = 0; j < kJointCount; ++j) {
    log.commands[j] = motion.targets[j] + offsets[j];
  }

  // Physics substeps; the script pose keeps moving inside the tick.
  const int substeps =
      static_cast<int>(std::lround(config_.control_period_ms / 1000.0 / kPhysicsDt));
  for (int s = 0; s < substeps; ++s) {
    const double ts = script_t + s * kPhysicsDt * 1000.0;
    const MotionSample m = play_motion(script_, ts);
    plant_.support = m.support;
    JointAngles cmd{};
    for (int j = 0; j < kJointCount; ++j) {
      cmd[j] = m.targets[j] + offsets[j];
    }
    plant_ = plant_step(plant_, config_.plant, cmd, kPhysicsDt);
  }
  log.joints = plant_.joint_angles_deg;
  log.fallen = plant_.fallen;
  now_ms_ += config_.control_period_ms;
  return log;
}

void BalanceEngine::set_gains(const PidGains& gains) {
  controller_.set_gains(gains);
  config_.controller.roll_gains = gains;
}

void BalanceEngine::set_setpoints(const Setpoints& setpoints) {
  controller_.set_setpoints(setpoints);
  active_ = true;
  manual_setpoint_ = true;
}

void BalanceEngine::set_tilt_deg(double tilt_deg) {
  PlantParams p = config_.plant;
  p.tilt_deg = tilt_deg;
  p.validate();
  config_.plant = p;
}

void BalanceEngine::set_control_enabled(bool enabled) { config_.control_enabled = enabled; }

void BalanceEngine::set_script(MotionScript script) {
  script.validate();
  script_ = std::move(script);
  script_start_ms_ = now_ms_;
}

void BalanceEngine::set_calibration(int slot, const CalibrationCoefficients& coeffs) {
  if (slot < 0 || slot >= kTotalCells || !(coeffs.gradient > 0.0)) {
    throw ConfigError("invalid calibration slot or gradient");
  }
  sensors_.store().cells[slot] = coeffs;
  sensors_.store().cells[slot].cell_id = slot % kCellsPerFoot;
}

CalibrationCoefficients BalanceEngine::tare(int slot, int samples) {
  if (slot < 0 || slot >= kTotalCells || samples <= 0) {
    throw ConfigError("invalid tare request");
  }
  // Re-zero under the current load.
  const PadMasses truth = pad_forces(plant_, config_.plant);
  double sum = 0.0;
  for (int i = 0; i < samples; ++i) {
    sum += sensors_.cells()[slot].sample(truth[slot], sensor_rng_);
  }
  auto& coeffs = sensors_.store().cells[slot];
  coeffs.offset_counts = sum / samples;
  return coeffs;
}

} // namespace copbal
