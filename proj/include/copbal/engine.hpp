#pragma once

#include "copbal/control.hpp"
#include "copbal/cop.hpp"
#include "copbal/plant.hpp"
#include "copbal/telemetry.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>

namespace copbal {

struct EngineConfig {
  PlantParams plant{};
  SensorErrorModel sensor{};
  ChannelModel channel{};
  CopConfig cop{};
  BalanceController::Config controller{};
  bool control_enabled = true;
  std::uint32_t control_period_ms = 50;
  std::uint32_t staleness_timeout_ms = 250;
  std::size_t setpoint_window = 40;
  int calibration_samples = 4096;
  std::uint64_t seed = 1;
};

struct TickLog {
  std::uint32_t t_ms = 0;
  RobotCop cop{};          // as seen by the controller
  Point2 true_cop{};       // plant ground truth, normalized robot frame
  bool fresh = false;
  bool control_active = false;
  double setpoint_x = 0.0;
  double theta_e = 0.0;
  JointAngles commands{};  // script pose + compensation
  JointAngles joints{};    // measured servo angles
  PadMasses cells{};       // calibrated per-cell readings
  Support support = Support::Double;
  bool clamped = false;
  bool fallen = false;
};

// One robot: foot units -> channel -> receiver -> controller -> plant. Batch
// trials and the live service both drive this class one control tick at a time.
class BalanceEngine {
public:
  // Optional hook replacing the in-process channel (live UDP transport).
  using PacketSink = std::function<void(std::vector<std::uint8_t>, std::uint32_t now_ms)>;

  BalanceEngine(EngineConfig config, MotionScript script);

  TickLog tick();

  bool script_finished() const;
  bool fallen() const { return plant_.fallen; }
  std::uint32_t now_ms() const { return now_ms_; }

  // Runtime adjustments, applied between ticks.
  void set_gains(const PidGains& gains);
  void set_setpoints(const Setpoints& setpoints);
  void set_tilt_deg(double tilt_deg);
  void set_control_enabled(bool enabled);
  void set_script(MotionScript script);  // starts at the current time
  void set_calibration(int slot, const CalibrationCoefficients& coeffs);
  CalibrationCoefficients tare(int slot, int samples = 64);
  void set_packet_sink(PacketSink sink) { sink_ = std::move(sink); }

  Receiver& receiver() { return receiver_; }
  const EngineConfig& config() const { return config_; }
  const PlantState& plant() const { return plant_; }
  const BalanceController& controller() const { return controller_; }
  const SensorBank& sensors() const { return sensors_; }
  SensorBank& sensors() { return sensors_; }
  bool setpoint_captured() const { return active_; }

private:
  void transmit(const PadMasses& readings);

  EngineConfig config_;
  MotionScript script_;
  std::uint32_t script_start_ms_ = 0;
  std::uint32_t now_ms_ = 0;
  std::mt19937_64 sensor_rng_;
  SensorBank sensors_;
  Channel channel_;
  Receiver receiver_;
  BalanceController controller_;
  PlantState plant_{};
  std::array<std::uint16_t, 2> seq_{};
  std::deque<RobotCop> double_support_window_;
  bool active_ = false;
  bool manual_setpoint_ = false;
  Support last_support_ = Support::Double;
  PacketSink sink_;
};

// Independent RNG stream for (seed, stream id).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

} // namespace copbal
