#pragma once

#include "copbal/calibration.hpp"
#include "copbal/control.hpp"
#include "copbal/cop.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace copbal {

enum class Support { Double, LeftOnly, RightOnly };

const char* to_string(Support support);
Support support_from_string(const std::string& text);

// Frontal-plane point-mass pendulum standing on flat feet. Robot-frame X is
// measured in metres from the midpoint between the feet; normalized CoP
// units divide by foot_half_width_m, so foot centres sit at +-1.
struct PlantParams {
  double com_height_m = 0.30;
  double mass_kg = 3.0;
  double tilt_deg = 0.0;  // surface roll; positive leans the robot toward +X
  double foot_half_width_m = 0.012;
  double gravity = 9.81;
  std::uint64_t noise_seed = 1;
  // Lateral CoM shift per degree of each joint (torso, hips, ankles).
  JointAngles sensitivity_m_per_deg{0.0025, 0.004, 0.004, 0.0015, 0.0015};
  double joint_slew_deg_s = 200.0;
  double servo_time_constant_s = 0.02;
  // Reaction of the body roll to joint-driven CoM acceleration (0 disables).
  double joint_reaction = 0.2;
  double fall_window_ms = 300.0;
  double cop_y = 0.0;  // sagittal CoP, foot-local normalized

  void validate() const;
};

struct PlantState {
  double roll_angle_rad = 0.0;  // tipping about a support edge; 0 while the foot is flat
  double roll_rate_rad_s = 0.0;
  JointAngles joint_angles_deg{};
  JointAngles joint_rates_deg_s{};
  Support support = Support::Double;
  bool fallen = false;
  double t_ms = 0.0;
  double cop_excursion_timer_ms = 0.0;

  bool operator==(const PlantState&) const = default;
};

constexpr double kPhysicsDt = 0.005;

struct SupportPolygon {
  double min_m = 0.0;
  double max_m = 0.0;
};

SupportPolygon support_polygon(Support support, const PlantParams& params);

// Lateral CoM offset produced by the joints alone.
double joint_com_offset(const JointAngles& joints, const PlantParams& params);

// Unclamped CoM ground projection in robot-frame metres.
double com_projection(const PlantState& state, const PlantParams& params);

// Roll acceleration of the inverted pendulum while tipping about `pivot_m`:
// (g/h^2)(x - pivot) - reaction * a_joint / h.
double tipping_acceleration(double com_projection_m, double pivot_m, double com_accel_m_s2,
                            const PlantParams& params);

PlantState plant_step(const PlantState& state, const PlantParams& params,
                      const JointAngles& joint_commands, double dt = kPhysicsDt);

// Latches `fallen` after the unclamped projection stays outside the polygon too long.
void fall_check(PlantState& state, const PlantParams& params, double dt_ms);

// Ground-truth CoP (normalized robot frame), clamped to the active support polygon.
Point2 ground_truth_cop(const PlantState& state, const PlantParams& params);

using PadMasses = std::array<double, kTotalCells>;  // left 0..3, right 4..7

// Noise-free per-cell loads whose 8-cell centroid equals ground_truth_cop().
PadMasses pad_forces(const PlantState& state, const PlantParams& params);

// Per-cell load cells with their calibrated coefficients.
class SensorBank {
public:
  SensorBank() = default;
  SensorBank(const SensorErrorModel& model, std::mt19937_64& rng, int calibration_samples = 4096);

  // true loads -> raw counts -> calibrated grams
  PadMasses measure(const PadMasses& true_masses, std::mt19937_64& rng) const;

  const std::array<LoadCellModel, kTotalCells>& cells() const { return cells_; }
  CalibrationStore& store() { return store_; }
  const CalibrationStore& store() const { return store_; }

private:
  std::array<LoadCellModel, kTotalCells> cells_{};
  CalibrationStore store_ = CalibrationStore::defaults();
};

struct MotionFrame {
  JointAngles joints{};
  std::uint32_t duration_ms = 0;
  Support support = Support::Double;
};

struct MotionScript {
  std::vector<MotionFrame> frames;

  std::uint32_t duration_ms() const;
  void validate(double joint_limit_deg = 30.0) const;
};

struct MotionSample {
  JointAngles targets{};
  Support support = Support::Double;
  std::size_t frame = 0;
};

struct SupportEvent {
  std::uint32_t t_ms = 0;
  Support support = Support::Double;
};

// Linear interpolation between consecutive frames; frame i moves from frame
// i-1's pose to its own over its duration. Past the end the last frame holds.
MotionSample play_motion(const MotionScript& script, double t_ms);
std::vector<SupportEvent> support_events(const MotionScript& script);

// Double support, lift over 0.5 s with a lean onto the support foot, hold, lower, settle.
MotionScript standard_lift_script(Foot lifted, const PlantParams& params,
                                  std::uint32_t double_ms = 2000, std::uint32_t lift_ms = 500,
                                  std::uint32_t hold_ms = 3000, std::uint32_t lower_ms = 500,
                                  std::uint32_t settle_ms = 1000);
MotionScript double_support_script(std::uint32_t duration_ms);

MotionScript parse_motion_script(const std::string& json_text);
std::string motion_script_to_json(const MotionScript& script);
MotionScript load_motion_script(const std::filesystem::path& path);

} // namespace copbal
