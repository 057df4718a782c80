#pragma once

#include "copbal/engine.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace copbal {

enum class LiftPlan { Right, Left, Alternate };

const char* to_string(LiftPlan plan);
LiftPlan lift_plan_from_string(const std::string& text);

struct TrialConfig {
  PidGains gains{0.1, 0.0, 0.005};
  double tilt_deg = 3.0;  // magnitude, toward the outside of the support foot
  LiftPlan foot = LiftPlan::Alternate;
  int trials = 6;
  std::uint64_t seed = 1;
  ChannelModel channel{0.0, 2.0, 6.0, false, 1};
  bool control_enabled = true;
  bool double_support_only = false;
  double tilt_jitter_deg = 0.25;  // per-trial uniform perturbation of the tilt
  PlantParams plant{};
  SensorErrorModel sensor{};
  std::optional<MotionScript> script;

  void validate() const;
};

enum class Outcome { Fall, NotFall };

struct TrialSample {
  std::uint32_t t_ms = 0;
  double cop_x = 0.0;
  double cop_y = 0.0;
  double theta_e = 0.0;
  double torso = 0.0;
  double hip = 0.0;
  double ankle = 0.0;
  bool fallen = false;

  bool operator==(const TrialSample&) const = default;
};

struct TrialRecord {
  std::vector<TrialSample> samples;
  Outcome outcome = Outcome::NotFall;
  double rms_error = 0.0;
  std::size_t rms_samples = 0;
  double setpoint_x = 0.0;
  Foot lifted = Foot::Right;
  std::uint64_t seed = 0;
};

double rms_error(std::span<const double> series, double setpoint);

// Foot and seed used by trial `index` of a multi-trial config.
Foot trial_foot(const TrialConfig& config, int index);
std::uint64_t trial_seed(const TrialConfig& config, int index);

EngineConfig engine_config_for(const TrialConfig& config, int index);
TrialRecord run_trial(const TrialConfig& config, int index = 0);

struct SweepRow {
  PidGains gains{};
  int falls = 0;
  int not_falls = 0;
  double success_pct = 0.0;
  double mean_rms = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<std::vector<TrialRecord>> trials;  // per row, optional detail
};

// Rows are independent and individually seeded; the parallel version
// distributes (row, trial) pairs across OpenMP threads.
SweepReport run_sweep(std::span<const PidGains> grid, const TrialConfig& base,
                      bool keep_trials = false);
SweepReport run_sweep_serial(std::span<const PidGains> grid, const TrialConfig& base,
                             bool keep_trials = false);

// Kp, Ki and Kd grids of the three gain tables.
std::vector<PidGains> kp_grid();
std::vector<PidGains> ki_grid();
std::vector<PidGains> kd_grid();
std::vector<PidGains> bringup_grid();

std::vector<PidGains> parse_grid_csv(const std::string& text);
std::vector<PidGains> load_grid(const std::filesystem::path& path);

std::string trial_csv(const TrialRecord& record);
std::vector<TrialSample> parse_trial_csv(const std::string& text);
std::string report_csv(const SweepReport& report);
std::vector<SweepRow> parse_report_csv(const std::string& text);
std::string report_markdown(const SweepReport& report, const std::string& title = "");
std::string trial_json(const TrialRecord& record);

void write_text(const std::filesystem::path& path, const std::string& text);

// Seed override from COP_SEED, if set and numeric.
std::optional<std::uint64_t> seed_from_env();

} // namespace copbal
