#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace copbal {

constexpr int kCellsPerFoot = 4;
constexpr int kFeet = 2;
constexpr int kTotalCells = kCellsPerFoot * kFeet;

struct RawSample {
  int cell_id = 0;
  std::int32_t counts = 0;
  std::uint32_t timestamp_ms = 0;
};

// Linear map from raw ADC counts to grams: grams = gradient * (counts - offset).
struct CalibrationCoefficients {
  int cell_id = 0;
  double gradient = 1.0;
  double offset_counts = 0.0;

  bool operator==(const CalibrationCoefficients&) const = default;
};

class ReferenceMassSet {
public:
  ReferenceMassSet();
  explicit ReferenceMassSet(std::vector<double> masses_g);

  const std::vector<double>& masses() const { return masses_; }
  double smallest() const { return masses_.front(); }

private:
  std::vector<double> masses_;
};

CalibrationCoefficients fit_two_point(double tare_raw, double loaded_raw,
                                      double reference_mass_g, int cell_id = 0);

double estimate_mass(const RawSample& raw, const CalibrationCoefficients& coeffs);
double estimate_mass(double counts, const CalibrationCoefficients& coeffs);

// Persistent coefficient table for both feet, slot = foot * 4 + cell.
struct CalibrationStore {
  static constexpr std::uint8_t kVersion = 1;

  std::array<CalibrationCoefficients, kTotalCells> cells{};
  std::uint8_t version = kVersion;

  static CalibrationStore defaults();

  CalibrationCoefficients& at(int foot, int cell) { return cells[foot * kCellsPerFoot + cell]; }
  const CalibrationCoefficients& at(int foot, int cell) const {
    return cells[foot * kCellsPerFoot + cell];
  }

  bool operator==(const CalibrationStore&) const = default;
};

// Layout: "COPC", u8 version, 8 x (u8 slot, f64 gradient, f64 offset), u32 CRC-32; little-endian.
std::vector<std::uint8_t> serialize_store(const CalibrationStore& store);
CalibrationStore parse_store(std::span<const std::uint8_t> bytes);

void save_store(const CalibrationStore& store, const std::filesystem::path& destination);
CalibrationStore load_store(const std::filesystem::path& source);

// Simulated sensor error: additive Gaussian noise per sample plus a per-cell
// gain error that vanishes at zero load and at the calibration mass.
struct SensorErrorModel {
  double noise_sigma_g = 5.0;
  double max_gain_error = 0.02;   // relative, at 1000 g
  double anchor_mass_g = 50.0;    // two-point calibration mass
};

class LoadCellModel {
public:
  LoadCellModel() = default;
  LoadCellModel(double gradient, double offset_counts, double gain_error,
                double noise_sigma_g, double anchor_mass_g = 50.0);

  // Draws a random cell whose gain error is uniform in +-max_gain_error.
  static LoadCellModel random(const SensorErrorModel& model, std::mt19937_64& rng);

  // Mass the cell "believes" it sees under a true load, before noise.
  double apparent_mass(double true_mass_g) const;

  std::int32_t sample(double true_mass_g, std::mt19937_64& rng) const;
  double noiseless_counts(double true_mass_g) const;

  double gradient() const { return gradient_; }
  double offset_counts() const { return offset_; }
  double gain_error() const { return gain_error_; }
  double noise_sigma_g() const { return noise_sigma_g_; }

private:
  double gradient_ = 0.02;
  double offset_ = 0.0;
  double gain_error_ = 0.0;
  double noise_sigma_g_ = 0.0;
  double anchor_mass_g_ = 50.0;
};

// Averages `samples_per_point` readings at tare and at the reference mass, then fits.
CalibrationCoefficients calibrate_cell(const LoadCellModel& cell, double reference_mass_g,
                                       int samples_per_point, std::mt19937_64& rng,
                                       int cell_id = 0);

struct CharacterizationRow {
  double reference_g = 0.0;
  double reading_g = 0.0;
};

struct Characterization {
  std::vector<CharacterizationRow> rows;
  double max_abs_error_g = 0.0;
  double signed_max_error_g = 0.0;
};

Characterization characterize(const LoadCellModel& cell, const CalibrationCoefficients& coeffs,
                              const ReferenceMassSet& masses, int readings_per_mass,
                              std::mt19937_64& rng);

} // namespace copbal
