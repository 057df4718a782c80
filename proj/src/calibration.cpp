#include "copbal/calibration.hpp"

#include "copbal/bytes.hpp"
#include "copbal/errors.hpp"

#include <boost/crc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace copbal {

namespace {

constexpr std::array<std::uint8_t, 4> kStoreMagic{'C', 'O', 'P', 'C'};
constexpr std::size_t kRecordSize = 1 + 8 + 8;
constexpr std::size_t kStoreSize = kStoreMagic.size() + 1 + kTotalCells * kRecordSize + 4;

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  boost::crc_32_type crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

} // namespace

ReferenceMassSet::ReferenceMassSet() : masses_{50.0, 100.0, 200.0, 500.0, 1000.0} {}

ReferenceMassSet::ReferenceMassSet(std::vector<double> masses_g) : masses_(std::move(masses_g)) {
  if (masses_.empty()) {
    throw ConfigError("reference mass set is empty");
  }
  for (std::size_t i = 0; i < masses_.size(); ++i) {
    if (!(masses_[i] > 0.0) || (i > 0 && !(masses_[i] > masses_[i - 1]))) {
      throw ConfigError("reference masses must be positive and strictly increasing");
    }
  }
}

CalibrationCoefficients fit_two_point(double tare_raw, double loaded_raw, double reference_mass_g,
                                      int cell_id) {
  if (!(reference_mass_g > 0.0)) {
    throw DegenerateCalibration("reference mass must be positive");
  }
  if (loaded_raw == tare_raw) {
    throw DegenerateCalibration("loaded reading equals tare reading");
  }
  const double gradient = reference_mass_g / (loaded_raw - tare_raw);
  if (!(gradient > 0.0) || !std::isfinite(gradient)) {
    throw DegenerateCalibration("non-positive gradient (inverted wiring?)");
  }
  return {cell_id, gradient, tare_raw};
}

double estimate_mass(double counts, const CalibrationCoefficients& coeffs) {
  return coeffs.gradient * (counts - coeffs.offset_counts);
}

double estimate_mass(const RawSample& raw, const CalibrationCoefficients& coeffs) {
  return estimate_mass(static_cast<double>(raw.counts), coeffs);
}

CalibrationStore CalibrationStore::defaults() {
  CalibrationStore store;
  for (int slot = 0; slot < kTotalCells; ++slot) {
    store.cells[slot] = {slot % kCellsPerFoot, 0.02, 0.0};
  }
  return store;
}

std::vector<std::uint8_t> serialize_store(const CalibrationStore& store) {
  std::vector<std::uint8_t> out(kStoreMagic.begin(), kStoreMagic.end());
  out.reserve(kStoreSize);
  out.push_back(store.version);
  for (int slot = 0; slot < kTotalCells; ++slot) {
    out.push_back(static_cast<std::uint8_t>(slot));
    bytes::put_le(out, store.cells[slot].gradient);
    bytes::put_le(out, store.cells[slot].offset_counts);
  }
  bytes::put_le(out, crc32(out));
  return out;
}

CalibrationStore parse_store(std::span<const std::uint8_t> data) {
  if (data.size() != kStoreSize) {
    throw CorruptStore("calibration store has wrong size (" + std::to_string(data.size()) + ")");
  }
  const auto body = data.first(kStoreSize - 4);
  if (crc32(body) != bytes::get_le<std::uint32_t>(data, kStoreSize - 4)) {
    throw CorruptStore("calibration store checksum mismatch");
  }
  if (!std::equal(kStoreMagic.begin(), kStoreMagic.end(), data.begin())) {
    throw CorruptStore("calibration store magic mismatch");
  }
  CalibrationStore store;
  store.version = data[4];
  if (store.version != CalibrationStore::kVersion) {
    throw VersionMismatch("calibration store version " + std::to_string(store.version));
  }
  std::size_t pos = 5;
  for (int slot = 0; slot < kTotalCells; ++slot) {
    if (data[pos] != slot) {
      throw CorruptStore("calibration store slot out of order");
    }
    store.cells[slot].cell_id = slot % kCellsPerFoot;
    store.cells[slot].gradient = bytes::get_le<double>(data, pos + 1);
    store.cells[slot].offset_counts = bytes::get_le<double>(data, pos + 9);
    pos += kRecordSize;
  }
  return store;
}

void save_store(const CalibrationStore& store, const std::filesystem::path& destination) {
  const auto data = serialize_store(store);
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoFailure("cannot open " + destination.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) {
    throw IoFailure("write to " + destination.string() + " failed");
  }
}

CalibrationStore load_store(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) {
    throw IoFailure("cannot open " + source.string());
  }
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return parse_store(data);
}

LoadCellModel::LoadCellModel(double gradient, double offset_counts, double gain_error,
                             double noise_sigma_g, double anchor_mass_g)
    : gradient_(gradient), offset_(offset_counts), gain_error_(gain_error),
      noise_sigma_g_(noise_sigma_g), anchor_mass_g_(anchor_mass_g) {}

LoadCellModel LoadCellModel::random(const SensorErrorModel& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gradient(0.018, 0.024);
  std::uniform_real_distribution<double> offset(-40000.0, 40000.0);
  std::uniform_real_distribution<double> gain(-model.max_gain_error, model.max_gain_error);
  const double g = gradient(rng);
  const double o = std::round(offset(rng));
  const double e = gain(rng);
  return {g, o, e, model.noise_sigma_g, model.anchor_mass_g};
}

double LoadCellModel::apparent_mass(double true_mass_g) const {
  // Quadratic deviation: zero at 0 g and at the anchor, gain_error * 1000 g at 1000 g.
  const double span = 1000.0 - anchor_mass_g_;
  return true_mass_g + gain_error_ * true_mass_g * (true_mass_g - anchor_mass_g_) / span;
}

double LoadCellModel::noiseless_counts(double true_mass_g) const {
  return offset_ + apparent_mass(true_mass_g) / gradient_;
}

std::int32_t LoadCellModel::sample(double true_mass_g, std::mt19937_64& rng) const {
  double grams = apparent_mass(true_mass_g);
  if (noise_sigma_g_ > 0.0) {
    grams += std::normal_distribution<double>(0.0, noise_sigma_g_)(rng);
  }
  return static_cast<std::int32_t>(std::lround(offset_ + grams / gradient_));
}

CalibrationCoefficients calibrate_cell(const LoadCellModel& cell, double reference_mass_g,
                                       int samples_per_point, std::mt19937_64& rng, int cell_id) {
  const auto average = [&](double mass) {
    double sum = 0.0;
    for (int i = 0; i < samples_per_point; ++i) {
      sum += cell.sample(mass, rng);
    }
    return sum / samples_per_point;
  };
  const double tare = average(0.0);
  const double loaded = average(reference_mass_g);
  return fit_two_point(tare, loaded, reference_mass_g, cell_id);
}

Characterization characterize(const LoadCellModel& cell, const CalibrationCoefficients& coeffs,
                              const ReferenceMassSet& masses, int readings_per_mass,
                              std::mt19937_64& rng) {
  Characterization result;
  for (double reference : masses.masses()) {
    double sum = 0.0;
    for (int i = 0; i < readings_per_mass; ++i) {
      sum += estimate_mass(cell.sample(reference, rng), coeffs);
    }
    const double reading = sum / readings_per_mass;
    result.rows.push_back({reference, reading});
    const double err = reading - reference;
    if (std::abs(err) > result.max_abs_error_g) {
      result.max_abs_error_g = std::abs(err);
      result.signed_max_error_g = err;
    }
  }
  return result;
}

} // namespace copbal
