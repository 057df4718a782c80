#pragma once

#include "copbal/calibration.hpp"

#include <array>
#include <cstdint>
#include <span>

namespace copbal {

enum class Foot : std::uint8_t { Left = 0, Right = 1 };

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

// Pad (load cell) positions in the foot-local normalized frame.
struct PadGeometry {
  std::array<Point2, kCellsPerFoot> positions{{{-1.0, 1.0}, {1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}}};

  static PadGeometry corners() { return {}; }
  bool valid() const;
};

struct FootCopSample {
  Foot foot = Foot::Left;
  double f_total = 0.0;                          // grams
  double x_cop = 0.0;                            // foot-local, [-1, 1]
  double y_cop = 0.0;                            // foot-local, [-1, 1]
  std::array<double, kCellsPerFoot> per_cell{};  // grams, as measured
  std::uint32_t timestamp_ms = 0;
  std::uint16_t seq = 0;

  bool operator==(const FootCopSample&) const = default;
};

struct RobotCop {
  double f_total = 0.0;
  double x = 0.0;  // [-2, 2], left foot centre at -1
  double y = 0.0;  // [-1, 1]
};

struct CopConfig {
  double deadband_g = 20.0;
  double left_offset_x = -1.0;
  double right_offset_x = 1.0;
};

FootCopSample foot_cop(std::span<const double, kCellsPerFoot> per_cell_masses,
                       const PadGeometry& geometry = {}, const CopConfig& config = {});

RobotCop robot_cop(const FootCopSample& left, const FootCopSample& right,
                   const CopConfig& config = {});

// Batch form for logs and sweeps: one robot CoP per (left, right) pair.
void robot_cop_batch(std::span<const FootCopSample> left, std::span<const FootCopSample> right,
                     std::span<RobotCop> out, const CopConfig& config = {});
void robot_cop_batch_serial(std::span<const FootCopSample> left,
                            std::span<const FootCopSample> right, std::span<RobotCop> out,
                            const CopConfig& config = {});

} // namespace copbal
