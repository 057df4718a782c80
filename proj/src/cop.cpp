#include "copbal/cop.hpp"

#include <algorithm>
#include <array>
#include <cassert>

namespace copbal {

bool PadGeometry::valid() const {
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      if (positions[i] == positions[j]) {
        return false;
      }
    }
  }
  return true;
}

FootCopSample foot_cop(std::span<const double, kCellsPerFoot> per_cell_masses,
                       const PadGeometry& geometry, const CopConfig& config) {
  FootCopSample sample;
  std::array<double, kCellsPerFoot> m{};
  for (int i = 0; i < kCellsPerFoot; ++i) {
    sample.per_cell[i] = per_cell_masses[i];
    // Noise can push a cell slightly negative; it must not pull the centroid outside the pads.
    m[i] = std::max(0.0, per_cell_masses[i]);
  }
  // Sum per pad row so a left/right mirrored load rounds identically.
  const auto& p = geometry.positions;
  const double total = (m[0] + m[1]) + (m[2] + m[3]);
  const double mx = (m[0] * p[0].x + m[1] * p[1].x) + (m[2] * p[2].x + m[3] * p[3].x);
  const double my = (m[0] * p[0].y + m[1] * p[1].y) + (m[2] * p[2].y + m[3] * p[3].y);
  sample.f_total = total;
  if (total >= config.deadband_g) {
    sample.x_cop = mx / total;
    sample.y_cop = my / total;
  }
  return sample;
}

RobotCop robot_cop(const FootCopSample& left, const FootCopSample& right,
                   const CopConfig& config) {
  RobotCop cop;
  cop.f_total = left.f_total + right.f_total;
  if (cop.f_total < config.deadband_g) {
    return cop;
  }
  const double xl = left.x_cop + config.left_offset_x;
  const double xr = right.x_cop + config.right_offset_x;
  cop.x = (left.f_total * xl + right.f_total * xr) / cop.f_total;
  cop.y = (left.f_total * left.y_cop + right.f_total * right.y_cop) / cop.f_total;
  return cop;
}

void robot_cop_batch(std::span<const FootCopSample> left, std::span<const FootCopSample> right,
                     std::span<RobotCop> out, const CopConfig& config) {
  assert(left.size() == right.size() && out.size() == left.size());
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = robot_cop(left[i], right[i], config);
  }
}

void robot_cop_batch_serial(std::span<const FootCopSample> left,
                            std::span<const FootCopSample> right, std::span<RobotCop> out,
                            const CopConfig& config) {
  assert(left.size() == right.size() && out.size() == left.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = robot_cop(left[i], right[i], config);
  }
}

} // namespace copbal
