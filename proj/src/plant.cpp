#include "copbal/plant.hpp"

#include "copbal/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace copbal {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double tilt_rad(const PlantParams& params) { return params.tilt_deg * kDegToRad; }

double joint_com_rate(const JointAngles& rates, const PlantParams& params) {
  double v = 0.0;
  for (int j = 0; j < kJointCount; ++j) {
    v += params.sensitivity_m_per_deg[j] * rates[j];
  }
  return v;
}

} // namespace

const char* to_string(Support support) {
  switch (support) {
  case Support::Double:
    return "double";
  case Support::LeftOnly:
    return "left";
  case Support::RightOnly:
    return "right";
  }
  return "?";
}

Support support_from_string(const std::string& text) {
  if (text == "double") {
    return Support::Double;
  }
  if (text == "left") {
    return Support::LeftOnly;
  }
  if (text == "right") {
    return Support::RightOnly;
  }
  throw MalformedScript("unknown support phase '" + text + "'");
}

void PlantParams::validate() const {
  if (!(com_height_m > 0.0) || !(mass_kg > 0.0) || !(std::abs(tilt_deg) < 15.0) ||
      !(foot_half_width_m > 0.0) || !(gravity > 0.0) || !(joint_slew_deg_s > 0.0) ||
      !(servo_time_constant_s > 0.0) || !(fall_window_ms >= 0.0)) {
    throw ConfigError("invalid plant parameters");
  }
}

SupportPolygon support_polygon(Support support, const PlantParams& params) {
  const double w = params.foot_half_width_m;
  switch (support) {
  case Support::Double:
    return {-2.0 * w, 2.0 * w};
  case Support::LeftOnly:
    return {-2.0 * w, 0.0};
  case Support::RightOnly:
    return {0.0, 2.0 * w};
  }
  return {};
}

double joint_com_offset(const JointAngles& joints, const PlantParams& params) {
  double c = 0.0;
  for (int j = 0; j < kJointCount; ++j) {
    c += params.sensitivity_m_per_deg[j] * joints[j];
  }
  return c;
}

double com_projection(const PlantState& state, const PlantParams& params) {
  return params.com_height_m * std::sin(state.roll_angle_rad + tilt_rad(params)) +
         joint_com_offset(state.joint_angles_deg, params);
}

double tipping_acceleration(double com_projection_m, double pivot_m, double com_accel_m_s2,
                            const PlantParams& params) {
  const double h = params.com_height_m;
  return params.gravity / (h * h) * (com_projection_m - pivot_m) -
         params.joint_reaction * com_accel_m_s2 / h;
}

PlantState plant_step(const PlantState& state, const PlantParams& params,
                      const JointAngles& joint_commands, double dt) {
  PlantState next = state;
  if (state.fallen) {
    next.t_ms += dt * 1000.0;
    return next;
  }

  // Servos: first-order tracking with a rate limit.
  const double rate_before = joint_com_rate(state.joint_rates_deg_s, params);
  for (int j = 0; j < kJointCount; ++j) {
    const double wanted = (joint_commands[j] - state.joint_angles_deg[j]) /
                          std::max(params.servo_time_constant_s, dt);
    const double rate = std::clamp(wanted, -params.joint_slew_deg_s, params.joint_slew_deg_s);
    next.joint_rates_deg_s[j] = rate;
    next.joint_angles_deg[j] = state.joint_angles_deg[j] + rate * dt;
  }
  const double com_accel = (joint_com_rate(next.joint_rates_deg_s, params) - rate_before) / dt;

  const auto poly = support_polygon(state.support, params);
  const double x = com_projection(next, params);
  const double h = params.com_height_m;

  if (state.roll_angle_rad == 0.0 && state.roll_rate_rad_s == 0.0) {
    // Flat foot: the contact holds while the required CoP stays on the sole.
    const double required_cop = x - params.joint_reaction * h / params.gravity * com_accel;
    double pivot = 0.0;
    int direction = 0;
    if (required_cop > poly.max_m) {
      pivot = poly.max_m;
      direction = 1;
    } else if (required_cop < poly.min_m) {
      pivot = poly.min_m;
      direction = -1;
    }
    if (direction != 0) {
      const double acc = tipping_acceleration(x, pivot, com_accel, params);
      if (acc * direction > 0.0) {
        next.roll_rate_rad_s = acc * dt;
        next.roll_angle_rad = next.roll_rate_rad_s * dt;
      }
    }
  } else {
    const int direction = state.roll_angle_rad > 0.0 ? 1
                          : state.roll_angle_rad < 0.0 ? -1
                          : (state.roll_rate_rad_s > 0.0 ? 1 : -1);
    const double pivot = direction > 0 ? poly.max_m : poly.min_m;
    const double acc = tipping_acceleration(x, pivot, com_accel, params);
    // Semi-implicit Euler.
    next.roll_rate_rad_s = state.roll_rate_rad_s + acc * dt;
    next.roll_angle_rad = state.roll_angle_rad + next.roll_rate_rad_s * dt;
    if (next.roll_angle_rad * direction <= 0.0) {
      // Foot lands flat again.
      next.roll_angle_rad = 0.0;
      next.roll_rate_rad_s = 0.0;
    }
  }

  next.t_ms = state.t_ms + dt * 1000.0;
  fall_check(next, params, dt * 1000.0);
  return next;
}

void fall_check(PlantState& state, const PlantParams& params, double dt_ms) {
  if (state.fallen) {
    return;
  }
  const auto poly = support_polygon(state.support, params);
  const double x = com_projection(state, params);
  if (x < poly.min_m || x > poly.max_m) {
    state.cop_excursion_timer_ms += dt_ms;
    if (state.cop_excursion_timer_ms > params.fall_window_ms) {
      state.fallen = true;
    }
  } else {
    state.cop_excursion_timer_ms = 0.0;
  }
}

Point2 ground_truth_cop(const PlantState& state, const PlantParams& params) {
  const auto poly = support_polygon(state.support, params);
  double x_m = 0.0;
  if (state.roll_angle_rad > 0.0) {
    x_m = poly.max_m;
  } else if (state.roll_angle_rad < 0.0) {
    x_m = poly.min_m;
  } else {
    x_m = std::clamp(com_projection(state, params), poly.min_m, poly.max_m);
  }
  return {x_m / params.foot_half_width_m, std::clamp(params.cop_y, -1.0, 1.0)};
}

PadMasses pad_forces(const PlantState& state, const PlantParams& params) {
  const Point2 cop = ground_truth_cop(state, params);
  const double total_g = params.mass_kg * 1000.0;

  // Split between feet so the foot-weighted centroid lands on cop.x.
  double f_left = 0.0;
  double f_right = 0.0;
  double x_left = 0.0;
  double x_right = 0.0;
  switch (state.support) {
  case Support::Double:
    if (cop.x > 1.0) {
      f_right = total_g;
      x_right = cop.x - 1.0;
    } else if (cop.x < -1.0) {
      f_left = total_g;
      x_left = cop.x + 1.0;
    } else {
      f_right = total_g * (1.0 + cop.x) / 2.0;
      f_left = total_g - f_right;
    }
    break;
  case Support::LeftOnly:
    f_left = total_g;
    x_left = cop.x + 1.0;
    break;
  case Support::RightOnly:
    f_right = total_g;
    x_right = cop.x - 1.0;
    break;
  }

  // Bilinear spread over the four corner pads.
  const PadGeometry pads;
  PadMasses out{};
  const auto spread = [&](double force, double x, double y, int base) {
    for (int i = 0; i < kCellsPerFoot; ++i) {
      const auto& p = pads.positions[i];
      out[base + i] = force * (1.0 + p.x * x) / 2.0 * (1.0 + p.y * y) / 2.0;
    }
  };
  spread(f_left, std::clamp(x_left, -1.0, 1.0), cop.y, 0);
  spread(f_right, std::clamp(x_right, -1.0, 1.0), cop.y, kCellsPerFoot);
  return out;
}

SensorBank::SensorBank(const SensorErrorModel& model, std::mt19937_64& rng,
                       int calibration_samples) {
  ReferenceMassSet masses;
  for (int slot = 0; slot < kTotalCells; ++slot) {
    cells_[slot] = LoadCellModel::random(model, rng);
    store_.cells[slot] = calibrate_cell(cells_[slot], masses.smallest(), calibration_samples, rng,
                                        slot % kCellsPerFoot);
  }
}

PadMasses SensorBank::measure(const PadMasses& true_masses, std::mt19937_64& rng) const {
  PadMasses out{};
  for (int slot = 0; slot < kTotalCells; ++slot) {
    out[slot] = estimate_mass(cells_[slot].sample(true_masses[slot], rng), store_.cells[slot]);
  }
  return out;
}

std::uint32_t MotionScript::duration_ms() const {
  std::uint32_t total = 0;
  for (const auto& f : frames) {
    total += f.duration_ms;
  }
  return total;
}

void MotionScript::validate(double joint_limit_deg) const {
  if (frames.empty()) {
    throw MalformedScript("motion script has no frames");
  }
  for (const auto& f : frames) {
    if (f.duration_ms == 0) {
      throw MalformedScript("motion frame duration must be positive");
    }
    for (double a : f.joints) {
      if (!std::isfinite(a) || std::abs(a) > joint_limit_deg) {
        throw MalformedScript("motion frame joint target outside limits");
      }
    }
  }
}

MotionSample play_motion(const MotionScript& script, double t_ms) {
  script.validate();
  double start = 0.0;
  for (std::size_t i = 0; i < script.frames.size(); ++i) {
    const auto& frame = script.frames[i];
    const double end = start + frame.duration_ms;
    if (t_ms < end) {
      MotionSample s;
      s.frame = i;
      s.support = frame.support;
      const auto& from = i == 0 ? frame.joints : script.frames[i - 1].joints;
      const double u = std::clamp((t_ms - start) / frame.duration_ms, 0.0, 1.0);
      for (int j = 0; j < kJointCount; ++j) {
        s.targets[j] = from[j] + u * (frame.joints[j] - from[j]);
      }
      return s;
    }
    start = end;
  }
  const auto& last = script.frames.back();
  return {last.joints, last.support, script.frames.size() - 1};
}

std::vector<SupportEvent> support_events(const MotionScript& script) {
  script.validate();
  std::vector<SupportEvent> events{{0, script.frames.front().support}};
  std::uint32_t t = 0;
  for (std::size_t i = 0; i < script.frames.size(); ++i) {
    if (i > 0 && script.frames[i].support != script.frames[i - 1].support) {
      events.push_back({t, script.frames[i].support});
    }
    t += script.frames[i].duration_ms;
  }
  return events;
}

MotionScript standard_lift_script(Foot lifted, const PlantParams& params, std::uint32_t double_ms,
                                  std::uint32_t lift_ms, std::uint32_t hold_ms,
                                  std::uint32_t lower_ms, std::uint32_t settle_ms) {
  // Lean by one foot offset so the CoM sits over the support foot centre.
  const double toward = lifted == Foot::Right ? -1.0 : 1.0;
  const double hip_gain = params.sensitivity_m_per_deg[static_cast<int>(Joint::HipLeft)] +
                          params.sensitivity_m_per_deg[static_cast<int>(Joint::HipRight)];
  const double hip = toward * params.foot_half_width_m / hip_gain;
  JointAngles neutral{};
  JointAngles lean{};
  lean[static_cast<int>(Joint::HipLeft)] = hip;
  lean[static_cast<int>(Joint::HipRight)] = hip;
  const Support single = lifted == Foot::Right ? Support::LeftOnly : Support::RightOnly;

  MotionScript script;
  script.frames = {{neutral, double_ms, Support::Double},
                   {lean, lift_ms, single},
                   {lean, hold_ms, single},
                   {neutral, lower_ms, single},
                   {neutral, settle_ms, Support::Double}};
  return script;
}

MotionScript double_support_script(std::uint32_t duration_ms) {
  MotionScript script;
  script.frames = {{JointAngles{}, duration_ms, Support::Double}};
  return script;
}

MotionScript parse_motion_script(const std::string& json_text) {
  MotionScript script;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    const auto& frames = doc.is_array() ? doc : doc.at("frames");
    for (const auto& f : frames) {
      MotionFrame frame;
      for (const auto& [name, value] : f.at("joints").items()) {
        const int j = joint_index(name);
        if (j < 0) {
          throw MalformedScript("unknown joint '" + name + "'");
        }
        frame.joints[j] = value.get<double>();
      }
      const auto duration = f.at("duration_ms").get<std::int64_t>();
      if (duration <= 0) {
        throw MalformedScript("motion frame duration must be positive");
      }
      frame.duration_ms = static_cast<std::uint32_t>(duration);
      frame.support = support_from_string(f.value("support", std::string("double")));
      script.frames.push_back(frame);
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedScript(std::string("motion script JSON: ") + e.what());
  }
  script.validate();
  return script;
}

std::string motion_script_to_json(const MotionScript& script) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : script.frames) {
    nlohmann::json joints = nlohmann::json::object();
    for (int j = 0; j < kJointCount; ++j) {
      joints[std::string(joint_name(static_cast<Joint>(j)))] = f.joints[j];
    }
    frames.push_back(
        {{"joints", joints}, {"duration_ms", f.duration_ms}, {"support", to_string(f.support)}});
  }
  return nlohmann::json{{"frames", frames}}.dump(2);
}

MotionScript load_motion_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoFailure("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_motion_script(ss.str());
}

} // namespace copbal
