#include "copbal/harness.hpp"

#include "copbal/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace copbal {

namespace {

std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == sep) {
    out.emplace_back();
  }
  return out;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) {
    throw ConfigError("not a number: '" + s + "'");
  }
  return v;
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() || line.front() == '#') {
      continue;
    }
    lines.push_back(line);
  }
  return lines;
}

SweepRow summarize(const PidGains& gains, const std::vector<TrialRecord>& trials) {
  SweepRow row;
  row.gains = gains;
  double rms_sum = 0.0;
  for (const auto& t : trials) {
    (t.outcome == Outcome::Fall ? row.falls : row.not_falls) += 1;
    rms_sum += t.rms_error;
  }
  const auto n = static_cast<double>(trials.size());
  row.success_pct = 100.0 * row.not_falls / n;
  row.mean_rms = rms_sum / n;
  return row;
}

} // namespace

const char* to_string(LiftPlan plan) {
  switch (plan) {
  case LiftPlan::Right:
    return "right";
  case LiftPlan::Left:
    return "left";
  case LiftPlan::Alternate:
    return "both";
  }
  return "?";
}

LiftPlan lift_plan_from_string(const std::string& text) {
  if (text == "right") {
    return LiftPlan::Right;
  }
  if (text == "left") {
    return LiftPlan::Left;
  }
  if (text == "both" || text == "alternate") {
    return LiftPlan::Alternate;
  }
  throw ConfigError("foot must be left, right or both");
}

void TrialConfig::validate() const {
  if (trials < 1) {
    throw ConfigError("trials must be >= 1");
  }
  if (!gains.valid()) {
    throw ConfigError("gains must be finite and non-negative");
  }
  if (!(channel.loss_prob >= 0.0 && channel.loss_prob <= 1.0) || channel.latency_base_ms < 0.0 ||
      channel.latency_jitter_ms < 0.0) {
    throw ConfigError("invalid channel model");
  }
  if (!(std::abs(tilt_deg) + std::abs(tilt_jitter_deg) < 15.0)) {
    throw ConfigError("tilt must stay below 15 degrees");
  }
  plant.validate();
  if (script) {
    script->validate();
  }
}

double rms_error(std::span<const double> series, double setpoint) {
  if (series.empty()) {
    throw EmptySeries("rms_error of an empty series");
  }
  double sum = 0.0;
  for (double v : series) {
    const double d = v - setpoint;
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(series.size()));
}

Foot trial_foot(const TrialConfig& config, int index) {
  switch (config.foot) {
  case LiftPlan::Right:
    return Foot::Right;
  case LiftPlan::Left:
    return Foot::Left;
  case LiftPlan::Alternate:
    break;
  }
  return index % 2 == 0 ? Foot::Right : Foot::Left;
}

std::uint64_t trial_seed(const TrialConfig& config, int index) {
  return config.seed + static_cast<std::uint64_t>(index);
}

EngineConfig engine_config_for(const TrialConfig& config, int index) {
  EngineConfig ec;
  ec.seed = trial_seed(config, index);
  ec.plant = config.plant;
  ec.sensor = config.sensor;
  ec.channel = config.channel;
  ec.control_enabled = config.control_enabled;
  ec.controller.roll_gains = config.gains;

  auto rng = make_rng(ec.seed, 7);
  const double jitter =
      std::uniform_real_distribution<double>(-1.0, 1.0)(rng) * config.tilt_jitter_deg;
  // The slope falls away from the support foot.
  const double outward = trial_foot(config, index) == Foot::Right ? -1.0 : 1.0;
  ec.plant.tilt_deg = outward * (config.tilt_deg + jitter);
  return ec;
}

TrialRecord run_trial(const TrialConfig& config, int index) {
  config.validate();
  const Foot lifted = trial_foot(config, index);
  const EngineConfig ec = engine_config_for(config, index);
  MotionScript script = config.script ? *config.script
                        : config.double_support_only
                            ? double_support_script(4000)
                            : standard_lift_script(lifted, ec.plant);
  BalanceEngine engine(ec, std::move(script));

  TrialRecord record;
  record.lifted = lifted;
  record.seed = ec.seed;
  std::vector<double> single_support_x;
  while (!engine.script_finished()) {
    const TickLog log = engine.tick();
    record.samples.push_back({log.t_ms, log.cop.x, log.cop.y, log.theta_e,
                              log.commands[static_cast<int>(Joint::Torso)],
                              log.commands[static_cast<int>(Joint::HipLeft)],
                              log.commands[static_cast<int>(Joint::AnkleLeft)], log.fallen});
    if (log.support != Support::Double && engine.setpoint_captured()) {
      single_support_x.push_back(log.cop.x);
    }
    if (log.fallen) {
      record.outcome = Outcome::Fall;
      break;
    }
  }
  record.setpoint_x = engine.controller().setpoints().cop_set_x;
  record.rms_samples = single_support_x.size();
  if (!single_support_x.empty()) {
    record.rms_error = rms_error(single_support_x, record.setpoint_x);
  }
  return record;
}

SweepReport run_sweep_serial(std::span<const PidGains> grid, const TrialConfig& base,
                             bool keep_trials) {
  if (grid.empty()) {
    throw ConfigError("sweep grid is empty");
  }
  base.validate();
  SweepReport report;
  for (const auto& gains : grid) {
    TrialConfig cfg = base;
    cfg.gains = gains;
    std::vector<TrialRecord> trials;
    for (int i = 0; i < cfg.trials; ++i) {
      trials.push_back(run_trial(cfg, i));
    }
    report.rows.push_back(summarize(gains, trials));
    if (keep_trials) {
      report.trials.push_back(std::move(trials));
    }
  }
  return report;
}

SweepReport run_sweep(std::span<const PidGains> grid, const TrialConfig& base, bool keep_trials) {
  if (grid.empty()) {
    throw ConfigError("sweep grid is empty");
  }
  base.validate();
  const auto rows = static_cast<std::ptrdiff_t>(grid.size());
  const auto per_row = static_cast<std::ptrdiff_t>(base.trials);
  const std::ptrdiff_t tasks = rows * per_row;
  std::vector<TrialRecord> results(static_cast<std::size_t>(tasks));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(tasks));

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t task = 0; task < tasks; ++task) {
    try {
      TrialConfig cfg = base;
      cfg.gains = grid[static_cast<std::size_t>(task / per_row)];
      results[task] = run_trial(cfg, static_cast<int>(task % per_row));
    } catch (...) {
      errors[task] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }

  SweepReport report;
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    std::vector<TrialRecord> trials(std::make_move_iterator(results.begin() + r * per_row),
                                    std::make_move_iterator(results.begin() + (r + 1) * per_row));
    report.rows.push_back(summarize(grid[static_cast<std::size_t>(r)], trials));
    if (keep_trials) {
      report.trials.push_back(std::move(trials));
    }
  }
  return report;
}

std::vector<PidGains> kp_grid() {
  std::vector<PidGains> g;
  for (double kp : {0.0, 0.05, 0.10, 0.15, 0.20, 0.25}) {
    g.push_back({kp, 0.0, 0.0});
  }
  return g;
}

std::vector<PidGains> ki_grid() {
  std::vector<PidGains> g;
  for (double ki : {0.01, 0.02, 0.04, 0.10, 0.20}) {
    g.push_back({0.1, ki, 0.0});
  }
  return g;
}

std::vector<PidGains> kd_grid() {
  std::vector<PidGains> g;
  for (double kd : {0.005, 0.010, 0.020, 0.050, 0.100}) {
    g.push_back({0.1, 0.0, kd});
  }
  return g;
}

std::vector<PidGains> bringup_grid() {
  auto g = kp_grid();
  for (const auto& grid : {ki_grid(), kd_grid()}) {
    g.insert(g.end(), grid.begin(), grid.end());
  }
  return g;
}

std::vector<PidGains> parse_grid_csv(const std::string& text) {
  std::vector<PidGains> grid;
  for (const auto& line : data_lines(text)) {
    const auto cells = split(line, ',');
    if (cells.size() != 3) {
      throw ConfigError("grid line must be kp,ki,kd: '" + line + "'");
    }
    if (cells[0] == "kp") {
      continue;
    }
    PidGains g{to_double(cells[0]), to_double(cells[1]), to_double(cells[2])};
    if (!g.valid()) {
      throw ConfigError("grid gains must be finite and non-negative");
    }
    grid.push_back(g);
  }
  if (grid.empty()) {
    throw ConfigError("sweep grid is empty");
  }
  return grid;
}

std::vector<PidGains> load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoFailure("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid_csv(ss.str());
}

std::string trial_csv(const TrialRecord& record) {
  std::string out = "t_ms,cop_x,cop_y,theta_e,torso,hip,ankle,fallen\n";
  for (const auto& s : record.samples) {
    out += std::to_string(s.t_ms) + ',' + fmt_exact(s.cop_x) + ',' + fmt_exact(s.cop_y) + ',' +
           fmt_exact(s.theta_e) + ',' + fmt_exact(s.torso) + ',' + fmt_exact(s.hip) + ',' +
           fmt_exact(s.ankle) + ',' + (s.fallen ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<TrialSample> parse_trial_csv(const std::string& text) {
  std::vector<TrialSample> samples;
  for (const auto& line : data_lines(text)) {
    if (line.rfind("t_ms", 0) == 0) {
      continue;
    }
    const auto c = split(line, ',');
    if (c.size() != 8) {
      throw ConfigError("trial CSV row needs 8 columns");
    }
    samples.push_back({static_cast<std::uint32_t>(std::stoul(c[0])), to_double(c[1]),
                       to_double(c[2]), to_double(c[3]), to_double(c[4]), to_double(c[5]),
                       to_double(c[6]), c[7] == "1"});
  }
  return samples;
}

std::string report_csv(const SweepReport& report) {
  std::string out = "kp,ki,kd,fall,not_fall,success_pct,rms_error\n";
  for (const auto& r : report.rows) {
    out += fmt_exact(r.gains.kp) + ',' + fmt_exact(r.gains.ki) + ',' + fmt_exact(r.gains.kd) +
           ',' + std::to_string(r.falls) + ',' + std::to_string(r.not_falls) + ',' +
           fmt_exact(r.success_pct) + ',' + fmt_exact(r.mean_rms) + '\n';
  }
  return out;
}

std::vector<SweepRow> parse_report_csv(const std::string& text) {
  std::vector<SweepRow> rows;
  for (const auto& line : data_lines(text)) {
    if (line.rfind("kp", 0) == 0) {
      continue;
    }
    const auto c = split(line, ',');
    if (c.size() != 7) {
      throw ConfigError("report CSV row needs 7 columns");
    }
    rows.push_back({{to_double(c[0]), to_double(c[1]), to_double(c[2])},
                    std::stoi(c[3]),
                    std::stoi(c[4]),
                    to_double(c[5]),
                    to_double(c[6])});
  }
  return rows;
}

std::string report_markdown(const SweepReport& report, const std::string& title) {
  std::string out;
  if (!title.empty()) {
    out += "### " + title + "\n\n";
  }
  out += "| PID | Fall | Not Fall | Success | RMS Error |\n";
  out += "|-----|------|----------|---------|-----------|\n";
  for (const auto& r : report.rows) {
    out += "| Kp = " + fmt_fixed(r.gains.kp, 2) + ", Ki = " + fmt_fixed(r.gains.ki, 2) +
           ", Kd = " + fmt_fixed(r.gains.kd, 3) + " | " + std::to_string(r.falls) + " | " +
           std::to_string(r.not_falls) + " | " + fmt_fixed(r.success_pct, 0) + " % | " +
           fmt_fixed(r.mean_rms, 4) + " |\n";
  }
  return out;
}

std::string trial_json(const TrialRecord& record) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : record.samples) {
    samples.push_back({{"t_ms", s.t_ms},
                       {"cop_x", s.cop_x},
                       {"cop_y", s.cop_y},
                       {"theta_e", s.theta_e},
                       {"torso", s.torso},
                       {"hip", s.hip},
                       {"ankle", s.ankle},
                       {"fallen", s.fallen}});
  }
  return nlohmann::json{{"outcome", record.outcome == Outcome::Fall ? "fall" : "not_fall"},
                        {"rms_error", record.rms_error},
                        {"setpoint_x", record.setpoint_x},
                        {"lifted", record.lifted == Foot::Right ? "right" : "left"},
                        {"seed", record.seed},
                        {"samples", samples}}
      .dump();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoFailure("cannot write " + path.string());
  }
  out << text;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* env = std::getenv("COP_SEED");
  if (env == nullptr || *env == '\0') {
    return std::nullopt;
  }
  char* end = nullptr;
  const auto v = std::strtoull(env, &end, 10);
  if (*end != '\0') {
    return std::nullopt;
  }
  return v;
}

} // namespace copbal
