// Command-line front end: batch trials, gain sweeps, calibration and the live service.

#include "copbal/calibration.hpp"
#include "copbal/errors.hpp"
#include "copbal/harness.hpp"
#include "copbal/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace copbal;

namespace {

struct TrialOptions {
  double kp = 0.1;
  double ki = 0.0;
  double kd = 0.005;
  double tilt_deg = 3.0;
  std::string foot = "both";
  int trials = 6;
  std::uint64_t seed = 1;
  bool no_control = false;
  double loss = 0.0;
  double latency_ms = 2.0;
  double jitter_ms = 6.0;
  std::string script;
};

void add_trial_options(CLI::App* cmd, TrialOptions& o, bool with_gains) {
  if (with_gains) {
    cmd->add_option("--kp", o.kp, "Proportional gain")->capture_default_str();
    cmd->add_option("--ki", o.ki, "Integral gain")->capture_default_str();
    cmd->add_option("--kd", o.kd, "Derivative gain")->capture_default_str();
    cmd->add_flag("--no-control", o.no_control, "Disable the balance controller");
  }
  cmd->add_option("--tilt-deg", o.tilt_deg, "Ground tilt, toward the outside of the support foot")
      ->capture_default_str();
  cmd->add_option("--foot", o.foot, "Lifted foot: right, left or both (alternating)")
      ->check(CLI::IsMember({"right", "left", "both", "alternate"}))
      ->capture_default_str();
  cmd->add_option("--trials", o.trials, "Trials per configuration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Base seed (COP_SEED overrides)")->capture_default_str();
  cmd->add_option("--loss", o.loss, "Packet loss probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--latency-ms", o.latency_ms, "Base link latency")->capture_default_str();
  cmd->add_option("--jitter-ms", o.jitter_ms, "Uniform latency jitter")->capture_default_str();
  cmd->add_option("--script", o.script, "Motion script JSON replacing the standard lift");
}

TrialConfig to_config(const TrialOptions& o) {
  TrialConfig c;
  c.gains = {o.kp, o.ki, o.kd};
  c.tilt_deg = o.tilt_deg;
  c.foot = lift_plan_from_string(o.foot);
  c.trials = o.trials;
  c.seed = seed_from_env().value_or(o.seed);
  c.control_enabled = !o.no_control;
  c.channel.loss_prob = o.loss;
  c.channel.latency_base_ms = o.latency_ms;
  c.channel.latency_jitter_ms = o.jitter_ms;
  if (!o.script.empty()) {
    c.script = load_motion_script(o.script);
  }
  c.validate();
  return c;
}

void write_sweep(const fs::path& out, const SweepReport& report, const std::string& title) {
  fs::create_directories(out);
  write_text(out / "report.csv", report_csv(report));
  write_text(out / "report.md", report_markdown(report, title));
}

void print_rows(const SweepReport& report) {
  std::printf("%8s %8s %8s %5s %8s %8s %10s\n", "kp", "ki", "kd", "fall", "not_fall", "success",
              "rms_error");
  for (const auto& r : report.rows) {
    std::printf("%8.3f %8.3f %8.3f %5d %8d %7.0f%% %10.4f\n", r.gains.kp, r.gains.ki, r.gains.kd,
                r.falls, r.not_falls, r.success_pct, r.mean_rms);
  }
}

int cmd_run(const TrialOptions& o, const fs::path& out) {
  const TrialConfig config = to_config(o);
  const std::vector<PidGains> grid{config.gains};
  const auto report = run_sweep(grid, config, true);
  write_sweep(out, report, config.control_enabled ? "Trial run" : "Trial run (no control)");
  const auto& trials = report.trials.front();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    write_text(out / ("trial_" + std::to_string(i) + ".csv"), trial_csv(t));
    std::printf("trial %zu: lift %s, %s, rms %.4f over %zu ticks\n", i,
                t.lifted == Foot::Left ? "left" : "right",
                t.outcome == Outcome::Fall ? "Fall" : "NotFall", t.rms_error, t.rms_samples);
  }
  print_rows(report);
  return 0;
}

int cmd_sweep(const TrialOptions& o, const fs::path& grid, const fs::path& out, bool serial) {
  const TrialConfig config = to_config(o);
  const auto points = load_grid(grid);
  const auto report = serial ? run_sweep_serial(points, config) : run_sweep(points, config);
  write_sweep(out, report, "Gain sweep");
  print_rows(report);
  return 0;
}

int cmd_bringup(const TrialOptions& o, const fs::path& out) {
  const TrialConfig config = to_config(o);
  const struct {
    const char* name;
    const char* title;
    std::vector<PidGains> grid;
  } tables[] = {{"kp", "Kp", kp_grid()}, {"ki", "Ki", ki_grid()}, {"kd", "Kd", kd_grid()}};
  fs::create_directories(out);
  std::string md;
  SweepReport all;
  for (const auto& t : tables) {
    const auto report = run_sweep(t.grid, config);
    write_text(out / (std::string("report_") + t.name + ".csv"), report_csv(report));
    md += report_markdown(report, std::string("Effect of ") + t.title) + "\n";
    all.rows.insert(all.rows.end(), report.rows.begin(), report.rows.end());
  }
  md += "## Grid points at 100%\n\n";
  int full = 0;
  for (const auto& r : all.rows) {
    if (r.not_falls == config.trials) {
      char line[128];
      std::snprintf(line, sizeof line, "- kp=%g ki=%g kd=%g (rms %.4f)\n", r.gains.kp, r.gains.ki,
                    r.gains.kd, r.mean_rms);
      md += line;
      ++full;
    }
  }
  if (full == 0) {
    md += "none\n";
  }
  write_text(out / "report.csv", report_csv(all));
  write_text(out / "report.md", md);
  print_rows(all);
  std::printf("%d grid point(s) at 100%%\n", full);
  return 0;
}

int cmd_calibrate(int cell, double tare, double loaded, double mass, const std::string& store) {
  const auto coeffs = fit_two_point(tare, loaded, mass, cell % kCellsPerFoot);
  std::printf("cell %d: gradient %.9g g/count, offset %.9g counts\n", cell, coeffs.gradient,
              coeffs.offset_counts);
  if (!store.empty()) {
    if (cell < 0 || cell >= kTotalCells) {
      throw ConfigError("cell must be in 0.." + std::to_string(kTotalCells - 1));
    }
    CalibrationStore s = fs::exists(store) ? load_store(store) : CalibrationStore::defaults();
    s.cells[cell] = coeffs;
    save_store(s, store);
    std::printf("saved to %s\n", store.c_str());
  }
  return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(std::uint16_t port, const std::string& store, bool udp, const TrialOptions& o) {
  LiveOptions options;
  options.store_path = store;
  options.udp = udp;
  options.trial_tilt_deg = o.tilt_deg;
  options.engine.seed = seed_from_env().value_or(o.seed);
  options.engine.controller.roll_gains = {o.kp, o.ki, o.kd};
  options.engine.control_enabled = !o.no_control;
  options.engine.channel.loss_prob = o.loss;
  options.engine.channel.latency_base_ms = o.latency_ms;
  options.engine.channel.latency_jitter_ms = o.jitter_ms;
  LiveSession session(options);
  LiveServer server(session, port);
  server.start();
  std::printf("listening on http://127.0.0.1:%u (ws at /ws)\n", server.port());
  std::fflush(stdout);
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wireless CoP balance system: trials, sweeps, calibration, live service"};
  app.require_subcommand(1);

  TrialOptions run_opts;
  fs::path run_out = "out";
  auto* run = app.add_subcommand("run", "Run seeded lift trials");
  add_trial_options(run, run_opts, true);
  run->add_option("--out", run_out, "Output directory")->capture_default_str();

  TrialOptions sweep_opts;
  fs::path grid;
  fs::path sweep_out = "sweep";
  bool serial = false;
  auto* sweep = app.add_subcommand("sweep", "Sweep a gain grid (CSV: kp,ki,kd)");
  add_trial_options(sweep, sweep_opts, false);
  sweep->add_option("--grid", grid, "Grid file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "Output directory")->capture_default_str();
  sweep->add_flag("--serial", serial, "Use the single-threaded reference sweep");

  TrialOptions bringup_opts;
  fs::path bringup_out = "bringup";
  auto* bringup = app.add_subcommand("bringup", "Sweep the Kp, Ki and Kd tables");
  add_trial_options(bringup, bringup_opts, false);
  bringup->add_option("--out", bringup_out, "Output directory")->capture_default_str();

  int cell = 0;
  double tare = 0.0, loaded = 0.0, mass = 0.0;
  std::string cal_store;
  auto* calibrate = app.add_subcommand("calibrate", "Two-point calibration of one load cell");
  calibrate->add_option("--cell", cell, "Cell slot 0-7 (left foot 0-3, right 4-7)")->required();
  calibrate->add_option("--tare", tare, "Raw counts with no load")->required();
  calibrate->add_option("--loaded", loaded, "Raw counts under the reference mass")->required();
  calibrate->add_option("--mass", mass, "Reference mass in grams")->required();
  calibrate->add_option("--store", cal_store, "Calibration store to update");

  TrialOptions serve_opts;
  std::uint16_t port = 8080;
  std::string serve_store = "calibration.bin";
  bool udp = false;
  auto* serve = app.add_subcommand("serve", "Live HTTP + WebSocket service");
  serve->add_option("--port", port, "TCP port")->capture_default_str();
  serve->add_option("--store", serve_store, "Calibration store path")->capture_default_str();
  serve->add_flag("--udp", udp, "Carry foot packets over loopback UDP");
  add_trial_options(serve, serve_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return cmd_run(run_opts, run_out);
    }
    if (*sweep) {
      return cmd_sweep(sweep_opts, grid, sweep_out, serial);
    }
    if (*bringup) {
      return cmd_bringup(bringup_opts, bringup_out);
    }
    if (*calibrate) {
      return cmd_calibrate(cell, tare, loaded, mass, cal_store);
    }
    if (*serve) {
      return cmd_serve(port, serve_store, udp, serve_opts);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
