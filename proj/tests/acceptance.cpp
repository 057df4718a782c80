// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "copbal/calibration.hpp"
#include "copbal/cop.hpp"
#include "copbal/engine.hpp"
#include "copbal/harness.hpp"
#include "copbal/telemetry.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>

using namespace copbal;

namespace {

// Pinned tolerances.
constexpr double kFitRelTol = 1e-9;
constexpr double kCalMaxErrorG = 25.0;
constexpr double kCopTol = 1e-9;
constexpr double kDoubleSupportMaxAbsX = 0.5;
constexpr double kSingleSupportMinAbsX = 0.8;
constexpr int kMaxKdSuccesses = 2;
constexpr double kDeliveryTol = 0.02;
constexpr double kRmsTol = 1e-12;
constexpr double kCalBudgetS = 5.0;
constexpr double kCopBudgetS = 5.0;
constexpr double kGridBudgetS = 180.0;

struct Result {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Result()>& criterion) {
  const auto t0 = std::chrono::steady_clock::now();
  Result r;
  try {
    r = criterion();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] %-22s %s (%.2f s)\n", r.pass ? "PASS" : "FAIL", name, r.detail.c_str(), s);
  std::fflush(stdout);
  failures += r.pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Result calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  double worst_rel = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto cell = LoadCellModel::random(SensorErrorModel{}, rng);
    const double m = 50.0;
    const auto c = fit_two_point(cell.offset_counts(), cell.offset_counts() + m / cell.gradient(), m);
    worst_rel = std::max(worst_rel, std::abs(c.gradient - cell.gradient()) / cell.gradient());
    worst_rel = std::max(worst_rel, std::abs(c.offset_counts - cell.offset_counts()) /
                                        std::max(1.0, std::abs(cell.offset_counts())));
  }

  const SensorErrorModel model;
  double worst_g = 0.0;
  double least_g = 1e9;
  for (int i = 0; i < 1000; ++i) {
    const auto cell = LoadCellModel::random(model, rng);
    const auto coeffs = calibrate_cell(cell, model.anchor_mass_g, 4096, rng);
    const auto ch = characterize(cell, coeffs, ReferenceMassSet(), 16, rng);
    worst_g = std::max(worst_g, ch.max_abs_error_g);
    least_g = std::min(least_g, ch.max_abs_error_g);
  }
  const double s = seconds_since(t0);
  const bool pass = worst_rel <= kFitRelTol && least_g >= 0.0 && worst_g <= kCalMaxErrorG &&
                    s < kCalBudgetS;
  return {pass, fmt("noiseless rel err %.2e (<= %.0e); per-cell max error %.1f..%.1f g "
                    "(in [0, %.0f]); %.2f s (< %.0f)",
                    worst_rel, kFitRelTol, least_g, worst_g, kCalMaxErrorG, s, kCalBudgetS)};
}

RobotCop pipeline(const std::array<double, 8>& m) {
  const auto l = foot_cop(std::span<const double, 4>(m.data(), 4));
  const auto r = foot_cop(std::span<const double, 4>(m.data() + 4, 4));
  return robot_cop(l, r);
}

Result cop_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> u(0.0, 600.0);
  double worst = 0.0;
  bool scale_ok = true;
  bool mirror_ok = true;
  const int mirror[8] = {5, 4, 7, 6, 1, 0, 3, 2};
  for (int i = 0; i < 1000; ++i) {
    std::array<double, 8> m{};
    for (auto& v : m) {
      v = u(rng);
    }
    m[1] += 25.0;
    m[6] += 25.0;
    const auto got = pipeline(m);
    const auto want = oracle::eight_cell_centroid(m);
    worst = std::max({worst, std::abs(got.x - want.x), std::abs(got.y - want.y)});

    auto scaled = m;
    for (auto& v : scaled) {
      v *= 8.0;
    }
    const auto g2 = pipeline(scaled);
    scale_ok = scale_ok && g2.x == got.x && g2.y == got.y;

    // Left/right mirror image of a load: symmetric halves give X = 0 exactly.
    std::array<double, 8> sym = m;
    for (int c = 0; c < 4; ++c) {
      sym[mirror[c]] = m[c];
    }
    mirror_ok = mirror_ok && pipeline(sym).x == 0.0;
  }
  const double s = seconds_since(t0);
  return {worst <= kCopTol && scale_ok && mirror_ok && s < kCopBudgetS,
          fmt("max |robot_cop - centroid| %.2e (<= %.0e); scale invariance %s; mirror X=0 %s; "
              "%.2f s (< %.0f)",
              worst, kCopTol, scale_ok ? "exact" : "BROKEN", mirror_ok ? "exact" : "BROKEN", s,
              kCopBudgetS)};
}

double mean_x(const TrialRecord& r, std::uint32_t from, std::uint32_t to) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : r.samples) {
    if (s.t_ms >= from && s.t_ms < to) {
      sum += s.cop_x;
      ++n;
    }
  }
  return n ? sum / n : std::nan("");
}

Result signatures() {
  TrialConfig c;
  c.tilt_deg = 0.0;
  c.tilt_jitter_deg = 0.0;
  c.control_enabled = false;
  c.trials = 1;
  c.foot = LiftPlan::Right;  // left foot supports
  const auto left_support = run_trial(c);
  c.foot = LiftPlan::Left;
  const auto right_support = run_trial(c);
  const double dbl = mean_x(left_support, 500, 2000);
  const double left = mean_x(left_support, 2600, 5400);
  const double right = mean_x(right_support, 2600, 5400);
  const bool pass = std::abs(dbl) < kDoubleSupportMaxAbsX && left < -kSingleSupportMinAbsX &&
                    right > kSingleSupportMinAbsX && left_support.outcome == Outcome::NotFall &&
                    right_support.outcome == Outcome::NotFall;
  return {pass, fmt("double X=%.3f (|X| < %.1f); left support X=%.3f (< -%.1f); "
                    "right support X=%.3f (> +%.1f)",
                    dbl, kDoubleSupportMaxAbsX, left, kSingleSupportMinAbsX, right,
                    kSingleSupportMinAbsX)};
}

Result balance() {
  const auto t0 = std::chrono::steady_clock::now();
  TrialConfig base;  // 3 degree tilt, 6 seeded trials, alternating feet

  TrialConfig off = base;
  off.control_enabled = false;
  off.gains = {0.0, 0.0, 0.0};
  const std::vector<PidGains> zero{off.gains};
  const auto uncontrolled = run_sweep(zero, off).rows[0];

  const auto grid = bringup_grid();
  const auto sweep = run_sweep(grid, base);
  const double s = seconds_since(t0);

  double lowest_failing_rms = 1e9;
  bool any_failing = false;
  for (const auto& r : sweep.rows) {
    if (r.not_falls == 0) {
      any_failing = true;
      lowest_failing_rms = std::min(lowest_failing_rms, r.mean_rms);
    }
  }
  int winners = 0;
  double best_rms = 1e9;
  for (const auto& r : sweep.rows) {
    if (r.not_falls == base.trials && (!any_failing || r.mean_rms < lowest_failing_rms)) {
      ++winners;
      best_rms = std::min(best_rms, r.mean_rms);
    }
  }
  int kd_successes = -1;
  for (const auto& r : sweep.rows) {
    if (r.gains == PidGains{0.1, 0.0, 0.10}) {
      kd_successes = r.not_falls;
    }
  }
  const bool pass = uncontrolled.falls == base.trials && winners > 0 && kd_successes >= 0 &&
                    kd_successes <= kMaxKdSuccesses && s < kGridBudgetS;
  return {pass, fmt("uncontrolled falls %d/%d; %d grid point(s) 6/6 with RMS below every 0/6 "
                    "point (best %.3f < %.3f); Kd=0.10 success %d/6 (<= %d); grid %.1f s (< %.0f)",
                    uncontrolled.falls, base.trials, winners, best_rms, lowest_failing_rms,
                    kd_successes, kMaxKdSuccesses, s, kGridBudgetS)};
}

Result telemetry() {
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> mass(-40.0, 2500.0);
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  int round_trip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    FootCopSample s;
    s.foot = rng() & 1 ? Foot::Left : Foot::Right;
    s.seq = static_cast<std::uint16_t>(rng());
    s.timestamp_ms = static_cast<std::uint32_t>(rng());
    for (auto& m : s.per_cell) {
      m = mass(rng);
    }
    s.f_total = mass(rng);
    s.x_cop = pos(rng);
    s.y_cop = pos(rng);
    const auto q = quantize(s);
    const auto back = decode(encode(q));
    if (!std::holds_alternative<FootCopSample>(back) || std::get<FootCopSample>(back) != q) {
      ++round_trip_failures;
    }
  }

  FootCopSample ref;
  ref.per_cell = {250, 250, 250, 250};
  ref.f_total = 1000;
  const auto packet = encode(ref);
  int undetected = 0;
  for (std::size_t bit = 0; bit < packet.size() * 8; ++bit) {
    auto bad = packet;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    undetected += std::holds_alternative<FootCopSample>(decode(bad)) ? 1 : 0;
  }

  double worst_delivery = 0.0;
  for (double loss : {0.0, 0.1, 0.25, 0.5, 0.9}) {
    Channel ch({loss, 2.0, 6.0, false, 40 + static_cast<std::uint64_t>(loss * 100)});
    std::size_t delivered = 0;
    for (std::uint32_t i = 0; i < 10000; ++i) {
      ch.submit(packet, i * 25);
      delivered += ch.step(i * 25).size();
    }
    delivered += ch.step(std::uint32_t{1} << 30).size();
    worst_delivery = std::max(worst_delivery, std::abs(delivered / 1e4 - (1.0 - loss)));
  }

  // 1 s outage in mid single support: once the receiver declares the link
  // stale the controller output must not change at all.
  TrialConfig tc;
  const auto ec = engine_config_for(tc, 0);
  BalanceEngine engine(ec, standard_lift_script(Foot::Right, ec.plant));
  engine.set_packet_sink([&engine](std::vector<std::uint8_t> bytes, std::uint32_t now) {
    if (now < 3000 || now >= 4000) {
      engine.receiver().accept(bytes, now);
    }
  });
  int stale_ticks = 0;
  int changed = 0;
  bool have_prev = false;
  BalanceController::Output prev{};
  while (!engine.script_finished() && !engine.fallen()) {
    const auto log = engine.tick();
    const auto& out = engine.controller().last_output();
    if (log.t_ms >= 3000 && log.t_ms < 4000 && !log.fresh) {
      ++stale_ticks;
      if (have_prev && (std::memcmp(&out.offsets, &prev.offsets, sizeof out.offsets) != 0 ||
                        std::memcmp(&out.theta_roll, &prev.theta_roll, sizeof(double)) != 0 ||
                        !out.frozen)) {
        ++changed;
      }
      prev = out;
      have_prev = true;
    }
  }
  const bool pass = round_trip_failures == 0 && undetected == 0 &&
                    worst_delivery <= kDeliveryTol && stale_ticks >= 10 && changed == 0;
  return {pass, fmt("round trip failures %d/10000; undetected bit flips %d/%zu; delivery "
                    "deviation %.4f (<= %.2f); frozen output over %d stale ticks, %d changed",
                    round_trip_failures, undetected, packet.size() * 8, worst_delivery,
                    kDeliveryTol, stale_ticks, changed)};
}

Result determinism() {
  TrialConfig c;
  c.seed = 77;
  c.channel.loss_prob = 0.2;
  bool trials_same = true;
  for (int i = 0; i < c.trials; ++i) {
    trials_same = trials_same && trial_csv(run_trial(c, i)) == trial_csv(run_trial(c, i));
  }
  const auto grid = kd_grid();
  const auto a = run_sweep(grid, c, true);
  const auto b = run_sweep(grid, c, true);
  bool sweep_same = report_csv(a) == report_csv(b);
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (int i = 0; i < c.trials; ++i) {
      sweep_same = sweep_same && trial_csv(a.trials[r][i]) == trial_csv(b.trials[r][i]);
    }
  }
  const bool serial_same = report_csv(run_sweep_serial(grid, c)) == report_csv(a);
  return {trials_same && sweep_same && serial_same,
          fmt("trial logs %s; sweep logs %s; parallel vs serial sweep %s",
              trials_same ? "identical" : "DIFFER", sweep_same ? "identical" : "DIFFER",
              serial_same ? "identical" : "DIFFER")};
}

Result rms() {
  std::mt19937_64 rng(7007);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> v(1 + rng() % 1000);
    for (auto& x : v) {
      x = u(rng);
    }
    const double sp = u(rng);
    worst = std::max(worst, std::abs(rms_error(v, sp) - oracle::two_pass_rms(v, sp)));
  }
  // Also on real trial logs.
  TrialConfig c;
  c.trials = 2;
  for (int i = 0; i < c.trials; ++i) {
    const auto r = run_trial(c, i);
    std::vector<double> xs;
    for (const auto& s : r.samples) {
      if (s.t_ms >= 2000 && s.t_ms < 6000) {
        xs.push_back(s.cop_x);
      }
    }
    if (xs.size() == r.rms_samples) {
      worst = std::max(worst, std::abs(r.rms_error - oracle::two_pass_rms(xs, r.setpoint_x)));
    } else {
      worst = 1.0;
    }
  }
  return {worst <= kRmsTol, fmt("max |rms - two-pass oracle| %.2e (<= %.0e)", worst, kRmsTol)};
}

} // namespace

int main() {
  report("calibration", calibration);
  report("cop-oracle", cop_oracle);
  report("support-signatures", signatures);
  report("balance", balance);
  report("telemetry", telemetry);
  report("determinism", determinism);
  report("rms-oracle", rms);
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
