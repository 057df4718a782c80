#include "copbal/errors.hpp"
#include "copbal/harness.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <random>

using namespace copbal;
using doctest::Approx;

namespace {

TrialConfig quick(double kp = 0.1, double kd = 0.005) {
  TrialConfig c;
  c.gains = {kp, 0.0, kd};
  c.trials = 2;
  c.seed = 3;
  return c;
}

} // namespace

TEST_CASE("rms_error reference examples") {
  const std::vector<double> flat(10, 0.4);
  CHECK(rms_error(flat, 0.4) == 0.0);
  const std::vector<double> pm{1.5, -0.5};
  CHECK(rms_error(pm, 0.5) == 1.0);
  CHECK_THROWS_AS(rms_error(std::vector<double>{}, 0.0), EmptySeries);
}

TEST_CASE("rms_error equals the two-pass oracle") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v(1 + rng() % 400);
    for (auto& x : v) {
      x = u(rng);
    }
    const double sp = u(rng);
    CHECK(std::abs(rms_error(v, sp) - oracle::two_pass_rms(v, sp)) <= 1e-12);
  }
}

TEST_CASE("uncontrolled lift falls; quiet double support does not") {
  auto c = quick();
  c.control_enabled = false;
  for (int i = 0; i < 2; ++i) {
    const auto r = run_trial(c, i);
    CHECK(r.outcome == Outcome::Fall);
    CHECK(r.samples.back().fallen);
  }

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> g(0.0, 0.3);
  for (int i = 0; i < 4; ++i) {
    TrialConfig d = quick(g(rng), g(rng) * 0.1);
    d.tilt_deg = 0.0;
    d.tilt_jitter_deg = 0.0;
    d.double_support_only = true;
    const auto r = run_trial(d, i);
    CHECK(r.outcome == Outcome::NotFall);
    CHECK(r.rms_samples == 0);
  }
}

TEST_CASE("controlled lift stays up at the default gains") {
  const auto c = quick();
  for (int i = 0; i < 2; ++i) {
    const auto r = run_trial(c, i);
    CHECK(r.outcome == Outcome::NotFall);
    CHECK(r.rms_samples > 0);
    CHECK(r.lifted == (i == 0 ? Foot::Right : Foot::Left));
  }
}

TEST_CASE("trial logs are byte-identical per seed") {
  const auto c = quick();
  CHECK(trial_csv(run_trial(c, 0)) == trial_csv(run_trial(c, 0)));
  auto other = c;
  other.seed = 4;
  CHECK(trial_csv(run_trial(c, 0)) != trial_csv(run_trial(other, 0)));
}

TEST_CASE("trial seeds and feet") {
  TrialConfig c;
  c.seed = 10;
  CHECK(trial_seed(c, 0) == 10);
  CHECK(trial_seed(c, 5) == 15);
  CHECK(trial_foot(c, 0) == Foot::Right);
  CHECK(trial_foot(c, 1) == Foot::Left);
  c.foot = LiftPlan::Left;
  CHECK(trial_foot(c, 0) == Foot::Left);
  // Tilt falls away from the support foot, within the jitter band.
  c.foot = LiftPlan::Right;
  const double tilt = engine_config_for(c, 0).plant.tilt_deg;
  CHECK(tilt <= -2.75);
  CHECK(tilt >= -3.25);
}

TEST_CASE("config validation") {
  TrialConfig c;
  c.trials = 0;
  CHECK_THROWS_AS(run_trial(c), ConfigError);
  c = TrialConfig{};
  c.gains.kp = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrialConfig{};
  c.channel.loss_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(run_sweep(std::vector<PidGains>{}, TrialConfig{}), ConfigError);
  CHECK_THROWS_AS(lift_plan_from_string("both feet"), ConfigError);
}

TEST_CASE("sweep accounting, singleton consistency and parallel equivalence") {
  const std::vector<PidGains> grid{{0.0, 0.0, 0.0}, {0.1, 0.0, 0.005}, {0.1, 0.0, 0.1}};
  TrialConfig base;
  base.trials = 3;
  base.seed = 21;
  const auto par = run_sweep(grid, base, true);
  const auto ser = run_sweep_serial(grid, base, true);
  CHECK(report_csv(par) == report_csv(ser));
  REQUIRE(par.rows.size() == grid.size());
  for (std::size_t r = 0; r < grid.size(); ++r) {
    const auto& row = par.rows[r];
    CHECK(row.falls + row.not_falls == base.trials);
    CHECK(row.success_pct == Approx(100.0 * row.not_falls / base.trials));
    CHECK(row.gains == grid[r]);
    for (int i = 0; i < base.trials; ++i) {
      CHECK(trial_csv(par.trials[r][i]) == trial_csv(ser.trials[r][i]));
    }
  }

  TrialConfig single = base;
  single.gains = grid[1];
  const auto one = run_sweep(std::span(grid).subspan(1, 1), base, true);
  double rms = 0.0;
  int falls = 0;
  for (int i = 0; i < base.trials; ++i) {
    const auto r = run_trial(single, i);
    CHECK(trial_csv(r) == trial_csv(one.trials[0][i]));
    rms += r.rms_error;
    falls += r.outcome == Outcome::Fall;
  }
  CHECK(one.rows[0].falls == falls);
  CHECK(one.rows[0].mean_rms == Approx(rms / base.trials).epsilon(1e-15));
}

TEST_CASE("CSV and JSON exports re-parse to the records") {
  const auto r = run_trial(quick(), 1);
  CHECK(parse_trial_csv(trial_csv(r)) == r.samples);

  const auto j = nlohmann::json::parse(trial_json(r));
  REQUIRE(j["samples"].size() == r.samples.size());
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    CHECK(j["samples"][i]["cop_x"].get<double>() == r.samples[i].cop_x);
    CHECK(j["samples"][i]["t_ms"].get<std::uint32_t>() == r.samples[i].t_ms);
  }
  CHECK(j["rms_error"].get<double>() == r.rms_error);
  CHECK(j["lifted"] == "left");

  SweepReport rep;
  rep.rows = {{{0.1, 0.02, 0.005}, 1, 5, 100.0 * 5 / 6, 0.123456789012345},
              {{0.0, 0.0, 0.0}, 6, 0, 0.0, 0.5}};
  const auto back = parse_report_csv(report_csv(rep));
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].gains == rep.rows[i].gains);
    CHECK(back[i].falls == rep.rows[i].falls);
    CHECK(back[i].not_falls == rep.rows[i].not_falls);
    CHECK(back[i].success_pct == rep.rows[i].success_pct);
    CHECK(back[i].mean_rms == rep.rows[i].mean_rms);
  }
  const auto md = report_markdown(rep, "Effect of Kp");
  CHECK(md.find("| Kp = 0.10, Ki = 0.02, Kd = 0.005 | 1 | 5 | 83 % | 0.1235 |") !=
        std::string::npos);
}

TEST_CASE("grid files") {
  const auto g = parse_grid_csv("kp,ki,kd\n# comment\n0.1,0,0.005\r\n0.2,0.01,0\n");
  REQUIRE(g.size() == 2);
  CHECK(g[1] == PidGains{0.2, 0.01, 0.0});
  CHECK_THROWS_AS(parse_grid_csv("0.1,0\n"), ConfigError);
  CHECK_THROWS_AS(parse_grid_csv("a,b,c\n"), ConfigError);
  CHECK_THROWS_AS(parse_grid_csv("kp,ki,kd\n"), ConfigError);
  CHECK(kp_grid().size() == 6);
  CHECK(ki_grid().size() == 5);
  CHECK(kd_grid().size() == 5);
  CHECK(bringup_grid().size() == 16);
}

TEST_CASE("COP_SEED override") {
  ::setenv("COP_SEED", "31337", 1);
  CHECK(seed_from_env() == 31337u);
  ::setenv("COP_SEED", "abc", 1);
  CHECK_FALSE(seed_from_env().has_value());
  ::unsetenv("COP_SEED");
  CHECK_FALSE(seed_from_env().has_value());
}

TEST_CASE("packet loss does not improve balance") {
  // One-sided two-proportion z-test: fail only if the lossy link does
  // significantly better than the clean one at the 95 % level.
  TrialConfig clean;
  clean.trials = 60;
  clean.seed = 500;
  TrialConfig lossy = clean;
  lossy.channel.loss_prob = 0.5;
  const std::vector<PidGains> grid{clean.gains};
  const auto a = run_sweep(grid, clean).rows[0];
  const auto b = run_sweep(grid, lossy).rows[0];
  const double n = clean.trials;
  const double p1 = a.not_falls / n;
  const double p2 = b.not_falls / n;
  const double pooled = (a.not_falls + b.not_falls) / (2.0 * n);
  const double se = std::sqrt(std::max(pooled * (1.0 - pooled) * 2.0 / n, 1e-12));
  MESSAGE("success clean " << p1 << ", lossy " << p2);
  CHECK((p2 - p1) / se < 1.645);
}
