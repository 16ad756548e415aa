#include <doctest.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <sstream>
#include <stdexcept>

#include "evcoord/baselines.hpp"
#include "evcoord/evaluation.hpp"
#include "oracles/fuzz.hpp"

using namespace evcoord;
using evcoord::testing::tiny_fleet;

namespace {

/// Consecutive days, each holding the same EVs given as {arrival slot, depart slots, charge slots}.
std::vector<EpisodeDay> repeated_days(const FleetConfig& cfg, int count, const std::vector<std::array<int, 3>>& evs,
                                      const std::string& first_day = "2015-01-01") {
  std::vector<EpisodeDay> days;
  const Date first = parse_date(first_day);
  for (int k = 0; k < count; ++k) {
    EpisodeDay day;
    day.date = Date{std::chrono::sys_days{first} + std::chrono::days{k}};
    const Timestamp start = day.start(cfg);
    int id = 0;
    for (const auto& e : evs) {
      Session s;
      s.station_id = "S" + std::to_string(id++);
      s.arrival = start + cfg.slot * (e[0] - 1);
      s.departure = s.arrival + cfg.slot * e[1];
      s.charge_slots = e[2];
      s.energy_kwh = 1.0;
      s.charge_rate_kw = 1.0;
      day.sessions.push_back(s);
    }
    days.push_back(std::move(day));
  }
  return days;
}

TrainingSetup exact_setup() {
  TrainingSetup setup;
  setup.exact_table = true;
  return setup;
}

}  // namespace

TEST_CASE("normalized cost") {
  const std::vector<double> opt{0.75};
  CHECK(normalized_cost(std::vector<double>{0.75}, opt) == 1.0);
  CHECK(normalized_cost(std::vector<double>{1.25}, opt) == doctest::Approx(5.0 / 3.0));
  // Zero-optimum days drop out of the mean.
  CHECK(normalized_cost(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.0}) == 2.0);
  CHECK_THROWS_AS(normalized_cost(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(normalized_cost(std::vector<double>{1.0}, std::vector<double>{0.0}), std::invalid_argument);
  CHECK_THROWS_AS(normalized_cost(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("evaluation on the example day") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  auto days = repeated_days(cfg, 2, {{1, 3, 2}, {1, 2, 1}});
  days.push_back(repeated_days(cfg, 1, {}, "2015-01-03")[0]);
  const Policy policy = train_policy(days, cfg, 200, 1, exact_setup());
  const EvalReport r = evaluate_policy(policy, days, cfg);
  REQUIRE(r.days.size() == 3);
  CHECK(r.days[0].opt_cost == 0.75);
  CHECK(r.days[0].bau_cost == 1.25);
  CHECK(r.days[2].status == DayStatus::kZeroOptimum);
  CHECK(r.days_used == 2);
  CHECK(r.days_excluded == 1);
  CHECK(r.c_bau == doctest::Approx(5.0 / 3.0));
  CHECK(r.c_rl == doctest::Approx(1.0));
  CHECK(r.rl_stranded == 0);

  nlohmann::json j = r;
  CHECK(j["c_opt"] == 1.0);
  CHECK(j.get<EvalReport>() == r);

  std::ostringstream csv;
  write_report_csv(csv, r);
  CHECK(csv.str().rfind("date,status,rl_cost,bau_cost,opt_cost,rl_ratio,bau_ratio,rl_stranded\n", 0) == 0);
}

TEST_CASE("over-capacity days are reported but excluded") {
  const FleetConfig cfg = tiny_fleet(1, 3);
  auto days = repeated_days(cfg, 1, {{1, 3, 1}});
  days.push_back(repeated_days(cfg, 1, {{1, 2, 1}, {1, 2, 1}}, "2015-01-02")[0]);
  const Policy policy = train_policy({days[0]}, cfg, 50, 1, exact_setup());
  const EvalReport r = evaluate_policy(policy, days, cfg);
  CHECK(r.days[1].status == DayStatus::kOverCapacity);
  CHECK(r.days_used == 1);
}

TEST_CASE("training sweep grid") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  const auto data = repeated_days(cfg, 12, {{1, 3, 2}, {2, 2, 1}});
  SplitSpec spec;
  spec.test_first = parse_date("2015-01-11");
  spec.test_last = parse_date("2015-01-12");
  spec.train_spans = {1, 2, 4};
  spec.window_days = 2;
  spec.runs = 2;
  spec.seed = 3;
  const TrainingSweep sweep = run_training_sweep(spec, {5, 20}, cfg, data, exact_setup());
  CHECK(sweep.cells.size() == 3 * 2 * 2);
  CHECK(sweep.summary.size() == 3 * 2);
  for (const auto& cell : sweep.cells) {
    CHECK(cell.present);
    CHECK(cell.train_last < "2015-01-11");
  }
  const auto& first = sweep.cells[0];
  CHECK(first.span == 1);
  CHECK(first.samples == 5);
  CHECK(first.run == 0);
  for (const auto& s : sweep.summary) {
    CHECK(s.runs_present == 2);
    CHECK(s.min_rl <= s.mean_rl);
    CHECK(s.mean_rl <= s.max_rl);
    CHECK(s.std_rl >= 0.0);
  }
  std::ostringstream csv;
  write_sweep_csv(csv, sweep);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6);

  // Same split and seed, same numbers.
  const TrainingSweep again = run_training_sweep(spec, {5, 20}, cfg, data, exact_setup());
  CHECK(sweep_to_json(again) == sweep_to_json(sweep));
}

TEST_CASE("training spans longer than the data are marked absent") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  const auto data = repeated_days(cfg, 6, {{1, 3, 2}});
  SplitSpec spec;
  spec.test_first = parse_date("2015-01-05");
  spec.test_last = parse_date("2015-01-06");
  spec.train_spans = {9};
  spec.window_days = 2;
  spec.runs = 1;
  const TrainingSweep sweep = run_training_sweep(spec, {5}, cfg, data, exact_setup());
  REQUIRE(sweep.cells.size() == 1);
  CHECK_FALSE(sweep.cells[0].present);
  CHECK(sweep.summary[0].runs_present == 0);
}

TEST_CASE("monthly sweep has one row per window") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  const auto data = repeated_days(cfg, 36, {{1, 3, 2}, {1, 2, 1}});
  MonthlySpec spec;
  spec.window_days = 3;
  spec.samples_per_day = 30;
  const auto rows = run_monthly_sweep(spec, cfg, data, exact_setup());
  REQUIRE(rows.size() == 12);
  CHECK(rows[0].skipped);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    CHECK_FALSE(rows[k].skipped);
    CHECK(rows[k].improvement == doctest::Approx(rows[k].report.c_bau - rows[k].report.c_rl));
  }
  std::ostringstream csv;
  write_monthly_csv(csv, rows);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 13);
}

TEST_CASE("no flexibility means no improvement") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  const auto data = repeated_days(cfg, 6, {{1, 2, 2}, {2, 1, 1}, {3, 1, 1}});
  MonthlySpec spec;
  spec.window_days = 3;
  spec.samples_per_day = 100;
  const auto rows = run_monthly_sweep(spec, cfg, data, exact_setup());
  REQUIRE(rows.size() == 2);
  REQUIRE_FALSE(rows[1].skipped);
  CHECK(rows[1].report.c_bau == doctest::Approx(1.0));
  CHECK(rows[1].improvement == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("scale one reproduces the plain evaluation") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  const auto days = repeated_days(cfg, 3, {{1, 3, 2}, {1, 2, 1}});
  const Policy policy = train_policy(days, cfg, 100, 9, exact_setup());
  const EvalReport plain = evaluate_policy(policy, days, cfg);
  const auto rows = run_scale_test(policy, days, {1, 2}, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].scale == 1);
  CHECK(rows[0].report.c_rl == plain.c_rl);
  CHECK(rows[0].report.c_bau == plain.c_bau);
  // BAU charges every car at once, so doubling the fleet leaves its ratio alone.
  CHECK(rows[1].report.c_bau == doctest::Approx(plain.c_bau));
  std::ostringstream csv;
  write_scale_csv(csv, rows);
  CHECK(csv.str().rfind("scale,n_max,c_rl,c_bau,rl_stranded\n", 0) == 0);
}
