#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "evcoord/baselines.hpp"
#include "evcoord/errors.hpp"
#include "oracles/brute_force.hpp"
#include "oracles/fuzz.hpp"

using namespace evcoord;
using evcoord::testing::tiny_fleet;

namespace {

std::vector<std::vector<EvDemand>> example_day() {
  std::vector<std::vector<EvDemand>> a(4);
  a[1] = {{3, 2}, {2, 1}};
  return a;
}

std::vector<std::vector<EvDemand>> identical_cars(int cars, int s_max) {
  std::vector<std::vector<EvDemand>> a(static_cast<std::size_t>(s_max) + 1);
  a[1].assign(static_cast<std::size_t>(cars), EvDemand{4, 1});
  return a;
}

}  // namespace

TEST_CASE("BAU on the example day") {
  const DayRollout r = bau_rollout(example_day(), tiny_fleet(2, 3));
  CHECK(r.loads == std::vector<int>{2, 1, 0});
  CHECK(r.cost == 1.25);
  CHECK(r.stranded == 0);
  CHECK(r.transitions.size() == 3);
}

TEST_CASE("BAU on an empty day") {
  const DayRollout r = bau_rollout(std::vector<std::vector<EvDemand>>(4), tiny_fleet(2, 3));
  CHECK(r.cost == 0.0);
}

TEST_CASE("offline optimum on the example day") {
  const Schedule s = offline_optimum(example_day(), tiny_fleet(2, 3));
  CHECK(s.loads == std::vector<int>{1, 1, 1});
  CHECK(s.cost == 0.75);
  CHECK(evcoord::testing::brute_force_optimum(example_day(), 3, 2) == 0.75);
}

TEST_CASE("two identical cars, then doubled") {
  const Schedule two = offline_optimum(identical_cars(2, 4), tiny_fleet(2, 4));
  CHECK(two.cost == 0.5);
  CHECK(std::count(two.loads.begin(), two.loads.end(), 1) == 2);
  CHECK(std::count(two.loads.begin(), two.loads.end(), 0) == 2);
  const Schedule four = offline_optimum(identical_cars(4, 4), tiny_fleet(4, 4));
  CHECK(four.loads == std::vector<int>{1, 1, 1, 1});
  CHECK(four.cost == 0.25);
}

TEST_CASE("DP oracle on small days") {
  const DpResult r = dp_oracle(example_day(), tiny_fleet(2, 3), 100000);
  CHECK(r.optimal_return == 0.75);
  CHECK(r.first_action.charged == std::vector<int>{0, 1, 0});

  std::vector<std::vector<EvDemand>> single(3);
  single[1] = {{2, 1}};
  const DpResult one = dp_oracle(single, tiny_fleet(1, 2), 1000);
  CHECK(one.optimal_return == 1.0);
  CHECK(one.optimal_first_actions.size() == 2);
}

TEST_CASE("DP refuses past its budget") {
  CHECK_THROWS_AS(dp_oracle(example_day(), tiny_fleet(2, 3), 2), BudgetExceeded);
}

TEST_CASE("infeasible demands are rejected") {
  std::vector<std::vector<EvDemand>> late(4);
  late[3] = {{2, 1}};
  CHECK_THROWS_AS(offline_optimum(late, tiny_fleet(2, 3)), InfeasibleSessionError);
}

TEST_CASE("oracles agree with each other and with brute force") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 150; ++trial) {
    const int s_max = 1 + static_cast<int>(rng() % 5);
    const int n_max = 1 + static_cast<int>(rng() % 4);
    const FleetConfig cfg = tiny_fleet(n_max, s_max);
    const auto arrivals = evcoord::testing::random_arrivals(cfg, rng, 5);
    const Schedule opt = offline_optimum(arrivals, cfg);
    const double brute = evcoord::testing::brute_force_optimum(arrivals, s_max, n_max);
    CHECK(opt.cost == doctest::Approx(brute).epsilon(1e-12));
    CHECK(load_cost(opt.loads, n_max) == opt.cost);
    const DpResult dp = dp_oracle(arrivals, cfg, 2'000'000);
    CHECK(dp.optimal_return == doctest::Approx(opt.cost).epsilon(1e-12));
    const DayRollout bau = bau_rollout(arrivals, cfg);
    CHECK(opt.cost <= bau.cost + 1e-12);
    CHECK(bau.stranded == 0);
  }
}

TEST_CASE("offline optimum bounds any rollout") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int s_max = 2 + static_cast<int>(rng() % 5);
    const int n_max = 1 + static_cast<int>(rng() % 8);
    const FleetConfig cfg = tiny_fleet(n_max, s_max);
    const auto arrivals = evcoord::testing::random_arrivals(cfg, rng, 3 * n_max);
    const double opt = offline_optimum(arrivals, cfg).cost;
    const DayRollout random = rollout(arrivals, cfg, [&](const AggregateState& s) {
      return random_action(diagonal_totals(s), 512, 0, rng);
    });
    CHECK(opt <= random.cost + 1e-12);
  }
}

TEST_CASE("schedule CSV") {
  std::ostringstream out;
  write_schedule_csv(out, {1, 0, 2});
  CHECK(out.str() == "slot,charged_count\n1,1\n2,0\n3,2\n");
}

TEST_CASE("min-cost flow on a small graph") {
  // Two parallel routes: cheap with capacity 1, expensive with capacity 2.
  MinCostFlow f(4);
  const int cheap = f.add_edge(0, 1, 1, 1);
  f.add_edge(1, 3, 1, 0);
  const int dear = f.add_edge(0, 2, 2, 5);
  f.add_edge(2, 3, 2, 0);
  const auto r = f.solve(0, 3, 3);
  CHECK(r.flow == 3);
  CHECK(r.cost == 11);
  CHECK(f.flow_on(cheap) == 1);
  CHECK(f.flow_on(dear) == 2);
}
