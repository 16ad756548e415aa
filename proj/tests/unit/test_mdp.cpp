#include <doctest.h>

#include <random>
#include <set>

#include "evcoord/errors.hpp"
#include "evcoord/mdp.hpp"
#include "oracles/fuzz.hpp"
#include "oracles/per_ev_sim.hpp"

using namespace evcoord;
using evcoord::testing::tiny_fleet;

namespace {

// The two EVs of the introductory example: (depart 3, charge 2) and (depart 2, charge 1).
const std::vector<EvDemand> kExampleEvs{{3, 2}, {2, 1}};

AggregateState example_state() { return bin_sessions(kExampleEvs, tiny_fleet(2, 3), 1); }

}  // namespace

TEST_CASE("binning the example EVs") {
  const AggregateState s = example_state();
  CHECK(s.t() == 1);
  CHECK(s.x(2, 3) == 0.5);
  CHECK(s.x(1, 2) == 0.5);
  CHECK(s.total() == 2);
  int nonzero = 0;
  for (auto c : s.counts()) nonzero += c != 0;
  CHECK(nonzero == 2);
}

TEST_CASE("binning edge cases") {
  const FleetConfig cfg = tiny_fleet(4, 3);
  CHECK(bin_sessions({}, cfg).empty());
  const std::vector<EvDemand> full(4, EvDemand{3, 3});
  CHECK(bin_sessions(full, cfg).x(3, 3) == 1.0);
  const std::vector<EvDemand> too_many(5, EvDemand{3, 1});
  CHECK_THROWS_AS(bin_sessions(too_many, cfg), CapacityError);
  const std::vector<EvDemand> infeasible{{1, 2}};
  CHECK_THROWS_AS(bin_sessions(infeasible, cfg), InfeasibleSessionError);
  const std::vector<EvDemand> beyond{{4, 1}};
  CHECK_THROWS_AS(bin_sessions(beyond, cfg), InfeasibleSessionError);
}

TEST_CASE("diagonal totals") {
  CHECK(diagonal_totals(example_state()).counts == std::vector<int>{0, 2, 0});
  CHECK(diagonal_totals(example_state()).total(1) == 1.0);
  CHECK(diagonal_totals(AggregateState(4, 3)).counts == std::vector<int>(4, 0));
}

TEST_CASE("action counts") {
  DiagonalTotals fifty{std::vector<int>(10, 0), 50};
  fifty.counts[0] = 50;
  CHECK(count_actions(fifty).value == 51);
  const DiagonalTotals fives{std::vector<int>(10, 5), 50};
  CHECK(count_actions(fives).value == 60466176ULL);
  CHECK(count_actions(DiagonalTotals{{0, 0, 0}, 1}).value == 1);
  const DiagonalTotals huge{std::vector<int>(40, 1000), 40000};
  CHECK(count_actions(huge).saturated);
}

TEST_CASE("exhaustive enumeration is lexicographic") {
  CHECK(enumerate_actions(DiagonalTotals{{2, 0, 0}, 2}, 512, 0).size() == 3);
  const auto acts = enumerate_actions(DiagonalTotals{{1, 1, 0}, 2}, 512, 0);
  REQUIRE(acts.size() == 4);
  CHECK(acts[0].charged == std::vector<int>{0, 0, 0});
  CHECK(acts[1].charged == std::vector<int>{0, 1, 0});
  CHECK(acts[2].charged == std::vector<int>{1, 0, 0});
  CHECK(acts[3].charged == std::vector<int>{1, 1, 0});
  CHECK(enumerate_actions(DiagonalTotals{{0, 0}, 1}, 512, 0).size() == 1);
}

TEST_CASE("sampled enumeration") {
  const DiagonalTotals fives{std::vector<int>(10, 5), 50};
  const auto acts = enumerate_actions(fives, 100, 3);
  CHECK(acts.size() == 100);
  CHECK(std::set<ActionVector>(acts.begin(), acts.end()).size() == 100);
  CHECK(std::is_sorted(acts.begin(), acts.end()));
  CHECK(std::find(acts.begin(), acts.end(), charge_everything(fives)) != acts.end());
  CHECK(std::find(acts.begin(), acts.end(), minimal_safe_action(fives)) != acts.end());
  CHECK(enumerate_actions(fives, 100, 3) == acts);
  CHECK(enumerate_actions(fives, 100, 4) != acts);
  for (const auto& u : acts)
    for (std::size_t d = 0; d < 10; ++d) {
      CHECK(u.charged[d] >= 0);
      CHECK(u.charged[d] <= 5);
    }
  const auto one = enumerate_actions(fives, 1, 0);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == minimal_safe_action(fives));
}

TEST_CASE("count matches exhaustive enumeration below the cap") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    DiagonalTotals totals{std::vector<int>(static_cast<std::size_t>(1 + rng() % 6)), 8};
    for (auto& c : totals.counts) c = static_cast<int>(rng() % 4);
    const auto n = count_actions(totals).value;
    const auto acts = enumerate_actions(totals, 5000, trial);
    CHECK(acts.size() == n);
    CHECK(std::set<ActionVector>(acts.begin(), acts.end()).size() == n);
  }
}

TEST_CASE("random_action draws from the action set") {
  std::mt19937_64 rng(2);
  const DiagonalTotals small{{2, 1, 0}, 3};
  std::set<ActionVector> seen;
  for (int k = 0; k < 500; ++k) seen.insert(random_action(small, 512, 0, rng));
  CHECK(seen.size() == 6);
  const DiagonalTotals big{std::vector<int>(10, 5), 50};
  const auto pool = enumerate_actions(big, 64, 9);
  for (int k = 0; k < 100; ++k) {
    const ActionVector u = random_action(big, 64, 9, rng);
    CHECK(std::binary_search(pool.begin(), pool.end(), u));
  }
}

TEST_CASE("dynamics of the example") {
  const AggregateState s = example_state();
  const ActionVector both{{0, 2, 0}};
  const AggregateState next = apply_action(s, both, {});
  CHECK(next.t() == 2);
  // (charge 2, depart 3) moves to (1, 2); (1, 2) completes and leaves.
  CHECK(next.count(1, 2) == 1);
  CHECK(next.total() == 1);
  CHECK(next.stranded() == 0);
  CHECK(cost_of(s, both, next) == 1.0);

  // Charging one EV on diagonal 1 serves the one with more charge left.
  const AggregateState one = apply_action(s, ActionVector{{0, 1, 0}}, {});
  CHECK(one.count(1, 2) == 1);
  CHECK(one.count(1, 1) == 1);
  CHECK(one.total() == 2);
}

TEST_CASE("stranding and penalty") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  const AggregateState s = bin_sessions(std::vector<EvDemand>{{1, 1}}, cfg);
  const ActionVector idle{{0, 0, 0}};
  const AggregateState next = apply_action(s, idle, {});
  CHECK(next.empty());
  CHECK(next.stranded() == 1);
  CHECK(penalty_factor(2, 3) == 5.0);
  CHECK(cost_of(s, idle, next) == 2.5);
  CHECK(cost_of(s, ActionVector{{1, 0, 0}}, apply_action(s, ActionVector{{1, 0, 0}}, {})) == 0.25);
  // Penalty weight grows with the horizon so stranding never pays.
  CHECK(penalty_factor(10, 12) == 23.0);
  CHECK(penalty_factor(2, 12) == 19.0);
}

TEST_CASE("empty state absorbs") {
  const AggregateState s(3, 2, 2);
  const AggregateState next = apply_action(s, ActionVector{{0, 0, 0}}, {});
  CHECK(next.t() == 3);
  CHECK(next.empty());
  CHECK(cost_of(s, ActionVector{{0, 0, 0}}, next) == 0.0);
  CHECK(AggregateState(3, 2, 4).terminal());
}

TEST_CASE("invalid actions and capacity") {
  const AggregateState s = example_state();
  CHECK_THROWS_AS(apply_action(s, ActionVector{{1, 0, 0}}, {}), std::invalid_argument);
  CHECK_THROWS_AS(apply_action(s, ActionVector{{0, 3, 0}}, {}), std::invalid_argument);
  CHECK_THROWS_AS(apply_action(s, ActionVector{{0, 0}}, {}), std::invalid_argument);
  const std::vector<EvDemand> crowd{{2, 1}, {2, 1}};
  CHECK_THROWS_AS(apply_action(s, ActionVector{{0, 0, 0}}, crowd), CapacityError);
}

TEST_CASE("aggregate dynamics equal the per-EV simulator on fuzzed days") {
  std::mt19937_64 rng(1234);
  for (int day = 0; day < 200; ++day) {
    const int s_max = 1 + static_cast<int>(rng() % 6);
    const int n_max = 1 + static_cast<int>(rng() % 8);
    const FleetConfig cfg = tiny_fleet(n_max, s_max);
    const auto arrivals = evcoord::testing::random_arrivals(cfg, rng, 3 * n_max);
    evcoord::testing::PerEvSimulator sim(s_max, n_max);
    sim.arrive(arrivals[1]);
    AggregateState s = bin_sessions(arrivals[1], cfg, 1);
    REQUIRE(s.counts() == sim.binned());
    while (!s.terminal()) {
      const DiagonalTotals totals = diagonal_totals(s);
      CHECK(totals.counts == sim.class_sizes());
      const ActionVector u = random_action(totals, 512, 0, rng);
      const auto& incoming = s.t() < s_max ? arrivals[static_cast<std::size_t>(s.t()) + 1]
                                           : std::vector<EvDemand>{};
      const Transition tr = step(s, u, incoming);
      const int stranded = sim.advance(u.charged);
      sim.arrive(incoming);
      CHECK(tr.s_next.counts() == sim.binned());
      CHECK(tr.s_next.stranded() == stranded);
      CHECK(tr.cost >= 0.0);
      CHECK((tr.cost == 0.0) == (u.total_charged() == 0 && tr.s_next.stranded() == 0));
      CHECK(tr.s_next.total() <= n_max);
      s = tr.s_next;
    }
    CHECK(s.empty());
  }
}

TEST_CASE("conservation of EVs per transition") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int s_max = 2 + static_cast<int>(rng() % 5);
    const int n_max = 1 + static_cast<int>(rng() % 8);
    const FleetConfig cfg = tiny_fleet(n_max, s_max);
    const auto arrivals = evcoord::testing::random_arrivals(cfg, rng, 2 * n_max);
    AggregateState s = bin_sessions(arrivals[1], cfg, 1);
    while (!s.terminal()) {
      const ActionVector u = random_action(diagonal_totals(s), 512, 0, rng);
      const auto& incoming = s.t() < s_max ? arrivals[static_cast<std::size_t>(s.t()) + 1]
                                           : std::vector<EvDemand>{};
      // EVs on row 1 that get charged complete; everything else stays or strands.
      int completing = 0;
      for (int d = 0; d < s_max; ++d) {
        int left = u.charged[static_cast<std::size_t>(d)];
        for (int i = s_max - d; i >= 1 && left > 0; --i) {
          const int here = std::min(left, s.count(i, i + d));
          if (i == 1) completing += here;
          left -= here;
        }
      }
      const AggregateState next = apply_action(s, u, incoming);
      CHECK(next.total() ==
            s.total() - completing - next.stranded() + static_cast<int>(incoming.size()));
      s = next;
    }
  }
}

TEST_CASE("always charging diagonal 0 never strands") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const int s_max = 1 + static_cast<int>(rng() % 6);
    const int n_max = 1 + static_cast<int>(rng() % 8);
    const FleetConfig cfg = tiny_fleet(n_max, s_max);
    const auto arrivals = evcoord::testing::random_arrivals(cfg, rng, 3 * n_max);
    const DayRollout r = rollout(arrivals, cfg, [&](const AggregateState& s) {
      ActionVector u = random_action(diagonal_totals(s), 512, 0, rng);
      u.charged[0] = diagonal_totals(s).counts[0];
      return u;
    });
    CHECK(r.stranded == 0);
  }
}

TEST_CASE("state and transition JSON") {
  const AggregateState s = example_state();
  const Transition tr = step(s, ActionVector{{0, 1, 0}}, {});
  const nlohmann::json j = tr;
  CHECK(j.at("s").at("counts").size() == 9);
  CHECK(j.get<Transition>() == tr);
}
