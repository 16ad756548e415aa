#include <doctest.h>

#include <array>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "evcoord/baselines.hpp"
#include "evcoord/errors.hpp"
#include "evcoord/fqi.hpp"
#include "oracles/fuzz.hpp"

using namespace evcoord;
using evcoord::testing::tiny_fleet;

namespace {

using Arrivals = std::vector<std::vector<EvDemand>>;

constexpr std::size_t kFullCap = std::size_t{1} << 30;

Policy exact_policy(const Arrivals& arrivals, const FleetConfig& cfg) {
  const ActionSampling all{kFullCap, 0};
  const ExperienceSet f = collect_exhaustive(std::vector<Arrivals>{arrivals}, cfg, all);
  FqiOptions opts;
  opts.sampling = all;
  return fitted_q_iteration(f, std::make_unique<ExactTable>(), opts);
}

EpisodeDay day_from_evs(const FleetConfig& cfg, const std::vector<std::array<int, 3>>& evs) {
  // {arrival slot, depart slots, charge slots}
  EpisodeDay day;
  day.date = parse_date("2015-03-02");
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
  return day;
}

}  // namespace

TEST_CASE("feature encoding") {
  CHECK(feature_length(12) == 157);
  CHECK(feature_length(3) == 13);

  AggregateState s(3, 2, 2);
  s.add_ev(2, 3);
  s.add_ev(1, 2);
  ActionVector u{{0, 1, 0}};
  const auto f = encode(s, u);
  REQUIRE(f.size() == 13);
  CHECK(f[0] == doctest::Approx(1.0 / 3.0));
  CHECK(f[1 + 0 * 3 + 1] == 0.5);  // (1, 2)
  CHECK(f[1 + 1 * 3 + 2] == 0.5);  // (2, 3)
  CHECK(f[10] == 0.0);
  CHECK(f[11] == 0.5);
  CHECK(f[12] == 0.0);
}

TEST_CASE("feature encoding is injective on random pairs") {
  std::mt19937_64 rng(99);
  const FleetConfig cfg = tiny_fleet(4, 4);
  std::set<std::vector<double>> seen_features;
  std::set<std::tuple<int, std::vector<std::uint16_t>, std::vector<int>>> seen_pairs;
  for (int k = 0; k < 10000; ++k) {
    const auto arrivals = evcoord::testing::random_arrivals(cfg, rng, 4);
    const int t = 1 + static_cast<int>(rng() % 4);
    std::vector<EvDemand> now;
    for (const auto& e : arrivals[static_cast<std::size_t>(t)])
      if (e.depart_slots <= 4 - t + 1) now.push_back(e);
    const AggregateState s = bin_sessions(now, cfg, t);
    const ActionVector u = random_action(diagonal_totals(s), kFullCap, 0, rng);
    const bool new_pair = seen_pairs.insert({t, s.counts(), u.charged}).second;
    const bool new_feature = seen_features.insert(encode(s, u)).second;
    CHECK(new_pair == new_feature);
  }
}

TEST_CASE("collection respects the horizon and is deterministic") {
  const FleetConfig cfg = tiny_fleet(3, 4);
  const std::vector<EpisodeDay> days{day_from_evs(cfg, {{1, 4, 2}, {1, 2, 1}, {3, 2, 2}})};
  CollectOptions opts;
  const ExperienceSet a = collect_experience(days, cfg, 7, 123, opts);
  opts.workers = 3;
  const ExperienceSet b = collect_experience(days, cfg, 7, 123, opts);
  REQUIRE(a.tuples.size() == 7 * 4);
  CHECK(a.tuples == b.tuples);
  for (const auto& tr : a.tuples) {
    CHECK(tr.s.t() >= 1);
    CHECK(tr.s.t() <= 4);
    CHECK(tr.s_next.t() == tr.s.t() + 1);
    CHECK(tr.cost == cost_of(tr.s, tr.u, tr.s_next));
  }
  const ExperienceSet c = collect_experience(days, cfg, 7, 124, opts);
  CHECK(c.tuples != a.tuples);
}

TEST_CASE("exact fitted Q-iteration matches the DP optimum") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 40; ++trial) {
    const int s_max = 2 + static_cast<int>(rng() % 3);
    const int n_max = 1 + static_cast<int>(rng() % 3);
    const FleetConfig cfg = tiny_fleet(n_max, s_max);
    const auto arrivals = evcoord::testing::random_arrivals(cfg, rng, 2 * n_max);
    const Policy policy = exact_policy(arrivals, cfg);
    const DpResult dp = dp_oracle(arrivals, cfg, 1'000'000);
    const AggregateState root = bin_sessions(arrivals[1], cfg, 1);
    CHECK(policy.value(root) == doctest::Approx(dp.optimal_return).epsilon(1e-9));
    const DayRollout greedy = rollout(arrivals, cfg, [&](const AggregateState& s) { return policy.act(s); });
    CHECK(greedy.cost == doctest::Approx(dp.optimal_return).epsilon(1e-9));
    CHECK(greedy.stranded == 0);
  }
}

TEST_CASE("policy on the example day") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  Arrivals arrivals(4);
  arrivals[1] = {{3, 2}, {2, 1}};
  const Policy policy = exact_policy(arrivals, cfg);
  const AggregateState root = bin_sessions(arrivals[1], cfg, 1);
  CHECK(policy.value(root) == doctest::Approx(0.75));
  CHECK(policy.act(root).charged == std::vector<int>{0, 1, 0});
  const DayRollout r = rollout(arrivals, cfg, [&](const AggregateState& s) { return policy.act(s); });
  CHECK(r.loads == std::vector<int>{1, 1, 1});
}

TEST_CASE("empty days are worth nothing") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  const Policy policy = exact_policy(Arrivals(4), cfg);
  for (int t = 1; t <= 4; ++t) CHECK(policy.value(AggregateState(3, 2, t)) == 0.0);
  CHECK(policy.act(AggregateState(3, 2, 4)).charged == std::vector<int>{0, 0, 0});
}

TEST_CASE("an urgent EV is always charged") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  Arrivals arrivals(4);
  arrivals[1] = {{1, 1}, {3, 1}};
  const Policy policy = exact_policy(arrivals, cfg);
  const ActionVector u = policy.act(bin_sessions(arrivals[1], cfg, 1));
  CHECK(u.charged[0] == 1);
  CHECK(u.charged[2] == 0);
}

TEST_CASE("ties go to the first action in lexicographic order") {
  const FleetConfig cfg = tiny_fleet(1, 2);
  Arrivals arrivals(3);
  arrivals[1] = {{2, 1}};
  const Policy policy = exact_policy(arrivals, cfg);
  CHECK(policy.act(bin_sessions(arrivals[1], cfg, 1)).charged == std::vector<int>{0, 0});
}

TEST_CASE("mlp fitted Q-iteration stays close to the optimum on a tiny fleet") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  Arrivals arrivals(4);
  arrivals[1] = {{3, 2}, {2, 1}};
  const ActionSampling all{kFullCap, 0};
  const ExperienceSet f = collect_exhaustive(std::vector<Arrivals>{arrivals}, cfg, all);
  MlpConfig mlp;
  mlp.hidden = {32, 16};
  mlp.epochs = 400;
  mlp.batch_size = 8;
  mlp.seed = 4;
  FqiOptions opts;
  opts.sampling = all;
  int iterations = 0;
  opts.on_iteration = [&](const FqiIteration& it) {
    ++iterations;
    CHECK(it.rows == f.tuples.size());
  };
  const Policy policy = fitted_q_iteration(f, std::make_unique<Mlp>(mlp), opts);
  CHECK(iterations == 3);
  const DayRollout r = rollout(arrivals, cfg, [&](const AggregateState& s) { return policy.act(s); });
  CHECK(r.cost <= 0.75 * 1.05);
}

TEST_CASE("experience files round trip and reject tampering") {
  const FleetConfig cfg = tiny_fleet(3, 4);
  const std::vector<EpisodeDay> days{day_from_evs(cfg, {{1, 4, 2}, {2, 2, 1}})};
  const ExperienceSet f = collect_experience(days, cfg, 3, 5);
  std::stringstream buf;
  save_experience(buf, f);
  const std::string text = buf.str();
  std::stringstream in(text);
  const ExperienceSet back = load_experience(in);
  CHECK(back.meta == f.meta);
  CHECK(back.tuples == f.tuples);

  // Corrupt the cost on the first tuple line.
  std::string bad = text;
  const auto pos = bad.find("\"cost\":", bad.find('\n'));
  REQUIRE(pos != std::string::npos);
  bad.insert(pos + 7, "1");
  std::stringstream bad_in(bad);
  CHECK_THROWS_AS(load_experience(bad_in), ParseError);

  std::stringstream short_in(text.substr(0, text.rfind('\n', text.size() - 2) + 1));
  CHECK_THROWS_AS(load_experience(short_in), ParseError);
}

TEST_CASE("policies round trip") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  Arrivals arrivals(4);
  arrivals[1] = {{3, 2}, {2, 1}};
  const Policy policy = exact_policy(arrivals, cfg);
  const auto path = std::filesystem::temp_directory_path() / "evcoord_test_policy.bin";
  policy.save(path);
  const Policy back = Policy::load(path);
  std::filesystem::remove(path);
  CHECK(back.s_max() == 3);
  CHECK(back.sampling() == policy.sampling());
  const AggregateState root = bin_sessions(arrivals[1], cfg, 1);
  CHECK(back.value(root) == policy.value(root));
}

TEST_CASE("divergence is reported with its iteration") {
  const FleetConfig cfg = tiny_fleet(2, 3);
  Arrivals arrivals(4);
  arrivals[1] = {{3, 2}};
  ExperienceSet f = collect_exhaustive(std::vector<Arrivals>{arrivals}, cfg);
  f.tuples[0].cost = std::numeric_limits<double>::infinity();
  try {
    fitted_q_iteration(f, std::make_unique<ExactTable>());
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).rfind("fqi iteration 1", 0) == 0);
  }
}
