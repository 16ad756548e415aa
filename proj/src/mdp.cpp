#include "evcoord/mdp.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>
#include <string>

#include "evcoord/errors.hpp"
#include "evcoord/util.hpp"

namespace evcoord {

AggregateState::AggregateState(int s_max, int n_max, int t)
    : s_max_(s_max), n_max_(n_max), t_(t),
      counts_(static_cast<std::size_t>(s_max) * static_cast<std::size_t>(s_max), 0) {
  if (s_max < 1) throw ConfigError("s_max must be >= 1");
  if (n_max < 1 || n_max > std::numeric_limits<std::uint16_t>::max())
    throw ConfigError("n_max out of range");
}

int AggregateState::count(int charge, int depart) const {
  if (charge < 1 || depart < 1 || charge > s_max_ || depart > s_max_) return 0;
  return counts_[static_cast<std::size_t>((charge - 1) * s_max_ + (depart - 1))];
}

int AggregateState::total() const {
  int n = 0;
  for (auto c : counts_) n += c;
  return n;
}

void AggregateState::add_ev(int charge, int depart, int how_many) {
  if (charge < 1 || depart < 1 || charge > s_max_ || depart > s_max_)
    throw InfeasibleSessionError("cell (" + std::to_string(charge) + ", " + std::to_string(depart) +
                                 ") outside the state matrix");
  counts_[static_cast<std::size_t>((charge - 1) * s_max_ + (depart - 1))] +=
      static_cast<std::uint16_t>(how_many);
}

std::size_t StateKeyHash::operator()(const AggregateState& s) const {
  std::uint64_t h = mix_seed(static_cast<std::uint64_t>(s.t()), static_cast<std::uint64_t>(s.n_max()));
  for (auto c : s.counts()) h = mix_seed(h, c);
  return static_cast<std::size_t>(h);
}

int ActionVector::total_charged() const {
  int n = 0;
  for (int c : charged) n += c;
  return n;
}

AggregateState bin_sessions(std::span<const EvDemand> connected, const FleetConfig& cfg, int t) {
  const int s_max = cfg.s_max();
  if (static_cast<int>(connected.size()) > cfg.n_max)
    throw CapacityError(std::to_string(connected.size()) + " EVs connected to " +
                        std::to_string(cfg.n_max) + " stations");
  AggregateState s(s_max, cfg.n_max, t);
  for (const auto& ev : connected) {
    if (ev.charge_slots < 1 || ev.depart_slots > s_max)
      throw InfeasibleSessionError("EV demand out of range");
    if (ev.charge_slots > ev.depart_slots)
      throw InfeasibleSessionError("EV needs " + std::to_string(ev.charge_slots) +
                                   " charge slots but departs after " +
                                   std::to_string(ev.depart_slots));
    s.add_ev(ev.charge_slots, ev.depart_slots);
  }
  return s;
}

DiagonalTotals diagonal_totals(const AggregateState& s) {
  const int n = s.s_max();
  DiagonalTotals out;
  out.n_max = s.n_max();
  out.counts.assign(static_cast<std::size_t>(n), 0);
  for (int d = 0; d < n; ++d)
    for (int i = 1; i + d <= n; ++i) out.counts[static_cast<std::size_t>(d)] += s.count(i, i + d);
  return out;
}

ActionCount count_actions(const DiagonalTotals& totals) {
  ActionCount out;
  for (int c : totals.counts) {
    const auto factor = static_cast<std::uint64_t>(c) + 1;
    if (out.saturated) continue;
    if (out.value > std::numeric_limits<std::uint64_t>::max() / factor) {
      out.saturated = true;
      out.value = std::numeric_limits<std::uint64_t>::max();
    } else {
      out.value *= factor;
    }
  }
  return out;
}

ActionVector charge_everything(const DiagonalTotals& totals) { return ActionVector{totals.counts}; }

ActionVector minimal_safe_action(const DiagonalTotals& totals) {
  ActionVector u{std::vector<int>(totals.counts.size(), 0)};
  if (!u.charged.empty()) u.charged[0] = totals.counts[0];
  return u;
}

ActionVector no_charging(const DiagonalTotals& totals) {
  return ActionVector{std::vector<int>(totals.counts.size(), 0)};
}

std::vector<ActionVector> enumerate_actions(const DiagonalTotals& totals, std::size_t cap,
                                            std::uint64_t seed) {
  if (cap < 1) throw std::invalid_argument("enumerate_actions: cap must be >= 1");
  const std::size_t dims = totals.counts.size();
  const ActionCount n = count_actions(totals);
  std::vector<ActionVector> out;

  if (!n.saturated && n.value <= cap) {
    out.reserve(static_cast<std::size_t>(n.value));
    std::vector<int> cur(dims, 0);
    while (true) {
      out.push_back(ActionVector{cur});
      // Odometer with the last diagonal varying fastest gives lexicographic order.
      std::size_t d = dims;
      while (d > 0) {
        --d;
        if (cur[d] < totals.counts[d]) {
          ++cur[d];
          std::fill(cur.begin() + static_cast<std::ptrdiff_t>(d) + 1, cur.end(), 0);
          break;
        }
        if (d == 0) return out;
      }
      if (dims == 0) return out;
    }
  }

  if (cap == 1) return {minimal_safe_action(totals)};
  std::uint64_t stream = seed;
  for (int c : totals.counts) stream = mix_seed(stream, static_cast<std::uint64_t>(c));
  std::mt19937_64 rng(stream);
  std::set<ActionVector> chosen{charge_everything(totals), minimal_safe_action(totals)};
  while (chosen.size() < cap) {
    ActionVector u{std::vector<int>(dims, 0)};
    for (std::size_t d = 0; d < dims; ++d)
      u.charged[d] = std::uniform_int_distribution<int>(0, totals.counts[d])(rng);
    chosen.insert(std::move(u));
  }
  out.assign(chosen.begin(), chosen.end());
  return out;
}

AggregateState apply_action(const AggregateState& s, const ActionVector& u,
                            std::span<const EvDemand> arrivals) {
  const int n = s.s_max();
  const DiagonalTotals totals = diagonal_totals(s);
  if (u.charged.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("action length does not match s_max");
  for (std::size_t d = 0; d < u.charged.size(); ++d)
    if (u.charged[d] < 0 || u.charged[d] > totals.counts[d])
      throw std::invalid_argument("action charges " + std::to_string(u.charged[d]) +
                                  " EVs on diagonal " + std::to_string(d) + " holding " +
                                  std::to_string(totals.counts[d]));

  AggregateState next(n, s.n_max(), s.t() + 1);
  int stranded = 0;
  for (int d = 0; d < n; ++d) {
    int to_charge = u.charged[static_cast<std::size_t>(d)];
    for (int i = n - d; i >= 1; --i) {
      const int here = s.count(i, i + d);
      if (here == 0) continue;
      const int charged = std::min(here, to_charge);
      to_charge -= charged;
      if (charged > 0 && i > 1) next.add_ev(i - 1, i + d - 1, charged);
      const int idle = here - charged;
      if (idle == 0) continue;
      if (d == 0)
        stranded += idle;
      else
        next.add_ev(i, i + d - 1, idle);
    }
  }
  next.set_stranded(stranded);

  for (const auto& ev : arrivals) {
    if (ev.charge_slots < 1 || ev.depart_slots > n || ev.charge_slots > ev.depart_slots)
      throw InfeasibleSessionError("infeasible arrival (" + std::to_string(ev.depart_slots) + ", " +
                                   std::to_string(ev.charge_slots) + ")");
    next.add_ev(ev.charge_slots, ev.depart_slots);
  }
  if (next.total() > s.n_max())
    throw CapacityError(std::to_string(next.total()) + " EVs connected at slot " +
                        std::to_string(next.t()) + " exceed n_max " + std::to_string(s.n_max()));
  return next;
}

double penalty_factor(int n_max, int s_max) {
  const int floor_bound = (s_max * (2 * n_max - 1)) / n_max + 1;
  return static_cast<double>(std::max(2 * n_max + 1, floor_bound));
}

double demand_cost(const AggregateState& s, const ActionVector& u) {
  const double load = static_cast<double>(u.total_charged()) / s.n_max();
  return load * load;
}

double penalty_cost(const AggregateState& s_next) {
  return penalty_factor(s_next.n_max(), s_next.s_max()) * static_cast<double>(s_next.stranded()) /
         s_next.n_max();
}

double cost_of(const AggregateState& s, const ActionVector& u, const AggregateState& s_next) {
  return demand_cost(s, u) + penalty_cost(s_next);
}

Transition step(const AggregateState& s, const ActionVector& u, std::span<const EvDemand> arrivals) {
  Transition tr{s, u, apply_action(s, u, arrivals), 0.0};
  // What stranded on the way into s belongs to the previous transition.
  tr.s.set_stranded(0);
  tr.cost = cost_of(tr.s, tr.u, tr.s_next);
  return tr;
}

DayRollout rollout(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg,
                   const Controller& controller) {
  const int n = cfg.s_max();
  if (arrivals.size() != static_cast<std::size_t>(n) + 1)
    throw std::invalid_argument("arrivals must be indexed 1..s_max");
  DayRollout out;
  out.loads.assign(static_cast<std::size_t>(n), 0);
  AggregateState s = bin_sessions(arrivals[1], cfg, 1);
  static const std::vector<EvDemand> kNone;
  while (!s.terminal()) {
    ActionVector u = controller(s);
    const auto& next_arrivals = s.t() < n ? arrivals[static_cast<std::size_t>(s.t()) + 1] : kNone;
    Transition tr = step(s, u, next_arrivals);
    out.loads[static_cast<std::size_t>(s.t() - 1)] = tr.u.total_charged();
    out.stranded += tr.s_next.stranded();
    out.cost += tr.cost;
    s = tr.s_next;
    out.transitions.push_back(std::move(tr));
  }
  return out;
}

void to_json(nlohmann::json& j, const AggregateState& s) {
  j = nlohmann::json{{"t", s.t()},
                     {"s_max", s.s_max()},
                     {"n_max", s.n_max()},
                     {"counts", s.counts()},
                     {"stranded", s.stranded()}};
}

void from_json(const nlohmann::json& j, AggregateState& s) {
  const int s_max = j.at("s_max").get<int>();
  s = AggregateState(s_max, j.at("n_max").get<int>(), j.at("t").get<int>());
  const auto counts = j.at("counts").get<std::vector<int>>();
  if (counts.size() != static_cast<std::size_t>(s_max * s_max))
    throw ParseError("state counts must have s_max^2 entries", 0);
  for (int i = 1; i <= s_max; ++i)
    for (int k = 1; k <= s_max; ++k) {
      const int c = counts[static_cast<std::size_t>((i - 1) * s_max + (k - 1))];
      if (c < 0) throw ParseError("negative state count", 0);
      if (c > 0) s.add_ev(i, k, c);
    }
  s.set_stranded(j.value("stranded", 0));
}

void to_json(nlohmann::json& j, const ActionVector& u) { j = u.charged; }

void from_json(const nlohmann::json& j, ActionVector& u) { j.get_to(u.charged); }

void to_json(nlohmann::json& j, const Transition& tr) {
  j = nlohmann::json{{"s", tr.s}, {"u", tr.u}, {"s_next", tr.s_next}, {"cost", tr.cost}};
}

void from_json(const nlohmann::json& j, Transition& tr) {
  j.at("s").get_to(tr.s);
  j.at("u").get_to(tr.u);
  j.at("s_next").get_to(tr.s_next);
  j.at("cost").get_to(tr.cost);
}

}  // namespace evcoord
