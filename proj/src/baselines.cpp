#include "evcoord/baselines.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "evcoord/errors.hpp"

namespace evcoord {

MinCostFlow::MinCostFlow(int nodes) : adjacency_(static_cast<std::size_t>(nodes)) {}

int MinCostFlow::add_edge(int from, int to, std::int64_t capacity, std::int64_t cost) {
  const int idx = static_cast<int>(edges_.size());
  edges_.push_back({to, capacity, cost});
  edges_.push_back({from, 0, -cost});
  adjacency_[static_cast<std::size_t>(from)].push_back(idx);
  adjacency_[static_cast<std::size_t>(to)].push_back(idx + 1);
  return idx;
}

MinCostFlow::Result MinCostFlow::solve(int source, int sink, std::int64_t limit) {
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  const std::size_t n = adjacency_.size();
  Result result;
  std::vector<std::int64_t> dist(n);
  std::vector<int> via(n);
  std::vector<char> queued(n);
  while (result.flow < limit) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(via.begin(), via.end(), -1);
    std::fill(queued.begin(), queued.end(), 0);
    std::deque<int> queue{source};
    dist[static_cast<std::size_t>(source)] = 0;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      queued[static_cast<std::size_t>(v)] = 0;
      for (int e : adjacency_[static_cast<std::size_t>(v)]) {
        const Edge& edge = edges_[static_cast<std::size_t>(e)];
        if (edge.capacity <= 0) continue;
        const std::int64_t nd = dist[static_cast<std::size_t>(v)] + edge.cost;
        if (nd < dist[static_cast<std::size_t>(edge.to)]) {
          dist[static_cast<std::size_t>(edge.to)] = nd;
          via[static_cast<std::size_t>(edge.to)] = e;
          if (!queued[static_cast<std::size_t>(edge.to)]) {
            queued[static_cast<std::size_t>(edge.to)] = 1;
            queue.push_back(edge.to);
          }
        }
      }
    }
    if (dist[static_cast<std::size_t>(sink)] >= kInf) break;
    std::int64_t push = limit - result.flow;
    for (int v = sink; v != source;) {
      const int e = via[static_cast<std::size_t>(v)];
      push = std::min(push, edges_[static_cast<std::size_t>(e)].capacity);
      v = edges_[static_cast<std::size_t>(e) ^ 1U].to;
    }
    for (int v = sink; v != source;) {
      const int e = via[static_cast<std::size_t>(v)];
      edges_[static_cast<std::size_t>(e)].capacity -= push;
      edges_[static_cast<std::size_t>(e) ^ 1U].capacity += push;
      v = edges_[static_cast<std::size_t>(e) ^ 1U].to;
    }
    result.flow += push;
    result.cost += push * dist[static_cast<std::size_t>(sink)];
  }
  return result;
}

DayRollout bau_rollout(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg) {
  return rollout(arrivals, cfg,
                 [](const AggregateState& s) { return charge_everything(diagonal_totals(s)); });
}

DayRollout bau_rollout(const EpisodeDay& day, const FleetConfig& cfg) {
  return bau_rollout(arrivals_by_slot(day, cfg), cfg);
}

double load_cost(const std::vector<int>& loads, int n_max) {
  double cost = 0.0;
  for (int l : loads) {
    const double x = static_cast<double>(l) / n_max;
    cost += x * x;
  }
  return cost;
}

Schedule offline_optimum(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg) {
  const int s_max = cfg.s_max();
  struct Ev {
    int first_slot, last_slot, charge;
  };
  std::vector<Ev> evs;
  std::int64_t demand = 0;
  for (int t = 1; t < static_cast<int>(arrivals.size()); ++t) {
    for (const auto& ev : arrivals[static_cast<std::size_t>(t)]) {
      if (ev.charge_slots > ev.depart_slots || t + ev.depart_slots - 1 > s_max)
        throw InfeasibleSessionError("offline_optimum: infeasible EV arriving in slot " +
                                     std::to_string(t));
      evs.push_back({t, t + ev.depart_slots - 1, ev.charge_slots});
      demand += ev.charge_slots;
    }
  }

  // Nodes: source, EVs, slots, sink.
  const int source = 0;
  const int first_ev = 1;
  const int first_slot = first_ev + static_cast<int>(evs.size());
  const int sink = first_slot + s_max;
  MinCostFlow flow(sink + 1);
  for (std::size_t e = 0; e < evs.size(); ++e) {
    const int node = first_ev + static_cast<int>(e);
    flow.add_edge(source, node, evs[e].charge, 0);
    for (int t = evs[e].first_slot; t <= evs[e].last_slot; ++t)
      flow.add_edge(node, first_slot + t - 1, 1, 0);
  }
  std::vector<std::vector<int>> slot_arcs(static_cast<std::size_t>(s_max));
  for (int t = 1; t <= s_max; ++t) {
    int connected = 0;
    for (const auto& ev : evs) connected += (ev.first_slot <= t && t <= ev.last_slot) ? 1 : 0;
    // k-th unit in a slot adds k^2 - (k-1)^2 = 2k - 1 to the squared load.
    for (int k = 1; k <= connected; ++k)
      slot_arcs[static_cast<std::size_t>(t - 1)].push_back(
          flow.add_edge(first_slot + t - 1, sink, 1, 2 * k - 1));
  }
  const auto solved = flow.solve(source, sink, demand);
  if (solved.flow != demand)
    throw InfeasibleSessionError("offline_optimum: demands cannot be met within deadlines");

  Schedule out;
  out.loads.assign(static_cast<std::size_t>(s_max), 0);
  for (int t = 0; t < s_max; ++t)
    for (int e : slot_arcs[static_cast<std::size_t>(t)])
      out.loads[static_cast<std::size_t>(t)] += static_cast<int>(flow.flow_on(e));
  out.cost = load_cost(out.loads, cfg.n_max);
  return out;
}

Schedule offline_optimum(const EpisodeDay& day, const FleetConfig& cfg) {
  return offline_optimum(arrivals_by_slot(day, cfg), cfg);
}

namespace {

class DpSolver {
 public:
  DpSolver(const std::vector<std::vector<EvDemand>>& arrivals, std::size_t max_nodes)
      : arrivals_(arrivals), max_nodes_(max_nodes) {}

  double value(const AggregateState& s) {
    if (s.terminal()) return 0.0;
    if (auto it = memo_.find(s); it != memo_.end()) return it->second;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& u : actions(s)) {
      const Transition tr = step(s, u, next_arrivals(s));
      best = std::min(best, tr.cost + value(tr.s_next));
    }
    memo_.emplace(s, best);
    return best;
  }

  std::vector<ActionVector> actions(const AggregateState& s) {
    const DiagonalTotals totals = diagonal_totals(s);
    const ActionCount n = count_actions(totals);
    if (n.saturated || nodes_ + n.value > max_nodes_)
      throw BudgetExceeded("dp_oracle: more than " + std::to_string(max_nodes_) +
                           " state-action pairs; use offline_optimum instead");
    nodes_ += static_cast<std::size_t>(n.value);
    return enumerate_actions(totals, static_cast<std::size_t>(n.value), 0);
  }

  std::span<const EvDemand> next_arrivals(const AggregateState& s) const {
    const auto next = static_cast<std::size_t>(s.t()) + 1;
    if (next >= arrivals_.size()) return {};
    return arrivals_[next];
  }

  std::size_t nodes() const { return nodes_; }

 private:
  const std::vector<std::vector<EvDemand>>& arrivals_;
  std::size_t max_nodes_;
  std::size_t nodes_ = 0;
  std::unordered_map<AggregateState, double, StateKeyHash, StateKeyEqual> memo_;
};

}  // namespace

DpResult dp_oracle(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg,
                   std::size_t max_nodes) {
  DpSolver solver(arrivals, max_nodes);
  const AggregateState root = bin_sessions(arrivals.at(1), cfg, 1);
  DpResult out;
  std::vector<std::pair<ActionVector, double>> scored;
  double best = std::numeric_limits<double>::infinity();
  for (auto& u : solver.actions(root)) {
    const Transition tr = step(root, u, solver.next_arrivals(root));
    const double q = tr.cost + solver.value(tr.s_next);
    best = std::min(best, q);
    scored.emplace_back(std::move(u), q);
  }
  out.optimal_return = best;
  for (auto& [u, q] : scored)
    if (q <= best + 1e-12) out.optimal_first_actions.push_back(u);
  out.first_action = out.optimal_first_actions.front();
  out.nodes = solver.nodes();
  return out;
}

DpResult dp_oracle(const EpisodeDay& day, const FleetConfig& cfg, std::size_t max_nodes) {
  return dp_oracle(arrivals_by_slot(day, cfg), cfg, max_nodes);
}

void write_schedule_csv(std::ostream& out, const std::vector<int>& loads) {
  out << "slot,charged_count\n";
  for (std::size_t t = 0; t < loads.size(); ++t) out << (t + 1) << ',' << loads[t] << '\n';
}

}  // namespace evcoord
