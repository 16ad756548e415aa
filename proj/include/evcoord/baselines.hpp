#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "evcoord/mdp.hpp"
#include "evcoord/session_data.hpp"

namespace evcoord {

/// Successive-shortest-path min-cost flow with integer capacities and costs.
/// Shortest paths use Bellman-Ford queues, so residual arcs may carry
/// negative cost. Meant for the small per-day scheduling graphs.
class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes);

  /// Returns the edge index; its reverse arc is index ^ 1.
  int add_edge(int from, int to, std::int64_t capacity, std::int64_t cost);

  struct Result {
    std::int64_t flow = 0;
    std::int64_t cost = 0;
  };
  /// Pushes up to `limit` units from source to sink along cheapest paths.
  Result solve(int source, int sink, std::int64_t limit);

  std::int64_t flow_on(int edge) const { return edges_[static_cast<std::size_t>(edge) ^ 1U].capacity; }

 private:
  struct Edge {
    int to;
    std::int64_t capacity;
    std::int64_t cost;
  };
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
};

/// Charge-on-arrival policy: every connected EV charges until it is done.
DayRollout bau_rollout(const EpisodeDay& day, const FleetConfig& cfg);
DayRollout bau_rollout(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg);

struct Schedule {
  std::vector<int> loads;  ///< EVs charged in slots 1..s_max
  double cost = 0.0;       ///< sum_t (loads[t] / n_max)^2
};

/// Sum of squared normalized loads.
double load_cost(const std::vector<int>& loads, int n_max);

/// Perfect-foresight schedule minimizing sum_t (load_t / n_max)^2 with every
/// EV charged exactly charge_slots whole slots inside its connection window.
/// Solved as a unit-increment min-cost flow with marginal slot costs 2k - 1.
/// Throws InfeasibleSessionError when the demands cannot be met.
Schedule offline_optimum(const EpisodeDay& day, const FleetConfig& cfg);
Schedule offline_optimum(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg);

struct DpResult {
  double optimal_return = 0.0;
  ActionVector first_action;                       ///< lexicographically smallest optimum
  std::vector<ActionVector> optimal_first_actions;  ///< all root actions within 1e-12 of the optimum
  std::size_t nodes = 0;                           ///< state-action pairs expanded
};

/// Exact backward induction over the day's aggregate decision tree, memoized
/// on (t, x). Throws BudgetExceeded once more than max_nodes state-action
/// pairs would be expanded.
DpResult dp_oracle(const EpisodeDay& day, const FleetConfig& cfg, std::size_t max_nodes);
DpResult dp_oracle(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg,
                   std::size_t max_nodes);

/// `slot,charged_count` rows, slots 1-based.
void write_schedule_csv(std::ostream& out, const std::vector<int>& loads);

}  // namespace evcoord
