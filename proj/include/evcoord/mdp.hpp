#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "evcoord/fleet.hpp"

namespace evcoord {

/// MDP state s = (t, x). x is stored as integer EV counts; the normalized
/// matrix entries are count / n_max. Row i is the remaining charge in slots,
/// column j the remaining connection time in slots (both 1-based), so an EV
/// sits on diagonal j - i, its flexibility. Only cells with j >= i are ever
/// populated: EVs that fall below the main diagonal are removed on the
/// transition that strands them and recorded in stranded().
class AggregateState {
 public:
  AggregateState() = default;
  AggregateState(int s_max, int n_max, int t = 1);

  int s_max() const { return s_max_; }
  int n_max() const { return n_max_; }
  int t() const { return t_; }
  /// Past the last decision slot; the state is empty and has value zero.
  bool terminal() const { return t_ > s_max_; }

  int count(int charge, int depart) const;
  double x(int charge, int depart) const { return static_cast<double>(count(charge, depart)) / n_max_; }
  /// Row-major counts, cell (i, j) at (i - 1) * s_max + (j - 1).
  const std::vector<std::uint16_t>& counts() const { return counts_; }
  int total() const;
  bool empty() const { return total() == 0; }
  /// EVs that became infeasible on the transition into this state.
  int stranded() const { return stranded_; }

  void add_ev(int charge, int depart, int how_many = 1);
  void set_stranded(int n) { stranded_ = n; }

  bool operator==(const AggregateState&) const = default;

 private:
  int s_max_ = 0;
  int n_max_ = 1;
  int t_ = 1;
  int stranded_ = 0;
  std::vector<std::uint16_t> counts_;
};

/// Hash over (t, n_max, counts); ignores stranded().
struct StateKeyHash {
  std::size_t operator()(const AggregateState& s) const;
};
/// Equality over (t, n_max, counts); ignores stranded().
struct StateKeyEqual {
  bool operator()(const AggregateState& a, const AggregateState& b) const {
    return a.t() == b.t() && a.n_max() == b.n_max() && a.counts() == b.counts();
  }
};

/// EV counts per feasible diagonal d = 0..s_max-1.
struct DiagonalTotals {
  std::vector<int> counts;
  int n_max = 1;

  /// x_total(d), the normalized mass on diagonal d.
  double total(std::size_t d) const { return static_cast<double>(counts[d]) / n_max; }
  bool operator==(const DiagonalTotals&) const = default;
};

/// u_s held as whole EVs charged per diagonal. The fractional view is
/// charged[d] / counts[d], taken as 0 on empty diagonals.
struct ActionVector {
  std::vector<int> charged;

  double fraction(std::size_t d, const DiagonalTotals& totals) const {
    return totals.counts[d] == 0 ? 0.0
                                 : static_cast<double>(charged[d]) / totals.counts[d];
  }
  int total_charged() const;
  auto operator<=>(const ActionVector&) const = default;
};

struct Transition {
  AggregateState s;
  ActionVector u;
  AggregateState s_next;
  double cost = 0.0;

  bool operator==(const Transition&) const = default;
};

/// Bins connected EVs into a state at slot t. Throws CapacityError when more
/// than n_max EVs are given and InfeasibleSessionError on charge > depart or
/// values outside 1..s_max.
AggregateState bin_sessions(std::span<const EvDemand> connected, const FleetConfig& cfg, int t = 1);

DiagonalTotals diagonal_totals(const AggregateState& s);

struct ActionCount {
  std::uint64_t value = 1;
  bool saturated = false;  ///< true when the product exceeded 2^64 - 1
};
/// |U_s| = prod_d (count_d + 1).
ActionCount count_actions(const DiagonalTotals& totals);

ActionVector charge_everything(const DiagonalTotals& totals);
/// Charges every zero-flexibility EV and nothing else.
ActionVector minimal_safe_action(const DiagonalTotals& totals);
ActionVector no_charging(const DiagonalTotals& totals);

/// Exhaustive lexicographic product when count_actions <= cap. Otherwise
/// `cap` distinct vectors (cap >= 2) sampled per diagonal, always containing
/// charge_everything and minimal_safe_action, returned sorted; the sample
/// depends only on (totals, seed). With cap == 1 only the minimal safe action
/// is returned.
std::vector<ActionVector> enumerate_actions(const DiagonalTotals& totals, std::size_t cap,
                                            std::uint64_t seed);

/// Uniform draw from enumerate_actions(totals, cap, seed) without
/// materializing the exhaustive product.
template <typename Rng>
ActionVector random_action(const DiagonalTotals& totals, std::size_t cap, std::uint64_t seed, Rng& rng);

/// One step of the dynamics. On every diagonal the u.charged[d] EVs with the
/// most remaining charge (equivalently the latest departure) are charged;
/// they move one cell down both axes, the rest one cell along the departure
/// axis. Completed and departed EVs leave; uncharged zero-flexibility EVs
/// leave as stranded. Arrivals are then binned in and t advances.
AggregateState apply_action(const AggregateState& s, const ActionVector& u,
                            std::span<const EvDemand> arrivals);

/// Penalty weight M for one stranded EV. At least 2 n_max + 1, and large
/// enough that stranding an EV never undercuts the demand cost of finishing
/// it: M > s_max (2 n_max - 1) / n_max.
double penalty_factor(int n_max, int s_max);

double demand_cost(const AggregateState& s, const ActionVector& u);
double penalty_cost(const AggregateState& s_next);
/// C(s, u, s') = (sum_d x_total(d) u(d))^2 + M * (stranded mass of s').
double cost_of(const AggregateState& s, const ActionVector& u, const AggregateState& s_next);

/// apply_action plus cost.
Transition step(const AggregateState& s, const ActionVector& u, std::span<const EvDemand> arrivals);

using Controller = std::function<ActionVector(const AggregateState&)>;

struct DayRollout {
  std::vector<Transition> transitions;
  std::vector<int> loads;  ///< EVs charged per slot, slots 1..s_max at index 0..s_max-1
  int stranded = 0;
  double cost = 0.0;
};
/// Runs a controller over one day, from t = 1 to the terminal state.
/// `arrivals` is indexed 1..s_max as produced by arrivals_by_slot().
DayRollout rollout(const std::vector<std::vector<EvDemand>>& arrivals, const FleetConfig& cfg,
                   const Controller& controller);

void to_json(nlohmann::json& j, const AggregateState& s);
void from_json(const nlohmann::json& j, AggregateState& s);
void to_json(nlohmann::json& j, const ActionVector& u);
void from_json(const nlohmann::json& j, ActionVector& u);
void to_json(nlohmann::json& j, const Transition& tr);
void from_json(const nlohmann::json& j, Transition& tr);

// ---------------------------------------------------------------------------

template <typename Rng>
ActionVector random_action(const DiagonalTotals& totals, std::size_t cap, std::uint64_t seed,
                           Rng& rng) {
  const ActionCount n = count_actions(totals);
  if (!n.saturated && n.value <= cap) {
    ActionVector u;
    u.charged.resize(totals.counts.size());
    for (std::size_t d = 0; d < totals.counts.size(); ++d) {
      u.charged[d] = std::uniform_int_distribution<int>(0, totals.counts[d])(rng);
    }
    return u;
  }
  auto actions = enumerate_actions(totals, cap, seed);
  std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
  return actions[pick(rng)];
}

}  // namespace evcoord
