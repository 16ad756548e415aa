#pragma once

// Exhaustive search over per-EV charging slot choices. Exponential; only for
// days with a handful of short sessions.

#include <functional>
#include <limits>
#include <vector>

#include "evcoord/fleet.hpp"

namespace evcoord::testing {

/// Minimum of sum_t (load_t / n_max)^2 over every way of giving each EV its
/// charge slots inside its window. Returns +inf when no assignment exists.
inline double brute_force_optimum(const std::vector<std::vector<EvDemand>>& arrivals, int s_max, int n_max) {
  struct Ev {
    int first, last, charge;
  };
  std::vector<Ev> evs;
  for (int t = 1; t < static_cast<int>(arrivals.size()); ++t)
    for (const auto& e : arrivals[static_cast<std::size_t>(t)]) evs.push_back({t, t + e.depart_slots - 1, e.charge_slots});

  std::vector<int> load(static_cast<std::size_t>(s_max) + 1, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t)> place_ev;
  // Chooses `left` more slots for EV k from [from, last].
  std::function<void(std::size_t, int, int)> choose = [&](std::size_t k, int from, int left) {
    if (left == 0) {
      place_ev(k + 1);
      return;
    }
    for (int t = from; t + left - 1 <= evs[k].last; ++t) {
      ++load[static_cast<std::size_t>(t)];
      choose(k, t + 1, left - 1);
      --load[static_cast<std::size_t>(t)];
    }
  };
  place_ev = [&](std::size_t k) {
    if (k == evs.size()) {
      double c = 0.0;
      for (int t = 1; t <= s_max; ++t) {
        const double x = static_cast<double>(load[static_cast<std::size_t>(t)]) / n_max;
        c += x * x;
      }
      best = std::min(best, c);
      return;
    }
    choose(k, evs[k].first, evs[k].charge);
  };
  place_ev(0);
  return best;
}

}  // namespace evcoord::testing
