#pragma once

#include <chrono>
#include <compare>

namespace evcoord {

/// Group of jointly coordinated charging stations and the decision-slot grid.
struct FleetConfig {
  int n_max = 10;
  std::chrono::minutes h_max{24 * 60};
  std::chrono::minutes slot{120};
  /// Time of day at which every episode starts.
  std::chrono::minutes episode_start{7 * 60};

  /// Throws ConfigError unless n_max >= 1 and slot divides h_max exactly.
  void validate() const;

  int s_max() const { return static_cast<int>(h_max / slot); }
  double slot_hours() const { return static_cast<double>(slot.count()) / 60.0; }

  bool operator==(const FleetConfig&) const = default;
};

/// Remaining requirements of one connected EV, in whole slots.
struct EvDemand {
  int depart_slots = 0;
  int charge_slots = 0;

  auto operator<=>(const EvDemand&) const = default;
};

}  // namespace evcoord
