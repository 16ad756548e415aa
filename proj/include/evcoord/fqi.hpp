#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "evcoord/mdp.hpp"
#include "evcoord/regressor.hpp"
#include "evcoord/session_data.hpp"

namespace evcoord {

/// How action sets are formed wherever a min over U_s is needed.
struct ActionSampling {
  std::size_t cap = 512;
  std::uint64_t seed = 0;

  std::vector<ActionVector> actions(const AggregateState& s) const {
    return enumerate_actions(diagonal_totals(s), cap, seed);
  }
  bool operator==(const ActionSampling&) const = default;
};

/// s_max^2 + s_max + 1.
std::size_t feature_length(int s_max);

/// Writes [(t - 1) / s_max, x row-major, u as fractions per diagonal] into
/// `row`, which must hold feature_length(s.s_max()) doubles.
void encode_into(const AggregateState& s, const ActionVector& u, double* row);
std::vector<double> encode(const AggregateState& s, const ActionVector& u);

struct ExperienceMeta {
  FleetConfig fleet;
  std::uint64_t seed = 0;
  std::string first_day;
  std::string last_day;
  int trajectories_per_day = 0;
  bool exhaustive = false;
  ActionSampling sampling;

  bool operator==(const ExperienceMeta&) const = default;
};

/// Batch of (s, u, s', cost) tuples.
struct ExperienceSet {
  ExperienceMeta meta;
  std::vector<Transition> tuples;
};

struct CollectOptions {
  ActionSampling sampling;
  int workers = 1;
};

/// Random-action rollouts: `trajectories_per_day` per day, each from the
/// day's first state to the terminal state. Trajectory k of day d draws from
/// its own stream mix_seed(mix_seed(seed, d), k), so output is independent of
/// the worker count. Days that violate capacity are skipped with a warning.
ExperienceSet collect_experience(const std::vector<EpisodeDay>& days, const FleetConfig& cfg,
                                 int trajectories_per_day, std::uint64_t seed,
                                 const CollectOptions& opts = {});

/// Every (s, u) reachable on each day under the sampled action sets; only
/// viable for tiny fleets. Throws BudgetExceeded past `max_tuples`.
ExperienceSet collect_exhaustive(const std::vector<EpisodeDay>& days, const FleetConfig& cfg,
                                 const ActionSampling& sampling = {},
                                 std::size_t max_tuples = 5'000'000);
ExperienceSet collect_exhaustive(const std::vector<std::vector<std::vector<EvDemand>>>& arrival_days,
                                 const FleetConfig& cfg, const ActionSampling& sampling = {},
                                 std::size_t max_tuples = 5'000'000);

/// JSON lines: a header object, then one transition per line. Loading
/// recomputes every cost and checks s' against the arrival-free dynamics.
void save_experience(std::ostream& out, const ExperienceSet& f);
ExperienceSet load_experience(std::istream& in);
void save_experience(const std::filesystem::path& path, const ExperienceSet& f);
ExperienceSet load_experience(const std::filesystem::path& path);

/// Greedy policy over a fitted Q-function.
class Policy {
 public:
  Policy(std::shared_ptr<const Regressor> q, int s_max, ActionSampling sampling);

  /// argmin over sampling().actions(s); exact ties go to the
  /// lexicographically smallest action. Terminal states get the zero action.
  ActionVector act(const AggregateState& s) const;
  /// min_u Q(s, u); 0 for terminal states.
  double value(const AggregateState& s) const;
  std::vector<double> q_values(const AggregateState& s, const std::vector<ActionVector>& actions) const;

  const Regressor& regressor() const { return *q_; }
  int s_max() const { return s_max_; }
  const ActionSampling& sampling() const { return sampling_; }

  void save(std::ostream& out) const;
  static Policy load(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Policy load(const std::filesystem::path& path);

 private:
  std::shared_ptr<const Regressor> q_;
  int s_max_;
  ActionSampling sampling_;
};

struct FqiIteration {
  int iteration = 0;
  std::size_t rows = 0;
  std::size_t distinct_next_states = 0;
  double mean_target = 0.0;
  double max_target = 0.0;
};

struct FqiOptions {
  /// Number of Bellman backups; 0 means s_max.
  int t_steps = 0;
  ActionSampling sampling;
  int workers = 1;
  std::function<void(const FqiIteration&)> on_iteration;
};

/// Q_0 = 0; for N = 1..T refit `reg` from scratch on
/// cost + min_u' Q_{N-1}(s', u'), with terminal states worth 0.
/// Throws DivergenceError on non-finite targets or training loss.
Policy fitted_q_iteration(const ExperienceSet& f, std::unique_ptr<Regressor> reg,
                          const FqiOptions& opts = {});

}  // namespace evcoord
