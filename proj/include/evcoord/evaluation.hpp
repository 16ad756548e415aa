#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcoord/fqi.hpp"
#include "evcoord/session_data.hpp"

namespace evcoord {

/// Mean of policy / optimum over days whose optimal cost is positive.
/// Throws std::invalid_argument on length mismatch or when no day qualifies.
double normalized_cost(std::span<const double> policy_costs, std::span<const double> opt_costs);

enum class DayStatus { kOk, kZeroOptimum, kOverCapacity };

struct DayResult {
  std::string date;
  DayStatus status = DayStatus::kOk;
  double rl_cost = 0.0;
  double bau_cost = 0.0;
  double opt_cost = 0.0;
  int rl_stranded = 0;

  bool operator==(const DayResult&) const = default;
};

/// Costs of one policy on one test set next to BAU and the offline optimum.
/// c_opt is 1 by construction and not stored.
struct EvalReport {
  static constexpr int kVersion = 1;

  std::string label;
  nlohmann::json config = nlohmann::json::object();
  std::vector<DayResult> days;
  double c_rl = 0.0;
  double c_bau = 0.0;
  int days_used = 0;
  int days_excluded = 0;
  int rl_stranded = 0;

  bool operator==(const EvalReport&) const = default;
};
void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
/// One row per day: date,status,rl_cost,bau_cost,opt_cost,rl_ratio,bau_ratio,rl_stranded.
void write_report_csv(std::ostream& out, const EvalReport& r);

/// Rolls the policy, BAU and the offline optimum over every test day. Days
/// with more than n_max EVs connected or a zero optimum are kept in the
/// report but excluded from the means.
EvalReport evaluate_policy(const Policy& policy, const std::vector<EpisodeDay>& test_days,
                           const FleetConfig& cfg, int workers = 1);

/// Everything needed to turn experience into a policy.
struct TrainingSetup {
  MlpConfig mlp;
  bool exact_table = false;
  ActionSampling sampling;
  int t_steps = 0;
  int workers = 1;
};
void to_json(nlohmann::json& j, const TrainingSetup& s);

/// collect_experience followed by fitted_q_iteration.
Policy train_policy(const std::vector<EpisodeDay>& train_days, const FleetConfig& cfg,
                    int trajectories_per_day, std::uint64_t seed, const TrainingSetup& setup);

/// Train/test split for the training-data sweep. Spans are counted in
/// window units of `window_days` days.
struct SplitSpec {
  Date test_first;
  Date test_last;
  std::vector<int> train_spans{1, 3, 5, 7, 9};
  int window_days = 30;
  int runs = 5;
  std::uint64_t seed = 0;
};
void to_json(nlohmann::json& j, const SplitSpec& s);

struct SweepCell {
  int span = 0;
  int samples = 0;
  int run = 0;
  /// False when the data holds no training window of this span.
  bool present = false;
  std::string train_first;
  std::string train_last;
  EvalReport report;
};

/// Statistics of C_RL over the runs of one (span, samples) pair. The run
/// spread is given both as a sample standard deviation and as min/max.
struct SweepSummary {
  int span = 0;
  int samples = 0;
  int runs_present = 0;
  double mean_rl = 0.0;
  double std_rl = 0.0;
  double min_rl = 0.0;
  double max_rl = 0.0;
  double mean_bau = 0.0;
};

struct TrainingSweep {
  SplitSpec spec;
  std::vector<int> samples_per_day;
  std::vector<SweepCell> cells;  ///< span-major, then samples, then run
  std::vector<SweepSummary> summary;
};

/// One policy per (span, samples, run). Run j of a span draws a random
/// contiguous training window that does not overlap the test range.
TrainingSweep run_training_sweep(const SplitSpec& spec, const std::vector<int>& samples_per_day,
                                 const FleetConfig& cfg, const std::vector<EpisodeDay>& data,
                                 const TrainingSetup& setup);
nlohmann::json sweep_to_json(const TrainingSweep& sweep);
/// span,samples,runs_present,mean_c_rl,std_c_rl,min_c_rl,max_c_rl,mean_c_bau
void write_sweep_csv(std::ostream& out, const TrainingSweep& sweep);

struct MonthlySpec {
  int window_days = 30;
  int samples_per_day = 100;
  std::uint64_t seed = 0;
};

struct MonthlyRow {
  int unit = 0;  ///< 0-based window index
  std::string first_day;
  std::string last_day;
  bool skipped = false;
  std::string note;
  EvalReport report;
  /// C_BAU - C_RL; positive when the learned policy beats BAU.
  double improvement = 0.0;
};

/// Splits the data into consecutive windows and tests on each one with all
/// preceding windows as training data. Windows without usable days or
/// without preceding data are skipped with a note.
std::vector<MonthlyRow> run_monthly_sweep(const MonthlySpec& spec, const FleetConfig& cfg,
                                          const std::vector<EpisodeDay>& data, const TrainingSetup& setup);
nlohmann::json monthly_to_json(const std::vector<MonthlyRow>& rows);
/// unit,first_day,last_day,skipped,c_rl,c_bau,improvement,note
void write_monthly_csv(std::ostream& out, const std::vector<MonthlyRow>& rows);

struct ScaleRow {
  int scale = 1;
  EvalReport report;
};

/// Evaluates a fixed policy on each test day duplicated `scale` times with
/// n_max scaled alike.
std::vector<ScaleRow> run_scale_test(const Policy& policy, const std::vector<EpisodeDay>& test_days,
                                     const std::vector<int>& scales, const FleetConfig& cfg,
                                     int workers = 1);
nlohmann::json scale_to_json(const std::vector<ScaleRow>& rows);
/// scale,n_max,c_rl,c_bau,rl_stranded
void write_scale_csv(std::ostream& out, const std::vector<ScaleRow>& rows);

}  // namespace evcoord
