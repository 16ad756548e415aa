#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evcoord/fleet.hpp"

namespace evcoord {

/// Wall-clock local time at minute resolution. No time zone is attached.
using Timestamp = std::chrono::sys_time<std::chrono::minutes>;
using Date = std::chrono::year_month_day;

/// Accepts `YYYY-MM-DDTHH:MM`, optionally with `:SS` (floored) and a space
/// instead of `T`. Throws ParseError (line 0) on anything else.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// One charging transaction.
struct Session {
  std::string station_id;
  Timestamp arrival;
  Timestamp departure;
  double energy_kwh = 0.0;
  double charge_rate_kw = 0.0;
  /// Slots of charging still needed at arrival; derived from energy and rate,
  /// possibly reduced by episodize().
  int charge_slots = 0;

  bool operator==(const Session&) const = default;
};

/// ceil((energy / rate) / slot_hours) with a 1e-9 slack on exact multiples.
int charge_slots_for(double energy_kwh, double charge_rate_kw, const FleetConfig& cfg);

/// Counts gathered while reading and preprocessing raw sessions.
struct PreprocessSummary {
  std::int64_t rows_read = 0;
  std::int64_t dropped_nonpositive_duration = 0;
  std::int64_t dropped_nonpositive_energy = 0;
  std::int64_t dropped_outside_window = 0;
  std::int64_t departure_clipped = 0;
  std::int64_t charge_clipped = 0;
  std::int64_t days = 0;
  std::int64_t sessions_kept = 0;

  bool operator==(const PreprocessSummary&) const = default;
};
void to_json(nlohmann::json& j, const PreprocessSummary& s);
void from_json(const nlohmann::json& j, PreprocessSummary& s);

struct LoadResult {
  std::vector<Session> sessions;
  PreprocessSummary summary;
};

inline constexpr std::string_view kSessionsCsvHeader =
    "station_id,arrival,departure,energy_kwh,charge_rate_kw";

LoadResult read_sessions(std::istream& in, const FleetConfig& cfg);
LoadResult load_sessions(const std::filesystem::path& path, const FleetConfig& cfg);
void write_sessions(std::ostream& out, const std::vector<Session>& sessions);

/// Sessions belonging to one 24 h window starting at cfg.episode_start.
struct EpisodeDay {
  Date date;
  std::vector<Session> sessions;

  Timestamp start(const FleetConfig& cfg) const;
  bool operator==(const EpisodeDay&) const = default;
};

/// A session seen through the decision-slot grid of its episode.
struct SlotView {
  int arrival_slot = 0;  ///< 1-based slot containing the arrival instant
  int depart_slots = 0;  ///< slots from the start of arrival_slot until departure, rounded up
  int charge_slots = 0;
};
SlotView slot_view(const Session& s, Timestamp episode_start, const FleetConfig& cfg);

/// Arrivals per slot, indexed 1..s_max (index 0 unused).
std::vector<std::vector<EvDemand>> arrivals_by_slot(const EpisodeDay& day, const FleetConfig& cfg);

/// Largest number of sessions physically connected during any slot.
int peak_connected(const EpisodeDay& day, const FleetConfig& cfg);

struct EpisodizeResult {
  std::vector<EpisodeDay> days;  ///< every calendar day between the first and last arrival
  PreprocessSummary summary;
};
EpisodizeResult episodize(const std::vector<Session>& sessions, const FleetConfig& cfg);

/// Keeps sessions of the n busiest stations; ties go to the lexicographically
/// smaller station id. Logs a warning when fewer than n stations exist.
std::vector<Session> select_top_stations(const std::vector<Session>& sessions, int n);

struct ScaledDay {
  EpisodeDay day;
  FleetConfig cfg;
};
/// Repeats every session `scale` times under fresh station ids and scales n_max.
ScaledDay duplicate_sessions(const EpisodeDay& day, const FleetConfig& cfg, int scale);

/// Parameters of the synthetic session generator.
struct ArrivalProfile {
  std::vector<double> slot_probs;   ///< P(arrival slot = k + 1)
  std::vector<double> dwell_probs;  ///< P(depart_slots = k + 1), truncated at the episode end
  double mean_sessions_per_day = 10.0;
  int max_charge_slots = 2;
  double charge_rate_kw = 11.0;

  /// Throws ConfigError on wrong lengths, negative weights or sums off 1 by more than 1e-9.
  void validate(const FleetConfig& cfg) const;
};

/// Knobs for the commuter-shaped default profile, in hours after episode start.
struct TwoPeakParams {
  double morning_peak_hours = 1.5;
  double evening_peak_hours = 10.5;
  double peak_spread_hours = 2.0;
  double morning_weight = 0.6;
  double mean_dwell_hours = 9.0;
  double dwell_spread_hours = 4.0;
  double max_charge_hours = 8.0;
  double charge_rate_kw = 11.0;
  /// <= 0 means "use n_max".
  double mean_sessions_per_day = 0.0;
};
ArrivalProfile two_peak_profile(const FleetConfig& cfg, const TwoPeakParams& params = {});

/// Deterministic in `seed`. At most n_max sessions are connected in any slot.
std::vector<EpisodeDay> generate_synthetic(int days, const FleetConfig& cfg,
                                           const ArrivalProfile& profile, std::uint64_t seed,
                                           Date first_day = Date{std::chrono::year{2015},
                                                                 std::chrono::January,
                                                                 std::chrono::day{1}});

/// Episodic day store (JSON). Sessions keep their clipped charge_slots.
void to_json(nlohmann::json& j, const Session& s);
void from_json(const nlohmann::json& j, Session& s);
void to_json(nlohmann::json& j, const EpisodeDay& d);
void from_json(const nlohmann::json& j, EpisodeDay& d);
void to_json(nlohmann::json& j, const FleetConfig& cfg);
void from_json(const nlohmann::json& j, FleetConfig& cfg);

void save_days(const std::filesystem::path& path, const std::vector<EpisodeDay>& days,
               const FleetConfig& cfg);
struct DayStore {
  std::vector<EpisodeDay> days;
  FleetConfig cfg;
};
DayStore load_days(const std::filesystem::path& path);

}  // namespace evcoord
