#include "evcoord/session_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "evcoord/errors.hpp"
#include "evcoord/util.hpp"

namespace evcoord {

using std::chrono::days;
using std::chrono::minutes;

void FleetConfig::validate() const {
  if (n_max < 1) throw ConfigError("n_max must be >= 1");
  if (slot.count() <= 0) throw ConfigError("slot duration must be positive");
  if (h_max.count() <= 0 || h_max.count() % slot.count() != 0)
    throw ConfigError("h_max must be a positive multiple of the slot duration");
  if (h_max > minutes{24 * 60}) throw ConfigError("h_max must not exceed 24 h");
  if (episode_start < minutes{0} || episode_start >= minutes{24 * 60})
    throw ConfigError("episode start must be a time of day");
}

namespace {

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

std::string two_digits(unsigned v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

Timestamp episode_start_for(Timestamp arrival, const FleetConfig& cfg) {
  const auto shifted = arrival - cfg.episode_start;
  const auto day = std::chrono::floor<days>(shifted);
  return Timestamp{std::chrono::duration_cast<minutes>(day.time_since_epoch())} +
         cfg.episode_start;
}

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), y) ||
      !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d))
    throw ParseError("bad date '" + std::string(text) + "'", 0);
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw ParseError("invalid date '" + std::string(text) + "'", 0);
  return date;
}

std::string format_date(Date d) {
  return std::to_string(static_cast<int>(d.year())) + "-" +
         two_digits(static_cast<unsigned>(d.month())) + "-" +
         two_digits(static_cast<unsigned>(d.day()));
}

Timestamp parse_timestamp(std::string_view text) {
  if (text.size() != 16 && text.size() != 19)
    throw ParseError("bad timestamp '" + std::string(text) + "'", 0);
  const Date date = parse_date(text.substr(0, 10));
  unsigned hh = 0, mm = 0, ss = 0;
  const bool ok = (text[10] == 'T' || text[10] == ' ') && text[13] == ':' &&
                  parse_int(text.substr(11, 2), hh) && parse_int(text.substr(14, 2), mm) &&
                  (text.size() == 16 || (text[16] == ':' && parse_int(text.substr(17, 2), ss)));
  if (!ok || hh > 23 || mm > 59 || ss > 59)
    throw ParseError("bad timestamp '" + std::string(text) + "'", 0);
  return Timestamp{std::chrono::sys_days{date}.time_since_epoch()} + std::chrono::hours{hh} +
         minutes{mm};
}

std::string format_timestamp(Timestamp ts) {
  const auto day = std::chrono::floor<days>(ts);
  const auto tod = ts - day;
  const auto h = static_cast<unsigned>(tod.count() / 60);
  const auto m = static_cast<unsigned>(tod.count() % 60);
  return format_date(Date{day}) + "T" + two_digits(h) + ":" + two_digits(m);
}

int charge_slots_for(double energy_kwh, double charge_rate_kw, const FleetConfig& cfg) {
  const double slots = (energy_kwh / charge_rate_kw) / cfg.slot_hours();
  return static_cast<int>(std::ceil(slots - 1e-9));
}

void to_json(nlohmann::json& j, const PreprocessSummary& s) {
  j = nlohmann::json{{"rows_read", s.rows_read},
                     {"dropped_nonpositive_duration", s.dropped_nonpositive_duration},
                     {"dropped_nonpositive_energy", s.dropped_nonpositive_energy},
                     {"dropped_outside_window", s.dropped_outside_window},
                     {"departure_clipped", s.departure_clipped},
                     {"charge_clipped", s.charge_clipped},
                     {"days", s.days},
                     {"sessions_kept", s.sessions_kept}};
}

void from_json(const nlohmann::json& j, PreprocessSummary& s) {
  j.at("rows_read").get_to(s.rows_read);
  j.at("dropped_nonpositive_duration").get_to(s.dropped_nonpositive_duration);
  j.at("dropped_nonpositive_energy").get_to(s.dropped_nonpositive_energy);
  j.at("dropped_outside_window").get_to(s.dropped_outside_window);
  j.at("departure_clipped").get_to(s.departure_clipped);
  j.at("charge_clipped").get_to(s.charge_clipped);
  j.at("days").get_to(s.days);
  j.at("sessions_kept").get_to(s.sessions_kept);
}

LoadResult read_sessions(std::istream& in, const FleetConfig& cfg) {
  cfg.validate();
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line != kSessionsCsvHeader)
        throw ParseError("expected header '" + std::string(kSessionsCsvHeader) + "'", line_no);
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 5)
      throw ParseError("expected 5 fields, got " + std::to_string(fields.size()), line_no);
    Session s;
    s.station_id = std::string(fields[0]);
    if (s.station_id.empty()) throw ParseError("empty station_id", line_no);
    try {
      s.arrival = parse_timestamp(fields[1]);
      s.departure = parse_timestamp(fields[2]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!parse_real(fields[3], s.energy_kwh)) throw ParseError("bad energy_kwh", line_no);
    if (!parse_real(fields[4], s.charge_rate_kw)) throw ParseError("bad charge_rate_kw", line_no);
    ++result.summary.rows_read;
    if (s.departure <= s.arrival) {
      ++result.summary.dropped_nonpositive_duration;
      continue;
    }
    if (s.energy_kwh <= 0.0 || s.charge_rate_kw <= 0.0) {
      ++result.summary.dropped_nonpositive_energy;
      continue;
    }
    s.charge_slots = charge_slots_for(s.energy_kwh, s.charge_rate_kw, cfg);
    result.sessions.push_back(std::move(s));
  }
  result.summary.sessions_kept = static_cast<std::int64_t>(result.sessions.size());
  return result;
}

LoadResult load_sessions(const std::filesystem::path& path, const FleetConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open sessions file " + path.string());
  return read_sessions(in, cfg);
}

void write_sessions(std::ostream& out, const std::vector<Session>& sessions) {
  out << kSessionsCsvHeader << '\n';
  for (const auto& s : sessions) {
    out << s.station_id << ',' << format_timestamp(s.arrival) << ','
        << format_timestamp(s.departure) << ',' << format_double(s.energy_kwh) << ','
        << format_double(s.charge_rate_kw) << '\n';
  }
}

Timestamp EpisodeDay::start(const FleetConfig& cfg) const {
  return Timestamp{std::chrono::sys_days{date}.time_since_epoch()} + cfg.episode_start;
}

SlotView slot_view(const Session& s, Timestamp episode_start, const FleetConfig& cfg) {
  const auto offset = s.arrival - episode_start;
  SlotView v;
  v.arrival_slot = static_cast<int>(offset / cfg.slot) + 1;
  const Timestamp slot_begin = episode_start + cfg.slot * (v.arrival_slot - 1);
  const auto span = (s.departure - slot_begin).count();
  v.depart_slots = static_cast<int>((span + cfg.slot.count() - 1) / cfg.slot.count());
  v.charge_slots = s.charge_slots;
  return v;
}

std::vector<std::vector<EvDemand>> arrivals_by_slot(const EpisodeDay& day, const FleetConfig& cfg) {
  const int s_max = cfg.s_max();
  std::vector<std::vector<EvDemand>> out(static_cast<std::size_t>(s_max) + 1);
  const Timestamp start = day.start(cfg);
  for (const auto& s : day.sessions) {
    const SlotView v = slot_view(s, start, cfg);
    if (v.arrival_slot < 1 || v.arrival_slot > s_max || v.arrival_slot + v.depart_slots - 1 > s_max)
      throw InfeasibleSessionError("session of station " + s.station_id + " lies outside episode " +
                                   format_date(day.date));
    out[static_cast<std::size_t>(v.arrival_slot)].push_back({v.depart_slots, v.charge_slots});
  }
  return out;
}

int peak_connected(const EpisodeDay& day, const FleetConfig& cfg) {
  const int s_max = cfg.s_max();
  std::vector<int> load(static_cast<std::size_t>(s_max) + 2, 0);
  const Timestamp start = day.start(cfg);
  for (const auto& s : day.sessions) {
    const SlotView v = slot_view(s, start, cfg);
    for (int k = v.arrival_slot; k < v.arrival_slot + v.depart_slots && k <= s_max; ++k)
      if (k >= 1) ++load[static_cast<std::size_t>(k)];
  }
  return *std::max_element(load.begin(), load.end());
}

EpisodizeResult episodize(const std::vector<Session>& sessions, const FleetConfig& cfg) {
  cfg.validate();
  EpisodizeResult result;
  std::map<std::chrono::sys_days, std::vector<Session>> by_day;
  for (Session s : sessions) {
    const Timestamp start = episode_start_for(s.arrival, cfg);
    const Timestamp end = start + cfg.h_max;
    if (s.arrival >= end) {
      // Only possible when h_max < 24 h: the arrival falls between episodes.
      ++result.summary.dropped_outside_window;
      continue;
    }
    if (s.departure > end) {
      s.departure = end;
      ++result.summary.departure_clipped;
    }
    const SlotView v = slot_view(s, start, cfg);
    if (s.charge_slots > v.depart_slots) {
      s.charge_slots = v.depart_slots;
      ++result.summary.charge_clipped;
    }
    const auto day = std::chrono::floor<days>(start);
    by_day[day].push_back(std::move(s));
  }
  if (by_day.empty()) return result;
  const auto first = by_day.begin()->first;
  const auto last = by_day.rbegin()->first;
  for (auto d = first; d <= last; d += days{1}) {
    EpisodeDay ep;
    ep.date = Date{d};
    if (auto it = by_day.find(d); it != by_day.end()) {
      ep.sessions = std::move(it->second);
      std::stable_sort(ep.sessions.begin(), ep.sessions.end(),
                       [](const Session& a, const Session& b) { return a.arrival < b.arrival; });
    }
    result.summary.sessions_kept += static_cast<std::int64_t>(ep.sessions.size());
    result.days.push_back(std::move(ep));
  }
  result.summary.days = static_cast<std::int64_t>(result.days.size());
  return result;
}

std::vector<Session> select_top_stations(const std::vector<Session>& sessions, int n) {
  if (n < 1) throw std::invalid_argument("select_top_stations: n must be >= 1");
  std::map<std::string, std::int64_t> counts;
  for (const auto& s : sessions) ++counts[s.station_id];
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<int>(ranked.size()) < n) {
    log::warn("only " + std::to_string(ranked.size()) + " distinct stations, fewer than the " +
              std::to_string(n) + " requested; keeping all");
  }
  ranked.resize(std::min(ranked.size(), static_cast<std::size_t>(n)));
  std::map<std::string, bool> keep;
  for (const auto& [id, c] : ranked) keep[id] = true;
  std::vector<Session> out;
  for (const auto& s : sessions)
    if (keep.count(s.station_id)) out.push_back(s);
  return out;
}

ScaledDay duplicate_sessions(const EpisodeDay& day, const FleetConfig& cfg, int scale) {
  if (scale < 1) throw std::invalid_argument("duplicate_sessions: scale must be >= 1");
  ScaledDay out{EpisodeDay{day.date, {}}, cfg};
  out.cfg.n_max = cfg.n_max * scale;
  out.day.sessions.reserve(day.sessions.size() * static_cast<std::size_t>(scale));
  for (const auto& s : day.sessions) {
    for (int k = 0; k < scale; ++k) {
      Session copy = s;
      if (k > 0) copy.station_id += "~dup" + std::to_string(k);
      out.day.sessions.push_back(std::move(copy));
    }
  }
  return out;
}

void ArrivalProfile::validate(const FleetConfig& cfg) const {
  const auto s_max = static_cast<std::size_t>(cfg.s_max());
  auto check = [](const std::vector<double>& p, std::size_t n, const char* name) {
    if (p.size() != n)
      throw ConfigError(std::string(name) + " must have " + std::to_string(n) + " entries");
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw ConfigError(std::string(name) + " has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError(std::string(name) + " sums to " + format_double(sum) + ", not 1");
  };
  check(slot_probs, s_max, "slot_probs");
  check(dwell_probs, s_max, "dwell_probs");
  if (!(mean_sessions_per_day > 0.0)) throw ConfigError("mean_sessions_per_day must be positive");
  if (max_charge_slots < 1) throw ConfigError("max_charge_slots must be >= 1");
  if (!(charge_rate_kw > 0.0)) throw ConfigError("charge_rate_kw must be positive");
}

namespace {

double normal_mass(double lo, double hi, double mean, double sd) {
  const double k = 1.0 / (sd * std::sqrt(2.0));
  return 0.5 * (std::erf((hi - mean) * k) - std::erf((lo - mean) * k));
}

void normalize(std::vector<double>& p) {
  double sum = 0.0;
  for (double v : p) sum += v;
  if (sum <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return;
  }
  for (double& v : p) v /= sum;
}

}  // namespace

ArrivalProfile two_peak_profile(const FleetConfig& cfg, const TwoPeakParams& params) {
  cfg.validate();
  const int s_max = cfg.s_max();
  const double h = cfg.slot_hours();
  ArrivalProfile p;
  p.slot_probs.resize(static_cast<std::size_t>(s_max));
  p.dwell_probs.resize(static_cast<std::size_t>(s_max));
  for (int k = 0; k < s_max; ++k) {
    const double lo = k * h;
    const double hi = (k + 1) * h;
    p.slot_probs[static_cast<std::size_t>(k)] =
        params.morning_weight *
            normal_mass(lo, hi, params.morning_peak_hours, params.peak_spread_hours) +
        (1.0 - params.morning_weight) *
            normal_mass(lo, hi, params.evening_peak_hours, params.peak_spread_hours);
    p.dwell_probs[static_cast<std::size_t>(k)] =
        normal_mass(lo, hi, params.mean_dwell_hours, params.dwell_spread_hours);
  }
  normalize(p.slot_probs);
  normalize(p.dwell_probs);
  p.mean_sessions_per_day =
      params.mean_sessions_per_day > 0.0 ? params.mean_sessions_per_day : cfg.n_max;
  p.max_charge_slots = std::max(1, static_cast<int>(std::floor(params.max_charge_hours / h + 1e-9)));
  p.charge_rate_kw = params.charge_rate_kw;
  return p;
}

std::vector<EpisodeDay> generate_synthetic(int n_days, const FleetConfig& cfg,
                                           const ArrivalProfile& profile, std::uint64_t seed,
                                           Date first_day) {
  if (n_days < 1) throw std::invalid_argument("generate_synthetic: days must be >= 1");
  cfg.validate();
  profile.validate(cfg);
  const int s_max = cfg.s_max();
  const auto slot_len = cfg.slot.count();
  std::vector<EpisodeDay> out;
  out.reserve(static_cast<std::size_t>(n_days));

  struct Draft {
    int arrival_slot, depart_slots, charge_slots;
    Timestamp arrival, departure;
    double energy;
  };

  for (int d = 0; d < n_days; ++d) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(d)));
    EpisodeDay day;
    day.date = Date{std::chrono::sys_days{first_day} + days{d}};
    const Timestamp start = day.start(cfg);

    std::poisson_distribution<int> count_dist(profile.mean_sessions_per_day);
    std::discrete_distribution<int> slot_dist(profile.slot_probs.begin(), profile.slot_probs.end());
    const int n = count_dist(rng);

    std::vector<int> occupancy(static_cast<std::size_t>(s_max) + 1, 0);
    std::vector<Draft> drafts;
    for (int i = 0; i < n; ++i) {
      const int a = slot_dist(rng) + 1;
      const int room = s_max - a + 1;
      std::vector<double> dwell(profile.dwell_probs.begin(), profile.dwell_probs.begin() + room);
      double mass = 0.0;
      for (double v : dwell) mass += v;
      int k = 1;
      if (mass > 0.0) {
        std::discrete_distribution<int> dwell_dist(dwell.begin(), dwell.end());
        k = dwell_dist(rng) + 1;
      }
      std::uniform_int_distribution<int> charge_dist(1, std::min(profile.max_charge_slots, k));
      const int c = charge_dist(rng);

      const Timestamp slot_begin = start + cfg.slot * (a - 1);
      std::uniform_int_distribution<long> arr_jitter(0, slot_len - 1);
      const Timestamp arrival = slot_begin + minutes{arr_jitter(rng)};
      const Timestamp last_begin = slot_begin + cfg.slot * (k - 1);
      const Timestamp dep_lo = std::max(arrival + minutes{1}, last_begin + minutes{1});
      std::uniform_int_distribution<long> dep_jitter(0, (last_begin + cfg.slot - dep_lo).count());
      const Timestamp departure = dep_lo + minutes{dep_jitter(rng)};
      std::uniform_real_distribution<double> frac(0.2, 1.0);
      const double hours = cfg.slot_hours() * (c - 1 + frac(rng));
      double energy = std::round(profile.charge_rate_kw * hours * 100.0) / 100.0;
      if (charge_slots_for(energy, profile.charge_rate_kw, cfg) != c)
        energy = profile.charge_rate_kw * cfg.slot_hours() * c;

      bool fits = true;
      for (int t = a; t < a + k; ++t)
        if (occupancy[static_cast<std::size_t>(t)] >= cfg.n_max) fits = false;
      if (!fits) continue;
      for (int t = a; t < a + k; ++t) ++occupancy[static_cast<std::size_t>(t)];
      drafts.push_back({a, k, c, arrival, departure, energy});
    }

    std::stable_sort(drafts.begin(), drafts.end(),
                     [](const Draft& x, const Draft& y) { return x.arrival < y.arrival; });
    // Greedy interval colouring by start slot uses at most peak-occupancy stations.
    std::vector<int> busy_until;
    for (const auto& dr : drafts) {
      std::size_t station = 0;
      while (station < busy_until.size() && busy_until[station] >= dr.arrival_slot) ++station;
      if (station == busy_until.size()) busy_until.push_back(0);
      busy_until[station] = dr.arrival_slot + dr.depart_slots - 1;
      std::string id = std::to_string(station + 1);
      id = "ST" + std::string(id.size() < 3 ? 3 - id.size() : 0, '0') + id;
      day.sessions.push_back(
          Session{id, dr.arrival, dr.departure, dr.energy, profile.charge_rate_kw, dr.charge_slots});
    }
    out.push_back(std::move(day));
  }
  return out;
}

void to_json(nlohmann::json& j, const Session& s) {
  j = nlohmann::json{{"station_id", s.station_id},
                     {"arrival", format_timestamp(s.arrival)},
                     {"departure", format_timestamp(s.departure)},
                     {"energy_kwh", s.energy_kwh},
                     {"charge_rate_kw", s.charge_rate_kw},
                     {"charge_slots", s.charge_slots}};
}

void from_json(const nlohmann::json& j, Session& s) {
  j.at("station_id").get_to(s.station_id);
  s.arrival = parse_timestamp(j.at("arrival").get<std::string>());
  s.departure = parse_timestamp(j.at("departure").get<std::string>());
  j.at("energy_kwh").get_to(s.energy_kwh);
  j.at("charge_rate_kw").get_to(s.charge_rate_kw);
  j.at("charge_slots").get_to(s.charge_slots);
}

void to_json(nlohmann::json& j, const EpisodeDay& d) {
  j = nlohmann::json{{"date", format_date(d.date)}, {"sessions", d.sessions}};
}

void from_json(const nlohmann::json& j, EpisodeDay& d) {
  d.date = parse_date(j.at("date").get<std::string>());
  j.at("sessions").get_to(d.sessions);
}

void to_json(nlohmann::json& j, const FleetConfig& cfg) {
  j = nlohmann::json{{"n_max", cfg.n_max},
                     {"h_max_minutes", cfg.h_max.count()},
                     {"slot_minutes", cfg.slot.count()},
                     {"episode_start_minutes", cfg.episode_start.count()}};
}

void from_json(const nlohmann::json& j, FleetConfig& cfg) {
  cfg.n_max = j.at("n_max").get<int>();
  cfg.h_max = minutes{j.at("h_max_minutes").get<long>()};
  cfg.slot = minutes{j.at("slot_minutes").get<long>()};
  cfg.episode_start = minutes{j.at("episode_start_minutes").get<long>()};
  cfg.validate();
}

void save_days(const std::filesystem::path& path, const std::vector<EpisodeDay>& days,
               const FleetConfig& cfg) {
  const nlohmann::json j{{"format", "evcoord.days"}, {"version", 1}, {"fleet", cfg}, {"days", days}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

DayStore load_days(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open day store " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("day store: ") + e.what(), 0);
  }
  if (j.value("format", "") != "evcoord.days" || j.value("version", 0) != 1)
    throw ParseError("not an evcoord.days v1 file: " + path.string(), 0);
  DayStore store;
  j.at("fleet").get_to(store.cfg);
  j.at("days").get_to(store.days);
  return store;
}

}  // namespace evcoord
