#include "evcoord/fqi.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "binary_io.hpp"
#include "evcoord/errors.hpp"
#include "evcoord/util.hpp"

namespace evcoord {

namespace {

constexpr int kExperienceVersion = 1;
const std::string kPolicyMagic = "EVPOL001";

std::vector<int> counts_as_ints(const AggregateState& s) {
  return {s.counts().begin(), s.counts().end()};
}

AggregateState state_from_counts(int s_max, int n_max, int t, const std::vector<int>& counts,
                                 std::size_t line) {
  if (counts.size() != static_cast<std::size_t>(s_max) * static_cast<std::size_t>(s_max))
    throw ParseError("state needs s_max^2 counts", line);
  AggregateState s(s_max, n_max, t);
  for (int i = 1; i <= s_max; ++i)
    for (int j = 1; j <= s_max; ++j) {
      const int c = counts[static_cast<std::size_t>((i - 1) * s_max + (j - 1))];
      if (c < 0) throw ParseError("negative state count", line);
      if (c > 0) s.add_ev(i, j, c);
    }
  return s;
}

}  // namespace

std::size_t feature_length(int s_max) {
  const auto s = static_cast<std::size_t>(s_max);
  return s * s + s + 1;
}

void encode_into(const AggregateState& s, const ActionVector& u, double* row) {
  const int n = s.s_max();
  if (u.charged.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("encode: action length does not match s_max");
  row[0] = static_cast<double>(s.t() - 1) / n;
  const double inv_n = 1.0 / s.n_max();
  const auto& counts = s.counts();
  for (std::size_t k = 0; k < counts.size(); ++k) row[1 + k] = counts[k] * inv_n;
  const DiagonalTotals totals = diagonal_totals(s);
  double* tail = row + 1 + counts.size();
  for (std::size_t d = 0; d < u.charged.size(); ++d) tail[d] = u.fraction(d, totals);
}

std::vector<double> encode(const AggregateState& s, const ActionVector& u) {
  std::vector<double> row(feature_length(s.s_max()));
  encode_into(s, u, row.data());
  return row;
}

// ---------------------------------------------------------------------------
// Experience collection

namespace {

ExperienceMeta make_meta(const std::vector<EpisodeDay>& days, const FleetConfig& cfg) {
  ExperienceMeta meta;
  meta.fleet = cfg;
  if (!days.empty()) {
    meta.first_day = format_date(days.front().date);
    meta.last_day = format_date(days.back().date);
  }
  return meta;
}

/// Arrivals for a day, or nothing if the day cannot be simulated.
std::optional<std::vector<std::vector<EvDemand>>> usable_arrivals(const EpisodeDay& day,
                                                                   const FleetConfig& cfg) {
  try {
    if (peak_connected(day, cfg) > cfg.n_max) {
      log::warn("skipping " + format_date(day.date) + ": more than n_max EVs connected");
      return std::nullopt;
    }
    return arrivals_by_slot(day, cfg);
  } catch (const InfeasibleSessionError& e) {
    log::warn("skipping " + format_date(day.date) + ": " + e.what());
  } catch (const CapacityError& e) {
    log::warn("skipping " + format_date(day.date) + ": " + e.what());
  }
  return std::nullopt;
}

std::span<const EvDemand> arrivals_after(const std::vector<std::vector<EvDemand>>& arrivals, int t) {
  const auto next = static_cast<std::size_t>(t) + 1;
  if (next >= arrivals.size()) return {};
  return arrivals[next];
}

}  // namespace

ExperienceSet collect_experience(const std::vector<EpisodeDay>& days, const FleetConfig& cfg,
                                 int trajectories_per_day, std::uint64_t seed,
                                 const CollectOptions& opts) {
  if (days.empty()) throw std::invalid_argument("collect_experience: no days");
  if (trajectories_per_day < 1) throw std::invalid_argument("collect_experience: trajectories_per_day must be >= 1");
  cfg.validate();

  std::vector<std::vector<Transition>> per_day(days.size());
  parallel_for(days.size(), opts.workers, [&](std::size_t d) {
    const auto arrivals = usable_arrivals(days[d], cfg);
    if (!arrivals) return;
    const AggregateState start = bin_sessions((*arrivals)[1], cfg, 1);
    auto& out = per_day[d];
    out.reserve(static_cast<std::size_t>(trajectories_per_day) * static_cast<std::size_t>(cfg.s_max()));
    for (int k = 0; k < trajectories_per_day; ++k) {
      std::mt19937_64 rng(mix_seed(mix_seed(seed, d), static_cast<std::uint64_t>(k)));
      AggregateState s = start;
      while (!s.terminal()) {
        const ActionVector u = random_action(diagonal_totals(s), opts.sampling.cap, opts.sampling.seed, rng);
        Transition tr = step(s, u, arrivals_after(*arrivals, s.t()));
        s = tr.s_next;
        out.push_back(std::move(tr));
      }
    }
  });

  ExperienceSet f;
  f.meta = make_meta(days, cfg);
  f.meta.seed = seed;
  f.meta.trajectories_per_day = trajectories_per_day;
  f.meta.sampling = opts.sampling;
  std::size_t total = 0;
  for (const auto& v : per_day) total += v.size();
  f.tuples.reserve(total);
  for (auto& v : per_day)
    for (auto& tr : v) f.tuples.push_back(std::move(tr));
  return f;
}

ExperienceSet collect_exhaustive(const std::vector<std::vector<std::vector<EvDemand>>>& arrival_days,
                                 const FleetConfig& cfg, const ActionSampling& sampling,
                                 std::size_t max_tuples) {
  cfg.validate();
  ExperienceSet f;
  f.meta.fleet = cfg;
  f.meta.exhaustive = true;
  f.meta.sampling = sampling;
  for (const auto& arrivals : arrival_days) {
    std::unordered_set<AggregateState, StateKeyHash, StateKeyEqual> seen;
    std::deque<AggregateState> frontier{bin_sessions(arrivals.at(1), cfg, 1)};
    seen.insert(frontier.front());
    while (!frontier.empty()) {
      const AggregateState s = std::move(frontier.front());
      frontier.pop_front();
      if (s.terminal()) continue;
      for (const auto& u : sampling.actions(s)) {
        if (f.tuples.size() >= max_tuples)
          throw BudgetExceeded("collect_exhaustive: more than " + std::to_string(max_tuples) + " tuples");
        Transition tr = step(s, u, arrivals_after(arrivals, s.t()));
        if (seen.insert(tr.s_next).second) frontier.push_back(tr.s_next);
        f.tuples.push_back(std::move(tr));
      }
    }
  }
  return f;
}

ExperienceSet collect_exhaustive(const std::vector<EpisodeDay>& days, const FleetConfig& cfg,
                                 const ActionSampling& sampling, std::size_t max_tuples) {
  std::vector<std::vector<std::vector<EvDemand>>> arrival_days;
  for (const auto& day : days)
    if (auto arrivals = usable_arrivals(day, cfg)) arrival_days.push_back(std::move(*arrivals));
  ExperienceSet f = collect_exhaustive(arrival_days, cfg, sampling, max_tuples);
  const ExperienceMeta base = make_meta(days, cfg);
  f.meta.first_day = base.first_day;
  f.meta.last_day = base.last_day;
  return f;
}

// ---------------------------------------------------------------------------
// Persistence

void save_experience(std::ostream& out, const ExperienceSet& f) {
  nlohmann::json header{{"format", "evcoord.experience"},
                        {"version", kExperienceVersion},
                        {"fleet", f.meta.fleet},
                        {"seed", f.meta.seed},
                        {"first_day", f.meta.first_day},
                        {"last_day", f.meta.last_day},
                        {"trajectories_per_day", f.meta.trajectories_per_day},
                        {"exhaustive", f.meta.exhaustive},
                        {"action_cap", f.meta.sampling.cap},
                        {"action_seed", f.meta.sampling.seed},
                        {"tuples", f.tuples.size()}};
  out << header.dump() << '\n';
  for (const auto& tr : f.tuples) {
    nlohmann::json line{{"t", tr.s.t()},
                        {"x", counts_as_ints(tr.s)},
                        {"u", tr.u.charged},
                        {"x_next", counts_as_ints(tr.s_next)},
                        {"stranded", tr.s_next.stranded()},
                        {"cost", tr.cost}};
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing experience set");
}

ExperienceSet load_experience(std::istream& in) {
  std::string text;
  std::size_t line_no = 1;
  if (!std::getline(in, text)) throw ParseError("empty experience file", 1);
  ExperienceSet f;
  std::size_t expected = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("format") != "evcoord.experience") throw ParseError("not an experience file", 1);
    if (header.at("version").get<int>() != kExperienceVersion)
      throw ParseError("unsupported experience version " + header.at("version").dump(), 1);
    f.meta.fleet = header.at("fleet").get<FleetConfig>();
    f.meta.seed = header.at("seed").get<std::uint64_t>();
    f.meta.first_day = header.at("first_day").get<std::string>();
    f.meta.last_day = header.at("last_day").get<std::string>();
    f.meta.trajectories_per_day = header.at("trajectories_per_day").get<int>();
    f.meta.exhaustive = header.at("exhaustive").get<bool>();
    f.meta.sampling.cap = header.at("action_cap").get<std::size_t>();
    f.meta.sampling.seed = header.at("action_seed").get<std::uint64_t>();
    expected = header.at("tuples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad experience header: ") + e.what(), 1);
  }
  f.meta.fleet.validate();
  const int s_max = f.meta.fleet.s_max();
  const int n_max = f.meta.fleet.n_max;
  f.tuples.reserve(expected);

  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    Transition tr;
    try {
      const auto j = nlohmann::json::parse(text);
      const int t = j.at("t").get<int>();
      if (t < 1 || t > s_max) throw ParseError("t out of range", line_no);
      tr.s = state_from_counts(s_max, n_max, t, j.at("x").get<std::vector<int>>(), line_no);
      tr.s_next = state_from_counts(s_max, n_max, t + 1, j.at("x_next").get<std::vector<int>>(), line_no);
      tr.s_next.set_stranded(j.at("stranded").get<int>());
      j.at("u").get_to(tr.u.charged);
      tr.cost = j.at("cost").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const InfeasibleSessionError& e) {
      throw ParseError(e.what(), line_no);
    }

    // s' must be the arrival-free successor plus arrivals.
    AggregateState bare;
    try {
      bare = apply_action(tr.s, tr.u, {});
    } catch (const std::exception& e) {
      throw ParseError(std::string("invalid transition: ") + e.what(), line_no);
    }
    if (bare.stranded() != tr.s_next.stranded())
      throw ParseError("stranded count disagrees with the dynamics", line_no);
    for (std::size_t k = 0; k < bare.counts().size(); ++k)
      if (bare.counts()[k] > tr.s_next.counts()[k])
        throw ParseError("next state is not reachable from (s, u)", line_no);
    const double cost = cost_of(tr.s, tr.u, tr.s_next);
    if (std::abs(cost - tr.cost) > 1e-12 * std::max(1.0, std::abs(cost)))
      throw ParseError("stored cost " + format_double(tr.cost) + " differs from recomputed " +
                           format_double(cost),
                       line_no);
    tr.cost = cost;
    f.tuples.push_back(std::move(tr));
  }
  if (f.tuples.size() != expected)
    throw ParseError("header announces " + std::to_string(expected) + " tuples, found " +
                         std::to_string(f.tuples.size()),
                     0);
  return f;
}

void save_experience(const std::filesystem::path& path, const ExperienceSet& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_experience(out, f);
}

ExperienceSet load_experience(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_experience(in);
}

// ---------------------------------------------------------------------------
// Policy

Policy::Policy(std::shared_ptr<const Regressor> q, int s_max, ActionSampling sampling)
    : q_(std::move(q)), s_max_(s_max), sampling_(sampling) {
  if (!q_) throw std::invalid_argument("policy needs a regressor");
  if (s_max < 1) throw std::invalid_argument("policy s_max must be >= 1");
  if (sampling_.cap < 1) throw std::invalid_argument("policy action cap must be >= 1");
}

std::vector<double> Policy::q_values(const AggregateState& s, const std::vector<ActionVector>& actions) const {
  if (s.s_max() != s_max_)
    throw std::invalid_argument("policy trained for s_max " + std::to_string(s_max_) +
                                ", state has " + std::to_string(s.s_max()));
  FeatureMatrix x(static_cast<Eigen::Index>(actions.size()),
                  static_cast<Eigen::Index>(feature_length(s_max_)));
  for (std::size_t k = 0; k < actions.size(); ++k)
    encode_into(s, actions[k], x.row(static_cast<Eigen::Index>(k)).data());
  std::vector<double> q(actions.size());
  q_->predict(x, q);
  return q;
}

ActionVector Policy::act(const AggregateState& s) const {
  if (s.terminal()) return no_charging(diagonal_totals(s));
  const auto actions = sampling_.actions(s);
  const auto q = q_values(s, actions);
  std::size_t best = 0;
  for (std::size_t k = 1; k < q.size(); ++k)
    if (q[k] < q[best]) best = k;
  return actions[best];
}

double Policy::value(const AggregateState& s) const {
  if (s.terminal()) return 0.0;
  const auto q = q_values(s, sampling_.actions(s));
  double best = std::numeric_limits<double>::infinity();
  for (double v : q) best = std::min(best, v);
  return best;
}

void Policy::save(std::ostream& out) const {
  out.write(kPolicyMagic.data(), static_cast<std::streamsize>(kPolicyMagic.size()));
  binary::write<std::int32_t>(out, s_max_);
  binary::write<std::uint64_t>(out, sampling_.cap);
  binary::write<std::uint64_t>(out, sampling_.seed);
  q_->save(out);
  if (!out) throw std::runtime_error("failed writing policy");
}

Policy Policy::load(std::istream& in) {
  binary::expect_magic(in, kPolicyMagic, "policy");
  const int s_max = binary::read<std::int32_t>(in);
  ActionSampling sampling;
  sampling.cap = binary::read<std::uint64_t>(in);
  sampling.seed = binary::read<std::uint64_t>(in);
  std::shared_ptr<const Regressor> q = load_regressor(in);
  return Policy(std::move(q), s_max, sampling);
}

void Policy::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save(out);
}

Policy Policy::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load(in);
}

// ---------------------------------------------------------------------------
// Fitted Q-iteration

Policy fitted_q_iteration(const ExperienceSet& f, std::unique_ptr<Regressor> reg, const FqiOptions& opts) {
  if (f.tuples.empty()) throw std::invalid_argument("fitted_q_iteration: empty experience set");
  if (!reg) throw std::invalid_argument("fitted_q_iteration: no regressor");
  const int s_max = f.tuples.front().s.s_max();
  const int steps = opts.t_steps > 0 ? opts.t_steps : s_max;
  const std::size_t rows = f.tuples.size();
  const auto dim = static_cast<Eigen::Index>(feature_length(s_max));

  FeatureMatrix x(static_cast<Eigen::Index>(rows), dim);
  for (std::size_t r = 0; r < rows; ++r) {
    if (f.tuples[r].s.s_max() != s_max) throw std::invalid_argument("fitted_q_iteration: mixed s_max");
    encode_into(f.tuples[r].s, f.tuples[r].u, x.row(static_cast<Eigen::Index>(r)).data());
  }

  // Each distinct non-terminal successor is valued once per iteration.
  std::unordered_map<AggregateState, std::size_t, StateKeyHash, StateKeyEqual> index;
  std::vector<const AggregateState*> distinct;
  std::vector<std::ptrdiff_t> next_of(rows, -1);
  for (std::size_t r = 0; r < rows; ++r) {
    const AggregateState& sn = f.tuples[r].s_next;
    if (sn.terminal()) continue;
    auto [it, fresh] = index.emplace(sn, distinct.size());
    if (fresh) distinct.push_back(&sn);
    next_of[r] = static_cast<std::ptrdiff_t>(it->second);
  }
  index.clear();

  std::shared_ptr<Regressor> q(std::move(reg));
  std::vector<double> next_value(distinct.size(), 0.0);
  std::vector<double> y(rows);
  for (int it = 1; it <= steps; ++it) {
    if (it > 1) {
      const Policy greedy(q, s_max, opts.sampling);
      parallel_for(distinct.size(), opts.workers,
                   [&](std::size_t k) { next_value[k] = greedy.value(*distinct[k]); });
    }
    FqiIteration stats{it, rows, distinct.size(), 0.0, -std::numeric_limits<double>::infinity()};
    for (std::size_t r = 0; r < rows; ++r) {
      y[r] = f.tuples[r].cost + (next_of[r] < 0 ? 0.0 : next_value[static_cast<std::size_t>(next_of[r])]);
      if (!std::isfinite(y[r]))
        throw DivergenceError("fqi iteration " + std::to_string(it) + ": non-finite target at row " +
                              std::to_string(r));
      stats.mean_target += y[r];
      stats.max_target = std::max(stats.max_target, y[r]);
    }
    stats.mean_target /= static_cast<double>(rows);
    try {
      q->fit(x, y);
    } catch (const DivergenceError& e) {
      throw DivergenceError("fqi iteration " + std::to_string(it) + ": " + e.what());
    }
    if (opts.on_iteration) opts.on_iteration(stats);
  }
  return Policy(std::move(q), s_max, opts.sampling);
}

}  // namespace evcoord
