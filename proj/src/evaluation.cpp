#include "evcoord/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "evcoord/baselines.hpp"
#include "evcoord/errors.hpp"
#include "evcoord/util.hpp"

namespace evcoord {

double normalized_cost(std::span<const double> policy_costs, std::span<const double> opt_costs) {
  if (policy_costs.size() != opt_costs.size())
    throw std::invalid_argument("normalized_cost: policy and optimum cost lists differ in length");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < opt_costs.size(); ++k) {
    if (!(opt_costs[k] > 0.0)) continue;
    sum += policy_costs[k] / opt_costs[k];
    ++used;
  }
  if (used == 0) throw std::invalid_argument("normalized_cost: no day with a positive optimal cost");
  return sum / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

const char* status_name(DayStatus s) {
  switch (s) {
    case DayStatus::kOk: return "ok";
    case DayStatus::kZeroOptimum: return "zero_optimum";
    case DayStatus::kOverCapacity: return "over_capacity";
  }
  return "ok";
}

DayStatus parse_status(const std::string& s) {
  if (s == "ok") return DayStatus::kOk;
  if (s == "zero_optimum") return DayStatus::kZeroOptimum;
  if (s == "over_capacity") return DayStatus::kOverCapacity;
  throw ParseError("unknown day status '" + s + "'", 0);
}

std::string ratio_text(double num, double den) {
  return den > 0.0 ? format_double(num / den) : std::string();
}

}  // namespace

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json days = nlohmann::json::array();
  for (const auto& d : r.days)
    days.push_back({{"date", d.date},
                    {"status", status_name(d.status)},
                    {"rl_cost", d.rl_cost},
                    {"bau_cost", d.bau_cost},
                    {"opt_cost", d.opt_cost},
                    {"rl_stranded", d.rl_stranded}});
  j = nlohmann::json{{"format", "evcoord.eval_report"},
                     {"version", EvalReport::kVersion},
                     {"label", r.label},
                     {"config", r.config},
                     {"c_rl", r.c_rl},
                     {"c_bau", r.c_bau},
                     {"c_opt", 1.0},
                     {"days_used", r.days_used},
                     {"days_excluded", r.days_excluded},
                     {"rl_stranded", r.rl_stranded},
                     {"days", std::move(days)}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  if (j.at("format") != "evcoord.eval_report") throw ParseError("not an evaluation report", 0);
  if (j.at("version").get<int>() != EvalReport::kVersion)
    throw ParseError("unsupported evaluation report version", 0);
  r.label = j.at("label").get<std::string>();
  r.config = j.at("config");
  r.c_rl = j.at("c_rl").get<double>();
  r.c_bau = j.at("c_bau").get<double>();
  r.days_used = j.at("days_used").get<int>();
  r.days_excluded = j.at("days_excluded").get<int>();
  r.rl_stranded = j.at("rl_stranded").get<int>();
  r.days.clear();
  for (const auto& d : j.at("days"))
    r.days.push_back({d.at("date").get<std::string>(), parse_status(d.at("status").get<std::string>()),
                      d.at("rl_cost").get<double>(), d.at("bau_cost").get<double>(),
                      d.at("opt_cost").get<double>(), d.at("rl_stranded").get<int>()});
}

void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "date,status,rl_cost,bau_cost,opt_cost,rl_ratio,bau_ratio,rl_stranded\n";
  for (const auto& d : r.days)
    out << d.date << ',' << status_name(d.status) << ',' << format_double(d.rl_cost) << ','
        << format_double(d.bau_cost) << ',' << format_double(d.opt_cost) << ','
        << ratio_text(d.rl_cost, d.opt_cost) << ',' << ratio_text(d.bau_cost, d.opt_cost) << ','
        << d.rl_stranded << '\n';
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate_policy(const Policy& policy, const std::vector<EpisodeDay>& test_days,
                           const FleetConfig& cfg, int workers) {
  EvalReport report;
  report.config = {{"fleet", cfg},
                   {"action_cap", policy.sampling().cap},
                   {"action_seed", policy.sampling().seed},
                   {"regressor", policy.regressor().kind()}};
  report.days.resize(test_days.size());
  const Controller greedy = [&policy](const AggregateState& s) { return policy.act(s); };

  parallel_for(test_days.size(), workers, [&](std::size_t k) {
    DayResult& out = report.days[k];
    out.date = format_date(test_days[k].date);
    if (peak_connected(test_days[k], cfg) > cfg.n_max) {
      out.status = DayStatus::kOverCapacity;
      return;
    }
    const auto arrivals = arrivals_by_slot(test_days[k], cfg);
    out.opt_cost = offline_optimum(arrivals, cfg).cost;
    out.bau_cost = bau_rollout(arrivals, cfg).cost;
    const DayRollout rl = rollout(arrivals, cfg, greedy);
    out.rl_cost = rl.cost;
    out.rl_stranded = rl.stranded;
    out.status = out.opt_cost > 0.0 ? DayStatus::kOk : DayStatus::kZeroOptimum;
  });

  std::vector<double> rl, bau, opt;
  for (const auto& d : report.days) {
    report.rl_stranded += d.rl_stranded;
    if (d.status != DayStatus::kOk) {
      ++report.days_excluded;
      continue;
    }
    rl.push_back(d.rl_cost);
    bau.push_back(d.bau_cost);
    opt.push_back(d.opt_cost);
  }
  report.days_used = static_cast<int>(opt.size());
  report.c_rl = normalized_cost(rl, opt);
  report.c_bau = normalized_cost(bau, opt);
  return report;
}

// ---------------------------------------------------------------------------
// Training

void to_json(nlohmann::json& j, const TrainingSetup& s) {
  j = nlohmann::json{{"regressor", s.exact_table ? "exact_table" : "mlp"},
                     {"action_cap", s.sampling.cap},
                     {"action_seed", s.sampling.seed},
                     {"t_steps", s.t_steps}};
  if (!s.exact_table)
    j["mlp"] = {{"hidden", s.mlp.hidden},
                {"learning_rate", s.mlp.learning_rate},
                {"epochs", s.mlp.epochs},
                {"batch_size", s.mlp.batch_size},
                {"huber_delta", s.mlp.huber_delta},
                {"seed", s.mlp.seed},
                {"standardize_targets", s.mlp.standardize_targets}};
}

Policy train_policy(const std::vector<EpisodeDay>& train_days, const FleetConfig& cfg,
                    int trajectories_per_day, std::uint64_t seed, const TrainingSetup& setup) {
  const ExperienceSet f =
      collect_experience(train_days, cfg, trajectories_per_day, seed, {setup.sampling, setup.workers});
  if (f.tuples.empty()) throw std::invalid_argument("train_policy: no usable training day");
  std::unique_ptr<Regressor> reg;
  if (setup.exact_table) {
    reg = std::make_unique<ExactTable>();
  } else {
    MlpConfig mlp = setup.mlp;
    mlp.seed = mix_seed(setup.mlp.seed, seed);
    reg = std::make_unique<Mlp>(mlp);
  }
  FqiOptions opts;
  opts.t_steps = setup.t_steps;
  opts.sampling = setup.sampling;
  opts.workers = setup.workers;
  return fitted_q_iteration(f, std::move(reg), opts);
}

void to_json(nlohmann::json& j, const SplitSpec& s) {
  j = nlohmann::json{{"test_first", format_date(s.test_first)},
                     {"test_last", format_date(s.test_last)},
                     {"train_spans", s.train_spans},
                     {"window_days", s.window_days},
                     {"runs", s.runs},
                     {"seed", s.seed}};
}

namespace {

bool in_range(const Date& d, const Date& first, const Date& last) { return first <= d && d <= last; }

SweepSummary summarize(int span, int samples, const std::vector<const SweepCell*>& cells) {
  SweepSummary s{span, samples};
  std::vector<double> rl;
  double bau = 0.0;
  for (const auto* c : cells) {
    if (!c->present) continue;
    rl.push_back(c->report.c_rl);
    bau += c->report.c_bau;
  }
  s.runs_present = static_cast<int>(rl.size());
  if (rl.empty()) return s;
  const double n = static_cast<double>(rl.size());
  s.mean_rl = std::accumulate(rl.begin(), rl.end(), 0.0) / n;
  s.mean_bau = bau / n;
  s.min_rl = *std::min_element(rl.begin(), rl.end());
  s.max_rl = *std::max_element(rl.begin(), rl.end());
  if (rl.size() > 1) {
    double var = 0.0;
    for (double v : rl) var += (v - s.mean_rl) * (v - s.mean_rl);
    s.std_rl = std::sqrt(var / (n - 1.0));
  }
  return s;
}

nlohmann::json cell_json(const SweepCell& c) {
  nlohmann::json j{{"span", c.span}, {"samples", c.samples}, {"run", c.run}, {"present", c.present}};
  if (c.present) {
    j["train_first"] = c.train_first;
    j["train_last"] = c.train_last;
    j["report"] = c.report;
  }
  return j;
}

}  // namespace

TrainingSweep run_training_sweep(const SplitSpec& spec, const std::vector<int>& samples_per_day,
                                 const FleetConfig& cfg, const std::vector<EpisodeDay>& data,
                                 const TrainingSetup& setup) {
  if (spec.runs < 1) throw ConfigError("sweep runs must be >= 1");
  if (spec.window_days < 1) throw ConfigError("window_days must be >= 1");
  if (spec.test_last < spec.test_first) throw ConfigError("test range is empty");
  if (samples_per_day.empty() || spec.train_spans.empty()) throw ConfigError("sweep grid is empty");

  std::vector<EpisodeDay> test;
  for (const auto& d : data)
    if (in_range(d.date, spec.test_first, spec.test_last)) test.push_back(d);
  if (test.empty()) throw std::invalid_argument("no data inside the test range");

  TrainingSweep sweep{spec, samples_per_day, {}, {}};
  for (int span : spec.train_spans) {
    if (span < 1) throw ConfigError("train spans must be >= 1");
    const auto len = static_cast<std::size_t>(span) * static_cast<std::size_t>(spec.window_days);
    std::vector<std::size_t> starts;
    for (std::size_t a = 0; a + len <= data.size(); ++a) {
      bool clean = true;
      for (std::size_t k = a; k < a + len && clean; ++k)
        clean = !in_range(data[k].date, spec.test_first, spec.test_last);
      if (clean) starts.push_back(a);
    }
    for (int samples : samples_per_day) {
      for (int run = 0; run < spec.runs; ++run) {
        SweepCell cell;
        cell.span = span;
        cell.samples = samples;
        cell.run = run;
        if (!starts.empty()) {
          // The window depends on (span, run) only, so sample counts are compared on equal data.
          std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(span)),
                                       static_cast<std::uint64_t>(run)));
          const std::size_t a =
              starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];
          const std::vector<EpisodeDay> train(data.begin() + static_cast<std::ptrdiff_t>(a),
                                              data.begin() + static_cast<std::ptrdiff_t>(a + len));
          const std::uint64_t seed =
              mix_seed(mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(span)),
                                static_cast<std::uint64_t>(samples)),
                       static_cast<std::uint64_t>(run) + 1000);
          const Policy policy = train_policy(train, cfg, samples, seed, setup);
          cell.present = true;
          cell.train_first = format_date(train.front().date);
          cell.train_last = format_date(train.back().date);
          cell.report = evaluate_policy(policy, test, cfg, setup.workers);
          cell.report.label = "span=" + std::to_string(span) + " samples=" + std::to_string(samples) +
                              " run=" + std::to_string(run);
          cell.report.config["training"] = setup;
          cell.report.config["collect_seed"] = seed;
        } else {
          log::warn("no training window of " + std::to_string(span) + " units outside the test range");
        }
        sweep.cells.push_back(std::move(cell));
      }
      std::vector<const SweepCell*> group;
      for (std::size_t k = sweep.cells.size() - static_cast<std::size_t>(spec.runs); k < sweep.cells.size(); ++k)
        group.push_back(&sweep.cells[k]);
      sweep.summary.push_back(summarize(span, samples, group));
    }
  }
  return sweep;
}

nlohmann::json sweep_to_json(const TrainingSweep& sweep) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : sweep.cells) cells.push_back(cell_json(c));
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : sweep.summary)
    summary.push_back({{"span", s.span},
                       {"samples", s.samples},
                       {"runs_present", s.runs_present},
                       {"mean_c_rl", s.mean_rl},
                       {"std_c_rl", s.std_rl},
                       {"min_c_rl", s.min_rl},
                       {"max_c_rl", s.max_rl},
                       {"mean_c_bau", s.mean_bau}});
  return {{"format", "evcoord.training_sweep"},
          {"version", EvalReport::kVersion},
          {"split", sweep.spec},
          {"samples_per_day", sweep.samples_per_day},
          {"cells", std::move(cells)},
          {"summary", std::move(summary)}};
}

void write_sweep_csv(std::ostream& out, const TrainingSweep& sweep) {
  out << "span,samples,runs_present,mean_c_rl,std_c_rl,min_c_rl,max_c_rl,mean_c_bau\n";
  for (const auto& s : sweep.summary) {
    out << s.span << ',' << s.samples << ',' << s.runs_present;
    if (s.runs_present == 0) {
      out << ",,,,,\n";
      continue;
    }
    out << ',' << format_double(s.mean_rl) << ',' << format_double(s.std_rl) << ','
        << format_double(s.min_rl) << ',' << format_double(s.max_rl) << ','
        << format_double(s.mean_bau) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Monthly sweep

std::vector<MonthlyRow> run_monthly_sweep(const MonthlySpec& spec, const FleetConfig& cfg,
                                          const std::vector<EpisodeDay>& data, const TrainingSetup& setup) {
  if (spec.window_days < 1) throw ConfigError("window_days must be >= 1");
  if (spec.samples_per_day < 1) throw ConfigError("samples_per_day must be >= 1");
  const auto w = static_cast<std::size_t>(spec.window_days);
  std::vector<MonthlyRow> rows;
  for (std::size_t begin = 0, unit = 0; begin < data.size(); begin += w, ++unit) {
    const std::size_t end = std::min(begin + w, data.size());
    MonthlyRow row;
    row.unit = static_cast<int>(unit);
    row.first_day = format_date(data[begin].date);
    row.last_day = format_date(data[end - 1].date);
    const std::vector<EpisodeDay> test(data.begin() + static_cast<std::ptrdiff_t>(begin),
                                       data.begin() + static_cast<std::ptrdiff_t>(end));
    const bool has_sessions =
        std::any_of(test.begin(), test.end(), [](const EpisodeDay& d) { return !d.sessions.empty(); });
    if (!has_sessions) {
      row.skipped = true;
      row.note = "no sessions in window";
    } else if (begin == 0) {
      row.skipped = true;
      row.note = "no preceding training data";
    } else {
      const std::vector<EpisodeDay> train(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(begin));
      const std::uint64_t seed = mix_seed(spec.seed, unit);
      try {
        const Policy policy = train_policy(train, cfg, spec.samples_per_day, seed, setup);
        row.report = evaluate_policy(policy, test, cfg, setup.workers);
        row.report.label = "unit=" + std::to_string(unit);
        row.report.config["training"] = setup;
        row.report.config["collect_seed"] = seed;
        row.improvement = row.report.c_bau - row.report.c_rl;
      } catch (const std::invalid_argument& e) {
        row.skipped = true;
        row.note = e.what();
      }
    }
    if (row.skipped) log::info("window " + std::to_string(unit) + " skipped: " + row.note);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json monthly_to_json(const std::vector<MonthlyRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"unit", r.unit},
                     {"first_day", r.first_day},
                     {"last_day", r.last_day},
                     {"skipped", r.skipped},
                     {"note", r.note}};
    if (!r.skipped) {
      j["improvement"] = r.improvement;
      j["report"] = r.report;
    }
    out.push_back(std::move(j));
  }
  return {{"format", "evcoord.monthly_sweep"}, {"version", EvalReport::kVersion}, {"rows", std::move(out)}};
}

void write_monthly_csv(std::ostream& out, const std::vector<MonthlyRow>& rows) {
  out << "unit,first_day,last_day,skipped,c_rl,c_bau,improvement,note\n";
  for (const auto& r : rows) {
    out << r.unit << ',' << r.first_day << ',' << r.last_day << ',' << (r.skipped ? 1 : 0) << ',';
    if (!r.skipped)
      out << format_double(r.report.c_rl) << ',' << format_double(r.report.c_bau) << ','
          << format_double(r.improvement);
    else
      out << ",,";
    std::string note = r.note;
    std::replace(note.begin(), note.end(), '"', '\'');
    out << ",\"" << note << "\"\n";
  }
}

// ---------------------------------------------------------------------------
// Scale test

std::vector<ScaleRow> run_scale_test(const Policy& policy, const std::vector<EpisodeDay>& test_days,
                                     const std::vector<int>& scales, const FleetConfig& cfg, int workers) {
  std::vector<ScaleRow> rows;
  for (int scale : scales) {
    FleetConfig scaled_cfg = cfg;
    std::vector<EpisodeDay> scaled;
    scaled.reserve(test_days.size());
    for (const auto& day : test_days) {
      ScaledDay s = duplicate_sessions(day, cfg, scale);
      scaled_cfg = s.cfg;
      scaled.push_back(std::move(s.day));
    }
    scaled_cfg.n_max = cfg.n_max * scale;
    ScaleRow row{scale, evaluate_policy(policy, scaled, scaled_cfg, workers)};
    row.report.label = "scale=" + std::to_string(scale);
    row.report.config["scale"] = scale;
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json scale_to_json(const std::vector<ScaleRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back({{"scale", r.scale}, {"report", r.report}});
  return {{"format", "evcoord.scale_test"}, {"version", EvalReport::kVersion}, {"rows", std::move(out)}};
}

void write_scale_csv(std::ostream& out, const std::vector<ScaleRow>& rows) {
  out << "scale,n_max,c_rl,c_bau,rl_stranded\n";
  for (const auto& r : rows)
    out << r.scale << ',' << r.report.config.at("fleet").at("n_max").get<int>() << ','
        << format_double(r.report.c_rl) << ',' << format_double(r.report.c_bau) << ','
        << r.report.rl_stranded << '\n';
}

}  // namespace evcoord
