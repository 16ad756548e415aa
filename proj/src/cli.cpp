#include "evcoord/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evcoord/baselines.hpp"
#include "evcoord/errors.hpp"
#include "evcoord/evaluation.hpp"
#include "evcoord/fqi.hpp"
#include "evcoord/session_data.hpp"
#include "evcoord/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace evcoord {

namespace {

/// Bad invocation or missing input artifact; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw UsageError("missing artifact: no " + what + " given");
  if (!fs::is_regular_file(path)) throw UsageError("missing artifact: " + what + " '" + path + "' not found");
}

/// Output directory of one run. Files claimed here are deleted again unless
/// the run commits, so a failed run leaves no partial outputs behind.
class RunDir {
 public:
  explicit RunDir(const std::string& root) : root_(root) {
    if (root.empty()) throw UsageError("--out is required");
    if (!fs::exists(root_)) {
      fs::create_directories(root_);
      created_root_ = true;
    } else if (!fs::is_directory(root_)) {
      throw UsageError("--out '" + root + "' is not a directory");
    }
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  ~RunDir() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = claimed_.rbegin(); it != claimed_.rend(); ++it) fs::remove(root_ / *it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(root_ / *it, ec);
    if (created_root_) fs::remove(root_, ec);
  }

  fs::path claim(const std::string& name) {
    const fs::path rel(name);
    if (rel.has_parent_path() && !fs::exists(root_ / rel.parent_path())) {
      fs::create_directories(root_ / rel.parent_path());
      dirs_.push_back(rel.parent_path());
    }
    claimed_.push_back(rel);
    return root_ / rel;
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(claim(name), std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("failed writing " + name);
  }
  void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

  /// Writes manifest.json (config hash, seeds, input and output digests) and keeps the outputs.
  void commit(const std::string& command, const json& config, const json& seeds, const json& inputs) {
    json outputs = json::object();
    for (const auto& rel : claimed_) outputs[rel.generic_string()] = hex64(fnv1a(slurp(root_ / rel)));
    const std::string config_text = config.dump();
    write_json("manifest.json", {{"tool", "evcoord"},
                                 {"version", kVersion},
                                 {"command", command},
                                 {"config", config},
                                 {"config_hash", hex64(fnv1a(config_text))},
                                 {"seeds", seeds},
                                 {"inputs", inputs},
                                 {"outputs", outputs}});
    committed_ = true;
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  bool created_root_ = false;
  bool committed_ = false;
  std::vector<fs::path> claimed_;
  std::vector<fs::path> dirs_;
};

json input_digest(const std::string& path) { return {{"path", path}, {"fnv1a", hex64(fnv1a(slurp(path)))}}; }

// ---------------------------------------------------------------------------
// Shared option groups

struct FleetOptions {
  int n_max = 10;
  int slot_minutes = 120;
  int horizon_minutes = 24 * 60;
  std::string episode_start = "07:00";

  void add(CLI::App* app) {
    app->add_option("--n-max", n_max, "Charging stations in the fleet")->capture_default_str();
    app->add_option("--slot-minutes", slot_minutes, "Decision slot length")->capture_default_str();
    app->add_option("--horizon-minutes", horizon_minutes, "Episode length")->capture_default_str();
    app->add_option("--episode-start", episode_start, "Time of day episodes start (HH:MM)")
        ->capture_default_str();
  }

  FleetConfig resolve() const {
    FleetConfig cfg;
    cfg.n_max = n_max;
    cfg.slot = std::chrono::minutes(slot_minutes);
    cfg.h_max = std::chrono::minutes(horizon_minutes);
    int hh = -1, mm = -1;
    char tail = 0;
    if (std::sscanf(episode_start.c_str(), "%d:%d%c", &hh, &mm, &tail) != 2 || hh < 0 || hh > 23 || mm < 0 ||
        mm > 59)
      throw UsageError("--episode-start must be HH:MM, got '" + episode_start + "'");
    cfg.episode_start = std::chrono::minutes(hh * 60 + mm);
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

struct DayFilter {
  std::string from;
  std::string to;

  void add(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "from", from, "First day to use (YYYY-MM-DD)");
    app->add_option("--" + prefix + "to", to, "Last day to use (YYYY-MM-DD)");
  }

  std::vector<EpisodeDay> apply(const std::vector<EpisodeDay>& days) const {
    std::optional<Date> lo, hi;
    try {
      if (!from.empty()) lo = parse_date(from);
      if (!to.empty()) hi = parse_date(to);
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
    std::vector<EpisodeDay> out;
    for (const auto& d : days)
      if ((!lo || *lo <= d.date) && (!hi || d.date <= *hi)) out.push_back(d);
    return out;
  }

  json to_json() const { return {{"from", from}, {"to", to}}; }
};

struct SamplingOptions {
  std::size_t cap = 512;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--action-cap", cap, "Largest action set enumerated exhaustively")->capture_default_str();
    app->add_option("--action-seed", seed, "Seed of the sampled action sets")->capture_default_str();
  }
  ActionSampling resolve() const {
    if (cap < 1) throw UsageError("--action-cap must be >= 1");
    return {cap, seed};
  }
};

struct RegressorOptions {
  std::string kind = "mlp";
  std::vector<int> hidden{128, 64};
  double learning_rate = 1e-3;
  int epochs = 20;
  int batch_size = 64;
  double huber_delta = 1.0;
  std::uint64_t mlp_seed = 1;
  bool raw_targets = false;
  int t_steps = 0;

  void add(CLI::App* app) {
    app->add_option("--regressor", kind, "mlp or exact")
        ->check(CLI::IsMember({"mlp", "exact"}))
        ->capture_default_str();
    app->add_option("--hidden", hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
    app->add_option("--learning-rate", learning_rate, "Adam step size")->capture_default_str();
    app->add_option("--epochs", epochs, "Epochs per FQI iteration")->capture_default_str();
    app->add_option("--batch-size", batch_size, "Minibatch size")->capture_default_str();
    app->add_option("--huber-delta", huber_delta, "Huber loss threshold")->capture_default_str();
    app->add_option("--mlp-seed", mlp_seed, "Weight init and shuffling seed")->capture_default_str();
    app->add_flag("--raw-targets", raw_targets, "Fit unstandardized targets");
    app->add_option("--t-steps", t_steps, "FQI iterations (0 = s_max)")->capture_default_str();
  }

  TrainingSetup resolve(const ActionSampling& sampling, int workers) const {
    TrainingSetup s;
    s.exact_table = kind == "exact";
    s.mlp.hidden = hidden;
    s.mlp.learning_rate = learning_rate;
    s.mlp.epochs = epochs;
    s.mlp.batch_size = batch_size;
    s.mlp.huber_delta = huber_delta;
    s.mlp.seed = mlp_seed;
    s.mlp.standardize_targets = !raw_targets;
    s.sampling = sampling;
    s.t_steps = t_steps;
    s.workers = workers;
    if (!s.exact_table) {
      try {
        Mlp probe(s.mlp);
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
    }
    return s;
  }

  std::unique_ptr<Regressor> make(const TrainingSetup& s) const {
    if (s.exact_table) return std::make_unique<ExactTable>();
    return std::make_unique<Mlp>(s.mlp);
  }
};

// ---------------------------------------------------------------------------
// Subcommands

struct Globals {
  std::string out;
  int workers = 1;
  bool verbose = false;
  bool quiet = false;
};

void run_ingest(const Globals& g, const std::string& input, int top_stations, const FleetOptions& fleet) {
  require_file("session CSV", input);
  const FleetConfig cfg = fleet.resolve();
  RunDir run(g.out);
  LoadResult loaded = load_sessions(input, cfg);
  std::vector<Session> sessions = std::move(loaded.sessions);
  const int top = top_stations < 0 ? cfg.n_max : top_stations;
  if (top > 0) sessions = select_top_stations(sessions, top);
  EpisodizeResult ep = episodize(sessions, cfg);
  PreprocessSummary summary = loaded.summary;
  summary.dropped_outside_window += ep.summary.dropped_outside_window;
  summary.departure_clipped += ep.summary.departure_clipped;
  summary.charge_clipped += ep.summary.charge_clipped;
  summary.days = ep.summary.days;
  summary.sessions_kept = ep.summary.sessions_kept;
  save_days(run.claim("days.json"), ep.days, cfg);
  run.write_json("ingest_summary.json", summary);
  run.commit("ingest", {{"fleet", cfg}, {"top_stations", top}}, json::object(),
             {{"sessions", input_digest(input)}});
}

struct SynthOptions {
  int days = 0;
  std::uint64_t seed = 0;
  std::string first_day = "2015-01-01";
  TwoPeakParams profile;
};

void run_synth(const Globals& g, const SynthOptions& o, const FleetOptions& fleet) {
  if (o.days < 1) throw UsageError("--days must be >= 1");
  const FleetConfig cfg = fleet.resolve();
  Date first;
  try {
    first = parse_date(o.first_day);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  ArrivalProfile profile;
  try {
    profile = two_peak_profile(cfg, o.profile);
    profile.validate(cfg);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  RunDir run(g.out);
  const auto days = generate_synthetic(o.days, cfg, profile, o.seed, first);
  save_days(run.claim("days.json"), days, cfg);
  std::vector<Session> all;
  for (const auto& d : days) all.insert(all.end(), d.sessions.begin(), d.sessions.end());
  std::ofstream csv(run.claim("sessions.csv"));
  write_sessions(csv, all);
  csv.close();
  const auto& p = o.profile;
  run.commit("synth",
             {{"fleet", cfg},
              {"days", o.days},
              {"first_day", o.first_day},
              {"profile",
               {{"morning_peak_hours", p.morning_peak_hours},
                {"evening_peak_hours", p.evening_peak_hours},
                {"peak_spread_hours", p.peak_spread_hours},
                {"morning_weight", p.morning_weight},
                {"mean_dwell_hours", p.mean_dwell_hours},
                {"dwell_spread_hours", p.dwell_spread_hours},
                {"max_charge_hours", p.max_charge_hours},
                {"charge_rate_kw", p.charge_rate_kw},
                {"mean_sessions_per_day", p.mean_sessions_per_day}}}},
             {{"synth", o.seed}}, json::object());
}

DayStore load_day_store(const std::string& path) {
  require_file("day store", path);
  return load_days(path);
}

struct CollectArgs {
  std::string days;
  int trajectories = 100;
  std::uint64_t seed = 0;
  bool exhaustive = false;
  std::size_t max_tuples = 5'000'000;
};

void run_collect(const Globals& g, const CollectArgs& a, const DayFilter& filter, const SamplingOptions& so) {
  const DayStore store = load_day_store(a.days);
  const auto days = filter.apply(store.days);
  if (days.empty()) throw UsageError("no days selected from " + a.days);
  if (a.trajectories < 1) throw UsageError("--trajectories must be >= 1");
  const ActionSampling sampling = so.resolve();
  RunDir run(g.out);
  ExperienceSet f = a.exhaustive ? collect_exhaustive(days, store.cfg, sampling, a.max_tuples)
                                 : collect_experience(days, store.cfg, a.trajectories, a.seed,
                                                      {sampling, g.workers});
  if (a.exhaustive) f.meta.seed = a.seed;
  save_experience(run.claim("experience.jsonl"), f);
  log::info("collected " + std::to_string(f.tuples.size()) + " transitions");
  run.commit("collect",
             {{"filter", filter.to_json()},
              {"trajectories_per_day", a.trajectories},
              {"exhaustive", a.exhaustive},
              {"max_tuples", a.max_tuples},
              {"action_cap", sampling.cap}},
             {{"collect", a.seed}, {"action", sampling.seed}}, {{"days", input_digest(a.days)}});
}

void run_train(const Globals& g, const std::string& experience, const RegressorOptions& ro,
               const SamplingOptions& so, bool sampling_given) {
  require_file("experience set", experience);
  const ExperienceSet f = load_experience(fs::path(experience));
  if (f.tuples.empty()) throw UsageError("experience set '" + experience + "' is empty");
  const ActionSampling sampling = sampling_given ? so.resolve() : f.meta.sampling;
  const TrainingSetup setup = ro.resolve(sampling, g.workers);
  RunDir run(g.out);
  json log_rows = json::array();
  FqiOptions opts;
  opts.t_steps = setup.t_steps;
  opts.sampling = sampling;
  opts.workers = g.workers;
  opts.on_iteration = [&](const FqiIteration& it) {
    log::info("fqi iteration " + std::to_string(it.iteration) + ": mean target " +
              format_double(it.mean_target));
    log_rows.push_back({{"iteration", it.iteration},
                        {"rows", it.rows},
                        {"distinct_next_states", it.distinct_next_states},
                        {"mean_target", it.mean_target},
                        {"max_target", it.max_target}});
  };
  const Policy policy = fitted_q_iteration(f, ro.make(setup), opts);
  policy.save(run.claim("policy.bin"));
  run.write_json("fqi_log.json", {{"fleet", f.meta.fleet}, {"iterations", log_rows}});
  run.commit("train", {{"training", setup}}, {{"mlp", setup.mlp.seed}, {"action", sampling.seed}},
             {{"experience", input_digest(experience)}});
}

void run_eval(const Globals& g, const std::string& policy_path, const std::string& days_path,
              const DayFilter& filter) {
  require_file("policy", policy_path);
  const DayStore store = load_day_store(days_path);
  const auto days = filter.apply(store.days);
  if (days.empty()) throw UsageError("no days selected from " + days_path);
  const Policy policy = Policy::load(fs::path(policy_path));
  if (policy.s_max() != store.cfg.s_max())
    throw UsageError("policy expects s_max " + std::to_string(policy.s_max()) + ", days use " +
                     std::to_string(store.cfg.s_max()));
  RunDir run(g.out);
  EvalReport report = evaluate_policy(policy, days, store.cfg, g.workers);
  report.label = "eval";
  run.write_json("eval_report.json", report);
  std::ostringstream csv;
  write_report_csv(csv, report);
  run.write_text("eval_report.csv", csv.str());
  run.commit("eval", {{"filter", filter.to_json()}}, {{"action", policy.sampling().seed}},
             {{"policy", input_digest(policy_path)}, {"days", input_digest(days_path)}});
}

struct SweepArgs {
  std::string study;
  std::string days;
  std::string policy;
  std::string test_from;
  std::string test_to;
  std::vector<int> spans{1, 3, 5, 7, 9};
  std::vector<int> samples{100};
  std::vector<int> scales{1, 2, 4, 8};
  int runs = 5;
  int window_days = 30;
  std::uint64_t seed = 0;
};

void run_sweep(const Globals& g, const SweepArgs& a, const RegressorOptions& ro, const SamplingOptions& so) {
  const DayStore store = load_day_store(a.days);
  const ActionSampling sampling = so.resolve();
  json config{{"study", a.study}, {"window_days", a.window_days}};
  json inputs{{"days", input_digest(a.days)}};
  json seeds{{"sweep", a.seed}, {"action", sampling.seed}};

  if (a.study == "scale") {
    require_file("policy", a.policy);
    const Policy policy = Policy::load(fs::path(a.policy));
    const auto test = DayFilter{a.test_from, a.test_to}.apply(store.days);
    if (test.empty()) throw UsageError("no test days selected");
    for (int s : a.scales)
      if (s < 1) throw UsageError("--scales entries must be >= 1");
    RunDir run(g.out);
    const auto rows = run_scale_test(policy, test, a.scales, store.cfg, g.workers);
    run.write_json("sweep.json", scale_to_json(rows));
    std::ostringstream csv;
    write_scale_csv(csv, rows);
    run.write_text("sweep.csv", csv.str());
    config["scales"] = a.scales;
    config["test"] = {{"from", a.test_from}, {"to", a.test_to}};
    inputs["policy"] = input_digest(a.policy);
    run.commit("sweep", config, {{"action", policy.sampling().seed}}, inputs);
    return;
  }

  const TrainingSetup setup = ro.resolve(sampling, g.workers);
  config["training"] = setup;
  seeds["mlp"] = setup.mlp.seed;
  if (a.study == "training") {
    SplitSpec spec;
    try {
      spec.test_first = parse_date(a.test_from);
      spec.test_last = parse_date(a.test_to);
    } catch (const ParseError& e) {
      throw UsageError("training sweep needs --test-from and --test-to: " + std::string(e.what()));
    }
    spec.train_spans = a.spans;
    spec.window_days = a.window_days;
    spec.runs = a.runs;
    spec.seed = a.seed;
    RunDir run(g.out);
    TrainingSweep sweep;
    try {
      sweep = run_training_sweep(spec, a.samples, store.cfg, store.days, setup);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    run.write_json("sweep.json", sweep_to_json(sweep));
    std::ostringstream csv;
    write_sweep_csv(csv, sweep);
    run.write_text("sweep.csv", csv.str());
    config["split"] = spec;
    config["samples_per_day"] = a.samples;
    run.commit("sweep", config, seeds, inputs);
    return;
  }

  if (a.samples.size() != 1) throw UsageError("monthly sweep takes a single --samples value");
  MonthlySpec spec{a.window_days, a.samples.front(), a.seed};
  RunDir run(g.out);
  std::vector<MonthlyRow> rows;
  try {
    rows = run_monthly_sweep(spec, store.cfg, store.days, setup);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  run.write_json("sweep.json", monthly_to_json(rows));
  std::ostringstream csv;
  write_monthly_csv(csv, rows);
  run.write_text("sweep.csv", csv.str());
  config["samples_per_day"] = a.samples.front();
  run.commit("sweep", config, seeds, inputs);
}

void run_oracle(const Globals& g, const std::string& days_path, const DayFilter& filter, bool dp,
                std::size_t max_nodes) {
  const DayStore store = load_day_store(days_path);
  const auto days = filter.apply(store.days);
  if (days.empty()) throw UsageError("no days selected from " + days_path);
  RunDir run(g.out);
  std::ostringstream table;
  table << "date,sessions,bau_cost,opt_cost,dp_cost,dp_status\n";
  for (const auto& day : days) {
    const std::string date = format_date(day.date);
    table << date << ',' << day.sessions.size() << ',';
    if (peak_connected(day, store.cfg) > store.cfg.n_max) {
      table << ",,,over_capacity\n";
      continue;
    }
    const auto arrivals = arrivals_by_slot(day, store.cfg);
    const Schedule opt = offline_optimum(arrivals, store.cfg);
    table << format_double(bau_rollout(arrivals, store.cfg).cost) << ',' << format_double(opt.cost) << ',';
    if (dp) {
      try {
        table << format_double(dp_oracle(arrivals, store.cfg, max_nodes).optimal_return) << ",ok\n";
      } catch (const BudgetExceeded&) {
        table << ",budget_exceeded\n";
      }
    } else {
      table << ",skipped\n";
    }
    std::ofstream sched(run.claim("schedules/" + date + ".csv"));
    write_schedule_csv(sched, opt.loads);
  }
  run.write_text("oracle.csv", table.str());
  run.commit("oracle", {{"filter", filter.to_json()}, {"dp", dp}, {"max_nodes", max_nodes}}, json::object(),
             {{"days", input_digest(days_path)}});
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fleet EV charging coordination with fitted Q-iteration", "evcoord"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.require_subcommand(1);

  Globals g;
  app.add_option("--out", g.out, "Run directory for all outputs");
  app.add_option("--workers", g.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", g.verbose, "Progress messages");
  app.add_flag("-q,--quiet", g.quiet, "Suppress warnings");

  FleetOptions fleet;
  auto* ingest = app.add_subcommand("ingest", "Raw session CSV to episodic day store");
  std::string ingest_input;
  int top_stations = -1;
  ingest->add_option("--input", ingest_input, "Session CSV")->required();
  ingest->add_option("--top-stations", top_stations, "Keep the N busiest stations (default n-max, 0 keeps all)");
  fleet.add(ingest);

  auto* synth = app.add_subcommand("synth", "Generate synthetic episode days");
  SynthOptions so_synth;
  synth->add_option("--days", so_synth.days, "Number of days")->required();
  synth->add_option("--seed", so_synth.seed, "Generator seed")->required();
  synth->add_option("--first-day", so_synth.first_day, "Date of the first day")->capture_default_str();
  auto& prof = so_synth.profile;
  synth->add_option("--sessions-per-day", prof.mean_sessions_per_day, "Mean sessions per day (<= 0: n-max)");
  synth->add_option("--morning-peak", prof.morning_peak_hours, "Hours after episode start")->capture_default_str();
  synth->add_option("--evening-peak", prof.evening_peak_hours, "Hours after episode start")->capture_default_str();
  synth->add_option("--peak-spread", prof.peak_spread_hours, "Arrival spread in hours")->capture_default_str();
  synth->add_option("--morning-weight", prof.morning_weight, "Share of morning arrivals")->capture_default_str();
  synth->add_option("--mean-dwell", prof.mean_dwell_hours, "Mean connection time in hours")->capture_default_str();
  synth->add_option("--dwell-spread", prof.dwell_spread_hours, "Connection time spread")->capture_default_str();
  synth->add_option("--max-charge-hours", prof.max_charge_hours, "Longest charging need")->capture_default_str();
  synth->add_option("--charge-rate", prof.charge_rate_kw, "Charging power in kW")->capture_default_str();
  FleetOptions synth_fleet;
  synth_fleet.add(synth);

  auto* collect = app.add_subcommand("collect", "Random-action experience collection");
  CollectArgs collect_args;
  DayFilter collect_filter;
  SamplingOptions collect_sampling;
  collect->add_option("--days", collect_args.days, "Day store (days.json)")->required();
  collect->add_option("--trajectories", collect_args.trajectories, "Trajectories per day")->capture_default_str();
  collect->add_option("--seed", collect_args.seed, "Collection seed")->required();
  collect->add_flag("--exhaustive", collect_args.exhaustive, "Enumerate every reachable state-action pair");
  collect->add_option("--max-tuples", collect_args.max_tuples, "Budget for --exhaustive")->capture_default_str();
  collect_filter.add(collect);
  collect_sampling.add(collect);

  auto* train = app.add_subcommand("train", "Fitted Q-iteration to a policy file");
  std::string train_experience;
  RegressorOptions train_reg;
  SamplingOptions train_sampling;
  train->add_option("--experience", train_experience, "experience.jsonl")->required();
  train_reg.add(train);
  train_sampling.add(train);

  auto* eval = app.add_subcommand("eval", "Policy against BAU and the offline optimum");
  std::string eval_policy, eval_days;
  DayFilter eval_filter;
  eval->add_option("--policy", eval_policy, "policy.bin");
  eval->add_option("--days", eval_days, "Day store (days.json)")->required();
  eval_filter.add(eval);

  auto* sweep = app.add_subcommand("sweep", "Training-data, monthly or scale studies");
  SweepArgs sweep_args;
  RegressorOptions sweep_reg;
  SamplingOptions sweep_sampling;
  sweep->add_option("--study", sweep_args.study, "training, monthly or scale")
      ->required()
      ->check(CLI::IsMember({"training", "monthly", "scale"}));
  sweep->add_option("--days", sweep_args.days, "Day store (days.json)")->required();
  sweep->add_option("--policy", sweep_args.policy, "policy.bin (scale study)");
  sweep->add_option("--test-from", sweep_args.test_from, "First test day");
  sweep->add_option("--test-to", sweep_args.test_to, "Last test day");
  sweep->add_option("--spans", sweep_args.spans, "Training spans in window units")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--samples", sweep_args.samples, "Trajectories per day")->delimiter(',')->capture_default_str();
  sweep->add_option("--scales", sweep_args.scales, "Fleet multipliers")->delimiter(',')->capture_default_str();
  sweep->add_option("--runs", sweep_args.runs, "Random training windows per cell")->capture_default_str();
  sweep->add_option("--window-days", sweep_args.window_days, "Days per window unit")->capture_default_str();
  sweep->add_option("--seed", sweep_args.seed, "Sweep seed")->required();
  sweep_reg.add(sweep);
  sweep_sampling.add(sweep);

  auto* oracle = app.add_subcommand("oracle", "Offline optimum, BAU and optionally DP per day");
  std::string oracle_days;
  DayFilter oracle_filter;
  bool oracle_dp = false;
  std::size_t oracle_nodes = 2'000'000;
  oracle->add_option("--days", oracle_days, "Day store (days.json)")->required();
  oracle->add_flag("--dp", oracle_dp, "Also run the exact DP where it fits the budget");
  oracle->add_option("--max-nodes", oracle_nodes, "DP state-action budget")->capture_default_str();
  oracle_filter.add(oracle);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  log::set_level(g.quiet ? log::Level::kQuiet : g.verbose ? log::Level::kInfo : log::Level::kWarn);
  try {
    if (*ingest) {
      run_ingest(g, ingest_input, top_stations, fleet);
    } else if (*synth) {
      run_synth(g, so_synth, synth_fleet);
    } else if (*collect) {
      run_collect(g, collect_args, collect_filter, collect_sampling);
    } else if (*train) {
      const bool sampling_given = train->count("--action-cap") > 0 || train->count("--action-seed") > 0;
      run_train(g, train_experience, train_reg, train_sampling, sampling_given);
    } else if (*eval) {
      run_eval(g, eval_policy, eval_days, eval_filter);
    } else if (*sweep) {
      run_sweep(g, sweep_args, sweep_reg, sweep_sampling);
    } else if (*oracle) {
      run_oracle(g, oracle_days, oracle_filter, oracle_dp, oracle_nodes);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  out.flush();
  return 0;
}

}  // namespace evcoord
