#include "experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <thread>

#include "bidlab/learn.hpp"
#include "bidlab/nc_verify.hpp"
#include "bidlab/network_market.hpp"
#include "bidlab/param_maps.hpp"
#include "bidlab/profit_oracle.hpp"
#include "bidlab/single_market.hpp"
#include "bidlab/validity.hpp"
#include "io_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bidlab::cli {

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr int kFormatVersion = 1;

const std::set<std::string> kExperiments{"axis-a",      "axis-b",         "nc-check",
                                         "multi-agent", "exploitability", "oracle-audit"};
const std::set<std::string> kModes{"dpmp", "sort", "clip", "project"};
const std::set<std::string> kAlgos{"ppo", "a2c", "ddpg"};

json pg_train_defaults(double lr_actor) {
  return json{{"hidden", {64, 64}},
              {"gamma", 0.0},
              {"lr_actor", lr_actor},
              {"lr_critic", 3e-3},
              {"max_grad_norm", 0.5},
              {"init_log_std", -0.7},
              {"lr_final_frac", 1.0},
              {"entropy_final_frac", 1.0},
              {"log_std_anneal_to", nullptr},
              {"rollout_episodes", 5},
              {"epochs", 4},
              {"minibatch", 256},
              {"gae_lambda", 0.95},
              {"clip_ratio", 0.2},
              {"entropy_coef", 1e-4},
              {"value_coef", 0.5}};
}

json ddpg_train_defaults() {
  return json{{"hidden", {64, 64}},
              {"gamma", 0.0},
              {"lr_actor", 3e-4},
              {"lr_critic", 3e-3},
              {"max_grad_norm", 0.5},
              {"init_log_std", -0.7},
              {"replay_capacity", 100000},
              {"batch_size", 128},
              {"tau", 0.005},
              {"noise_std_init", 0.6},
              {"noise_std_final", 0.02},
              {"warmup_steps", 2000},
              {"update_every", 2}};
}

json single_env_defaults() {
  return json{{"segments", 10},
              {"q_max", 1000.0},
              {"price_cap", 1000.0},
              {"cost_a", 20.0},
              {"cost_b", 300.0},
              {"cost_grid_points", 101},
              {"gamma_lo", 1.0},
              {"gamma_hi", 2.0},
              {"k_scale", 0.1},
              {"alpha", 1.0},
              {"reward_scale", 1e-3},
              {"demand",
               {{"t_count", 96},
                {"mean_level", 500.0},
                {"amplitude", 300.0},
                {"phase", -1.5707963267948966},
                {"noise_std", 25.0},
                {"clip_lo", 0.0},
                {"clip_hi", 1000.0}}}};
}

json axis_defaults(bool axis_a) {
  json d{{"experiment", axis_a ? "axis-a" : "axis-b"},
         {"output_dir", axis_a ? "axis-a" : "axis-b"},
         {"seeds", {1, 8, 12}},
         {"episodes", 1000},
         {"surface_t", 47},
         {"write_trace", true},
         {"env", single_env_defaults()},
         {"train",
          {{"ppo", pg_train_defaults(3e-4)},
           {"a2c", pg_train_defaults(1e-3)},
           {"ddpg", ddpg_train_defaults()}}}};
  if (axis_a) {
    d["modes"] = {"dpmp", "sort", "clip", "project"};
    d["algorithms"] = {"ppo"};
  } else {
    d["modes"] = {"dpmp"};
    d["algorithms"] = {"ppo", "a2c", "ddpg"};
  }
  return d;
}

json nc_defaults() {
  return json{{"experiment", "nc-check"},
              {"output_dir", "nc-check"},
              {"modes", {"dpmp", "sort", "clip", "project"}},
              {"segments", 10},
              {"samples", 1000000},
              {"seed", 1},
              {"map",
               {{"q_max", 1000.0},
                {"p_min", 0.0},
                {"p_max", 1000.0},
                {"k_scale", 1.0},
                {"alpha", 1.0}}}};
}

json oracle_defaults() {
  return json{{"experiment", "oracle-audit"},
              {"output_dir", "oracle-audit"},
              {"demand_lo", 0.0},
              {"demand_hi", 1000.0},
              {"demand_step", 5.0},
              {"gammas", {1.0, 1.5, 2.0}},
              {"price_step", 0.25},
              {"q_step", 2.5},
              {"worked_example", true},
              {"env",
               {{"q_max", 1000.0},
                {"price_cap", 1000.0},
                {"cost_a", 20.0},
                {"cost_b", 300.0},
                {"cost_grid_points", 101}}}};
}

json network_defaults() {
  return json{{"t_count", 24},       {"peak_fraction", 0.8},
              {"shape_amplitude", 0.3}, {"phase", -1.5707963267948966},
              {"load_noise_frac", 0.01}, {"price_cap", 150.0},
              {"commit_margin", 1.1},   {"gamma_lo", 1.0},
              {"gamma_hi", 2.0},        {"k_scale", 0.3},
              {"alpha", 1.0},           {"reward_scale", 1e-4}};
}

json multi_agent_defaults() {
  return json{{"experiment", "multi-agent"},
              {"output_dir", "multi-agent"},
              {"case_file", "data/ieee39.json"},
              {"seed", 1},
              {"episodes", 300},
              {"algorithm", "ppo"},
              {"eval_seed", 9001},
              {"network", network_defaults()},
              {"train", {{"ppo", pg_train_defaults(3e-4)}, {"a2c", pg_train_defaults(1e-3)}}}};
}

json exploitability_defaults() {
  return json{{"experiment", "exploitability"},
              {"output_dir", "exploitability"},
              {"baseline_dir", "multi-agent"},
              {"seed", 1},
              {"episodes", 300},
              {"algorithm", "ppo"},
              {"agents", json::array()},
              {"n_restarts", 3},
              {"demand_seeds", {9001, 9002, 9003, 9004, 9005}},
              {"threshold_pct", 2.0},
              {"train", {{"ppo", pg_train_defaults(3e-4)}, {"a2c", pg_train_defaults(1e-3)}}}};
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  // The log-std anneal target defaults to null (disabled) and accepts a number.
  if (a.is_null() && (b.is_null() || b.is_number())) return true;
  return a.type() == b.type();
}

// Replaces defaults with user values key by key; unknown keys and kind
// mismatches are hard errors so typos cannot silently fall back to defaults.
void merge_into(json& dst, const json& src, const std::string& path) {
  for (const auto& [key, value] : src.items()) {
    const std::string at = path + "/" + key;
    if (!dst.contains(key)) throw ConfigError("unknown config key " + at);
    json& slot = dst[key];
    if (slot.is_object() && value.is_object()) {
      merge_into(slot, value, at);
      continue;
    }
    if (!same_kind(slot, value))
      throw ConfigError("wrong value type at " + at + " (expected " +
                        std::string(slot.type_name()) + ", got " +
                        std::string(value.type_name()) + ")");
    if (slot.is_array() && !slot.empty()) {
      for (const auto& el : value)
        if (!same_kind(slot.front(), el))
          throw ConfigError("wrong element type in array at " + at);
    }
    slot = value;
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void check_name_list(const json& list, const std::set<std::string>& allowed,
                     const std::string& what) {
  require(list.is_array() && !list.empty(), "config: " + what + " must be a non-empty array");
  std::set<std::string> seen;
  for (const auto& el : list) {
    require(el.is_string(), "config: " + what + " entries must be strings");
    const std::string s = el.get<std::string>();
    require(allowed.count(s) == 1, "config: unknown entry '" + s + "' in " + what);
    require(seen.insert(s).second, "config: duplicate entry '" + s + "' in " + what);
  }
}

void check_seed_list(const json& list, const std::string& what) {
  require(list.is_array() && !list.empty(), "config: " + what + " must be a non-empty array");
  std::set<std::int64_t> seen;
  for (const auto& el : list) {
    require(el.is_number_integer() && el.get<std::int64_t>() >= 0,
            "config: " + what + " entries must be non-negative integers");
    require(seen.insert(el.get<std::int64_t>()).second,
            "config: duplicate entry in " + what);
  }
}

void validate_resolved(const json& cfg) {
  const std::string exp = cfg.at("experiment").get<std::string>();
  require(!cfg.at("output_dir").get<std::string>().empty(), "config: output_dir must be non-empty");
  if (exp == "axis-a" || exp == "axis-b") {
    check_name_list(cfg.at("modes"), kModes, "modes");
    check_name_list(cfg.at("algorithms"), kAlgos, "algorithms");
    check_seed_list(cfg.at("seeds"), "seeds");
    require(cfg.at("episodes").get<int>() >= 1, "config: episodes must be >= 1");
    require(cfg.at("surface_t").get<int>() >= 0, "config: surface_t must be >= 0");
    const json& env = cfg.at("env");
    require(env.at("segments").get<int>() >= 2, "config: env/segments must be >= 2");
    require(env.at("q_max").get<double>() > 0, "config: env/q_max must be positive");
    require(env.at("price_cap").get<double>() > 0, "config: env/price_cap must be positive");
    require(env.at("gamma_lo").get<double>() >= 1.0 &&
                env.at("gamma_hi").get<double>() >= env.at("gamma_lo").get<double>(),
            "config: env gamma range needs 1 <= gamma_lo <= gamma_hi");
    require(env.at("demand").at("t_count").get<int>() >= 1,
            "config: env/demand/t_count must be >= 1");
  } else if (exp == "nc-check") {
    check_name_list(cfg.at("modes"), kModes, "modes");
    require(cfg.at("segments").get<int>() >= 2, "config: segments must be >= 2");
    require(cfg.at("samples").get<std::int64_t>() >= 100, "config: samples must be >= 100");
    require(cfg.at("seed").get<std::int64_t>() >= 0, "config: seed must be >= 0");
  } else if (exp == "oracle-audit") {
    require(cfg.at("demand_step").get<double>() > 0, "config: demand_step must be positive");
    require(cfg.at("demand_hi").get<double>() >= cfg.at("demand_lo").get<double>(),
            "config: demand_hi must be >= demand_lo");
    require(cfg.at("price_step").get<double>() > 0 && cfg.at("q_step").get<double>() > 0,
            "config: grid steps must be positive");
    const json& gs = cfg.at("gammas");
    require(gs.is_array() && !gs.empty(), "config: gammas must be a non-empty array");
    for (const auto& g : gs)
      require(g.is_number() && g.get<double>() >= 1.0, "config: gammas entries must be >= 1");
  } else if (exp == "multi-agent") {
    require(cfg.at("seed").get<std::int64_t>() >= 0, "config: seed must be >= 0");
    require(cfg.at("episodes").get<int>() >= 1, "config: episodes must be >= 1");
    const std::string algo = cfg.at("algorithm").get<std::string>();
    require(algo == "ppo" || algo == "a2c",
            "config: multi-agent algorithm must be ppo or a2c");
    require(cfg.at("network").at("t_count").get<int>() >= 1,
            "config: network/t_count must be >= 1");
    const std::string case_file = cfg.at("case_file").get<std::string>();
    require(fs::exists(case_file), "config: case_file does not exist: " + case_file);
  } else if (exp == "exploitability") {
    require(cfg.at("seed").get<std::int64_t>() >= 0, "config: seed must be >= 0");
    require(cfg.at("episodes").get<int>() >= 1, "config: episodes must be >= 1");
    require(!cfg.at("baseline_dir").get<std::string>().empty(),
            "config: baseline_dir must be non-empty");
    require(cfg.at("n_restarts").get<int>() >= 1, "config: n_restarts must be >= 1");
    require(cfg.at("threshold_pct").get<double>() > 0, "config: threshold_pct must be positive");
    check_seed_list(cfg.at("demand_seeds"), "demand_seeds");
    const json& agents = cfg.at("agents");
    require(agents.is_array(), "config: agents must be an array");
    for (const auto& a : agents)
      require(a.is_number_integer() && a.get<int>() >= 1,
              "config: agents entries must be 1-based seat numbers");
    const std::string algo = cfg.at("algorithm").get<std::string>();
    require(algo == "ppo" || algo == "a2c",
            "config: exploitability algorithm must be ppo or a2c");
  }
}

learn::TrainConfig train_config_from(const json& t, const std::string& algo, int episodes) {
  learn::TrainConfig c;
  c.algo = algo;
  c.episodes = episodes;
  c.hidden = t.at("hidden").get<std::vector<int>>();
  c.gamma = t.at("gamma").get<double>();
  c.lr_actor = t.at("lr_actor").get<double>();
  c.lr_critic = t.at("lr_critic").get<double>();
  c.max_grad_norm = t.at("max_grad_norm").get<double>();
  c.init_log_std = t.at("init_log_std").get<double>();
  if (algo == "ddpg") {
    c.replay_capacity = t.at("replay_capacity").get<int>();
    c.batch_size = t.at("batch_size").get<int>();
    c.tau = t.at("tau").get<double>();
    c.noise_std_init = t.at("noise_std_init").get<double>();
    c.noise_std_final = t.at("noise_std_final").get<double>();
    c.warmup_steps = t.at("warmup_steps").get<int>();
    c.update_every = t.at("update_every").get<int>();
  } else {
    c.lr_final_frac = t.at("lr_final_frac").get<double>();
    c.entropy_final_frac = t.at("entropy_final_frac").get<double>();
    c.log_std_anneal_to = t.at("log_std_anneal_to").is_null()
                              ? std::numeric_limits<double>::quiet_NaN()
                              : t.at("log_std_anneal_to").get<double>();
    c.rollout_episodes = t.at("rollout_episodes").get<int>();
    c.epochs = t.at("epochs").get<int>();
    c.minibatch = t.at("minibatch").get<int>();
    c.gae_lambda = t.at("gae_lambda").get<double>();
    c.clip_ratio = t.at("clip_ratio").get<double>();
    c.entropy_coef = t.at("entropy_coef").get<double>();
    c.value_coef = t.at("value_coef").get<double>();
  }
  return c;
}

market::SingleMarketConfig market_config_from(const json& env, const std::string& mode) {
  market::SingleMarketConfig mc;
  const json& d = env.at("demand");
  mc.demand.t_count = d.at("t_count").get<int>();
  mc.demand.mean_level = d.at("mean_level").get<double>();
  mc.demand.amplitude = d.at("amplitude").get<double>();
  mc.demand.phase = d.at("phase").get<double>();
  mc.demand.noise_std = d.at("noise_std").get<double>();
  mc.demand.clip_lo = d.at("clip_lo").get<double>();
  mc.demand.clip_hi = d.at("clip_hi").get<double>();
  mc.segments = env.at("segments").get<int>();
  mc.q_max = env.at("q_max").get<double>();
  mc.price_cap = env.at("price_cap").get<double>();
  mc.cost_a = env.at("cost_a").get<double>();
  mc.cost_b = env.at("cost_b").get<double>();
  mc.cost_grid_points = env.at("cost_grid_points").get<int>();
  mc.gamma_lo = env.at("gamma_lo").get<double>();
  mc.gamma_hi = env.at("gamma_hi").get<double>();
  mc.mode = maps::hmode_from_string(mode);
  mc.map_cfg.q_max = mc.q_max;
  mc.map_cfg.p_min = 0.0;
  mc.map_cfg.p_max = mc.price_cap;
  mc.map_cfg.k_scale = env.at("k_scale").get<double>();
  mc.map_cfg.alpha = env.at("alpha").get<double>();
  return mc;
}

net::NetworkEnvConfig network_config_from(const json& n) {
  net::NetworkEnvConfig c;
  c.t_count = n.at("t_count").get<int>();
  c.peak_fraction = n.at("peak_fraction").get<double>();
  c.shape_amplitude = n.at("shape_amplitude").get<double>();
  c.phase = n.at("phase").get<double>();
  c.load_noise_frac = n.at("load_noise_frac").get<double>();
  c.price_cap = n.at("price_cap").get<double>();
  c.commit_margin = n.at("commit_margin").get<double>();
  c.gamma_lo = n.at("gamma_lo").get<double>();
  c.gamma_hi = n.at("gamma_hi").get<double>();
  c.map_cfg.k_scale = n.at("k_scale").get<double>();
  c.map_cfg.alpha = n.at("alpha").get<double>();
  c.reward_scale = n.at("reward_scale").get<double>();
  return c;
}

// Exposes the market env as a learner rollout while accumulating per-episode
// profit, oracle optimum, per-step trace rows, and the submitted curve at the
// fixed trace period.
class TracingEnv final : public learn::RolloutEnv {
 public:
  TracingEnv(market::SingleAgentMarketEnv& env, int surface_t, bool keep_trace)
      : env_(env),
        surface_t_(std::min(surface_t, env.horizon() - 1)),
        keep_trace_(keep_trace) {}

  int obs_dim() const override { return env_.obs_dim(); }
  int act_dim() const override { return env_.act_dim(); }

  std::vector<double> reset() override {
    ++episode_;
    profit_sum_ = 0.0;
    oracle_sum_ = 0.0;
    return env_.reset();
  }

  learn::StepOut step(const std::vector<double>& action) override {
    market::EnvStep s = env_.step(action);
    const oracle::OracleResult r = oracle::optimal_profit(
        s.demand, env_.config().ladder, env_.cost(), env_.config().q_max);
    profit_sum_ += s.outcome.profit;
    if (r.feasible) oracle_sum_ += r.pi_star;
    if (keep_trace_)
      trace_.push_back({episode_, s.t, s.demand, s.outcome.price, s.outcome.agent_q,
                        s.outcome.profit, r.pi_star, r.p_star, r.q_star});
    if (s.t == surface_t_)
      for (int k = 0; k < s.curve.segments(); ++k)
        surface_.push_back({episode_, k + 1, s.curve.breakpoints[k + 1], s.curve.prices[k]});
    if (s.done) {
      const double gap = oracle_sum_ != 0.0
                             ? oracle::optimality_gap(profit_sum_, oracle_sum_)
                             : std::numeric_limits<double>::quiet_NaN();
      episodes_.push_back({episode_, profit_sum_, oracle_sum_, gap, 0.0});
    }
    return {std::move(s.obs), s.reward, s.done};
  }

  // Trailing mean over the last up-to-10 gaps; partial windows at the start.
  void finalize() {
    double window = 0.0;
    for (std::size_t i = 0; i < episodes_.size(); ++i) {
      window += episodes_[i].gap;
      if (i >= 10) window -= episodes_[i - 10].gap;
      episodes_[i].ma10 = window / static_cast<double>(std::min<std::size_t>(i + 1, 10));
    }
  }

  std::vector<EpisodeRow> take_episodes() { return std::move(episodes_); }
  std::vector<StepRow> take_trace() { return std::move(trace_); }
  std::vector<SurfaceRow> take_surface() { return std::move(surface_); }

 private:
  market::SingleAgentMarketEnv& env_;
  int surface_t_;
  bool keep_trace_;
  int episode_ = 0;
  double profit_sum_ = 0.0;
  double oracle_sum_ = 0.0;
  std::vector<EpisodeRow> episodes_;
  std::vector<StepRow> trace_;
  std::vector<SurfaceRow> surface_;
};

// Runs tasks on up to `jobs` worker threads; each task owns its outputs, so
// the only shared state is the next-task counter.
void run_parallel(const std::vector<std::function<void()>>& tasks, int jobs) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (const auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        tasks[i]();
      }
    });
  for (auto& th : pool) th.join();
}

std::string seed_label(std::uint64_t seed) { return "seed" + std::to_string(seed); }

std::string metrics_csv(const std::vector<EpisodeRow>& rows) {
  std::string out = "episode,profit,gap,ma10\n";
  for (const auto& r : rows) {
    out += std::to_string(r.episode);
    out += ',';
    out += fmt_g(r.profit);
    out += ',';
    out += fmt_g(r.gap);
    out += ',';
    out += fmt_g(r.ma10);
    out += '\n';
  }
  return out;
}

std::string trace_csv(const std::vector<StepRow>& rows) {
  std::string out = "episode,t,demand,price,q_agent,profit,pi_star,p_star,q_star\n";
  for (const auto& r : rows) {
    out += std::to_string(r.episode);
    out += ',';
    out += std::to_string(r.t);
    for (double v : {r.demand, r.price, r.q_agent, r.profit, r.pi_star, r.p_star, r.q_star}) {
      out += ',';
      out += fmt_g(v);
    }
    out += '\n';
  }
  return out;
}

std::string surface_csv(const std::vector<SurfaceRow>& rows) {
  std::string out = "episode,segment,q_hi,price\n";
  for (const auto& r : rows) {
    out += std::to_string(r.episode);
    out += ',';
    out += std::to_string(r.segment);
    out += ',';
    out += fmt_g(r.q_hi);
    out += ',';
    out += fmt_g(r.price);
    out += '\n';
  }
  return out;
}

json base_metadata(const json& cfg) {
  return json{{"format_version", kFormatVersion},
              {"tool", "bidlab"},
              {"tool_version", kToolVersion},
              {"experiment", cfg.at("experiment")},
              {"config", cfg}};
}

void finish_run(const json& cfg, const fs::path& dir, json metadata, RunOutcome& out) {
  metadata["failures"] = out.failures;
  const fs::path meta = dir / "run_metadata.json";
  write_json_file(meta.string(), metadata);
  out.artifacts.push_back(meta.string());
  if (!out.failures.empty()) {
    json fr{{"experiment", cfg.at("experiment")}, {"failures", out.failures}};
    const fs::path frp = dir / "failure_report.json";
    write_json_file(frp.string(), fr);
    out.artifacts.push_back(frp.string());
  }
  report_directory(dir.string());
}

RunOutcome run_axis(const json& cfg, const fs::path& dir, int jobs) {
  struct Job {
    std::string mode, algo;
    std::uint64_t seed = 0;
    GapRunResult result;
    std::string label;
  };
  std::vector<Job> spec;
  for (const auto& m : cfg.at("modes"))
    for (const auto& a : cfg.at("algorithms"))
      for (const auto& s : cfg.at("seeds")) {
        Job j;
        j.mode = m.get<std::string>();
        j.algo = a.get<std::string>();
        j.seed = s.get<std::uint64_t>();
        j.label = j.mode + "_" + j.algo + "_" + seed_label(j.seed);
        spec.push_back(std::move(j));
      }

  const bool keep_trace = cfg.at("write_trace").get<bool>();
  std::vector<std::function<void()>> tasks;
  tasks.reserve(spec.size());
  for (Job& j : spec)
    tasks.push_back([&cfg, &j, keep_trace] {
      try {
        j.result = run_gap_training(cfg, j.mode, j.algo, j.seed, keep_trace);
      } catch (const std::exception& e) {
        j.result.diverged = true;
        j.result.error = e.what();
      }
    });
  run_parallel(tasks, jobs);

  RunOutcome out;
  json runs = json::array();
  for (Job& j : spec) {
    json files;
    auto emit = [&](const std::string& stem, const std::string& body) {
      const fs::path p = dir / (stem + "_" + j.label + ".csv");
      write_text_file(p.string(), body);
      out.artifacts.push_back(p.string());
      files[stem] = p.filename().string();
    };
    emit("metrics", metrics_csv(j.result.episodes));
    if (keep_trace) emit("trace", trace_csv(j.result.trace));
    emit("surface", surface_csv(j.result.surface));
    if (!j.result.checkpoint.is_null()) {
      const fs::path p = dir / ("policy_" + j.label + ".json");
      write_json_file(p.string(), j.result.checkpoint);
      out.artifacts.push_back(p.string());
      files["policy"] = p.filename().string();
    }
    json run{{"mode", j.mode},
             {"algorithm", j.algo},
             {"seed", j.seed},
             {"env_gamma", j.result.env_gamma},
             {"episodes_completed", j.result.episodes.size()},
             {"status", j.result.diverged ? "diverged" : "ok"},
             {"files", files}};
    if (j.result.diverged) {
      run["error"] = j.result.error;
      out.failures.push_back(j.label + ": " + j.result.error);
    }
    runs.push_back(std::move(run));
  }
  json metadata = base_metadata(cfg);
  metadata["runs"] = runs;
  finish_run(cfg, dir, std::move(metadata), out);
  return out;
}

RunOutcome run_nc(const json& cfg, const fs::path& dir, int jobs) {
  maps::DpmpConfig map;
  const json& m = cfg.at("map");
  map.q_max = m.at("q_max").get<double>();
  map.p_min = m.at("p_min").get<double>();
  map.p_max = m.at("p_max").get<double>();
  map.k_scale = m.at("k_scale").get<double>();
  map.alpha = m.at("alpha").get<double>();
  const int segments = cfg.at("segments").get<int>();
  const long long samples = cfg.at("samples").get<long long>();
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();

  struct Job {
    std::string mode;
    nc::NcReport report;
    std::string error;
  };
  std::vector<Job> spec;
  for (const auto& mode : cfg.at("modes")) spec.push_back({mode.get<std::string>(), {}, {}});

  std::vector<std::function<void()>> tasks;
  for (Job& j : spec)
    tasks.push_back([&, map, segments, samples, seed] {
      try {
        j.report = nc::run_nc_checks(maps::hmode_from_string(j.mode), map, segments,
                                     samples, seed);
      } catch (const std::exception& e) {
        j.error = e.what();
      }
    });
  run_parallel(tasks, jobs);

  RunOutcome out;
  json runs = json::array();
  auto verdict = [](nc::Verdict v) { return v == nc::Verdict::pass ? "pass" : "fail"; };
  for (Job& j : spec) {
    if (!j.error.empty()) {
      out.failures.push_back(j.mode + ": " + j.error);
      runs.push_back(json{{"mode", j.mode}, {"status", "error"}, {"error", j.error}});
      continue;
    }
    const fs::path p = dir / ("nc_" + j.mode + ".json");
    write_json_file(p.string(), nc::to_json(j.report));
    out.artifacts.push_back(p.string());
    runs.push_back(json{{"mode", j.mode},
                        {"status", "ok"},
                        {"nc1", verdict(j.report.nc1)},
                        {"nc2", verdict(j.report.nc2)},
                        {"nc3", verdict(j.report.nc3)},
                        {"files", {{"report", p.filename().string()}}}});
  }
  json metadata = base_metadata(cfg);
  metadata["runs"] = runs;
  finish_run(cfg, dir, std::move(metadata), out);
  return out;
}

RunOutcome run_oracle_audit(const json& cfg, const fs::path& dir, int /*jobs*/) {
  const json& env = cfg.at("env");
  const double q_max = env.at("q_max").get<double>();
  const double price_cap = env.at("price_cap").get<double>();
  const double cost_a = env.at("cost_a").get<double>();
  const double cost_b = env.at("cost_b").get<double>();
  const int grid_points = env.at("cost_grid_points").get<int>();
  const double lo = cfg.at("demand_lo").get<double>();
  const double hi = cfg.at("demand_hi").get<double>();
  const double step = cfg.at("demand_step").get<double>();
  const double price_step = cfg.at("price_step").get<double>();
  const double q_step = cfg.at("q_step").get<double>();
  const auto ladder = market::OpponentLadder::standard();

  std::string rows =
      "gamma,demand,feasible,pi_star,p_star,q_star,level,brute_profit,brute_price,"
      "brute_q,excess\n";
  long long instances = 0, feasible = 0, violations = 0;
  double max_excess = -std::numeric_limits<double>::infinity();
  double min_excess = std::numeric_limits<double>::infinity();
  const int n_demand = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (const auto& gj : cfg.at("gammas")) {
    const double gamma = gj.get<double>();
    market::CostModel cost(cost_a, cost_b, gamma, q_max, grid_points);
    for (int i = 0; i < n_demand; ++i) {
      const double d = lo + i * step;
      const auto alg = oracle::optimal_profit(d, ladder, cost, q_max);
      const auto bf =
          oracle::brute_force_best_response(d, ladder, cost, q_max, price_cap, price_step, q_step);
      ++instances;
      const double excess = bf.profit - alg.pi_star;
      if (alg.feasible) {
        ++feasible;
        if (excess < -1e-9) ++violations;
        max_excess = std::max(max_excess, excess);
        min_excess = std::min(min_excess, excess);
      }
      rows += fmt_g(gamma);
      rows += ',';
      rows += fmt_g(d);
      rows += ',';
      rows += alg.feasible ? '1' : '0';
      for (double v : {alg.pi_star, alg.p_star, alg.q_star}) {
        rows += ',';
        rows += fmt_g(v);
      }
      rows += ',';
      rows += std::to_string(alg.level);
      for (double v : {bf.profit, bf.price, bf.quantity, excess}) {
        rows += ',';
        rows += fmt_g(v);
      }
      rows += '\n';
    }
  }

  RunOutcome out;
  const fs::path csv = dir / "audit.csv";
  write_text_file(csv.string(), rows);
  out.artifacts.push_back(csv.string());

  json summary{{"instances", instances},
               {"feasible", feasible},
               {"violations", violations},
               {"max_excess", max_excess},
               {"min_excess", min_excess}};
  if (cfg.at("worked_example").get<bool>()) {
    market::CostModel cost(cost_a, cost_b, 1.0, q_max, grid_points);
    const auto alg = oracle::optimal_profit(530.0, ladder, cost, q_max);
    const auto bf =
        oracle::brute_force_best_response(530.0, ladder, cost, q_max, price_cap, 0.01, 0.1);
    summary["worked_example"] = json{{"demand", 530.0},       {"gamma", 1.0},
                                     {"pi_star", alg.pi_star}, {"p_star", alg.p_star},
                                     {"q_star", alg.q_star},   {"brute_profit", bf.profit},
                                     {"brute_price", bf.price}, {"brute_q", bf.quantity},
                                     {"price_step", 0.01},     {"q_step", 0.1}};
  }
  const fs::path sj = dir / "audit_summary.json";
  write_json_file(sj.string(), summary);
  out.artifacts.push_back(sj.string());

  json metadata = base_metadata(cfg);
  metadata["runs"] = json::array(
      {json{{"status", "ok"}, {"files", {{"audit", "audit.csv"}, {"summary", "audit_summary.json"}}}}});
  finish_run(cfg, dir, std::move(metadata), out);
  return out;
}

std::string agent_policy_name(int agent_1based) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "policy_agent%02d.json", agent_1based);
  return buf;
}

RunOutcome run_multi_agent(const json& cfg, const fs::path& dir, int /*jobs*/) {
  const std::string case_file = cfg.at("case_file").get<std::string>();
  auto cs = net::NetworkCase::load_file(case_file);
  const net::NetworkEnvConfig ncfg = network_config_from(cfg.at("network"));
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const int episodes = cfg.at("episodes").get<int>();
  const std::string algo = cfg.at("algorithm").get<std::string>();
  net::MultiAgentNetworkEnv env(cs, ncfg, seed);
  const int n = env.agents();

  RunOutcome out;
  std::vector<std::vector<double>> profits;  // episode x agent, currency
  profits.reserve(episodes);
  const double scale = ncfg.reward_scale;
  std::string error;
  validity::JointTrainResult jr;
  try {
    jr = validity::train_joint(
        env, train_config_from(cfg.at("train").at(algo), algo, episodes), seed,
        [&](int, const std::vector<double>& reward_sums) {
          std::vector<double> p(reward_sums.size());
          for (std::size_t i = 0; i < p.size(); ++i) p[i] = reward_sums[i] / scale;
          profits.push_back(std::move(p));
        });
  } catch (const std::exception& e) {
    error = e.what();
  }

  std::string metrics = "episode";
  for (int i = 0; i < n; ++i) metrics += ",profit_" + cs.generators[i].id;
  metrics += '\n';
  json ep_summary = json::array();
  for (std::size_t e = 0; e < profits.size(); ++e) {
    metrics += std::to_string(e + 1);
    double total = 0.0;
    for (double p : profits[e]) {
      metrics += ',';
      metrics += fmt_g(p);
      total += p;
    }
    metrics += '\n';
    ep_summary.push_back(
        json{{"episode", e + 1}, {"profit", profits[e]}, {"total", total}});
  }
  const fs::path mp = dir / "metrics.csv";
  write_text_file(mp.string(), metrics);
  out.artifacts.push_back(mp.string());
  const fs::path esp = dir / "episode_summary.json";
  write_json_file(esp.string(), ep_summary);
  out.artifacts.push_back(esp.string());

  json gammas = json::array();
  for (int i = 0; i < n; ++i) gammas.push_back(env.cost_gamma(i));

  json files{{"metrics", "metrics.csv"}, {"episode_summary", "episode_summary.json"}};
  if (error.empty()) {
    for (int i = 0; i < n; ++i) {
      json pj{{"format_version", kFormatVersion},
              {"agent", i + 1},
              {"generator", cs.generators[i].id},
              {"algorithm", algo},
              {"seed", seed},
              {"policy", jr.policies[i].to_json(jr.actor_params[i])}};
      const fs::path pp = dir / agent_policy_name(i + 1);
      write_json_file(pp.string(), pj);
      out.artifacts.push_back(pp.string());
    }
    files["policies"] = "policy_agent01.json .. " + agent_policy_name(n);

    // Deterministic evaluation rollout for the dispatch trace.
    const std::uint64_t eval_seed = cfg.at("eval_seed").get<std::uint64_t>();
    std::string trace = "t";
    for (int b = 1; b <= cs.buses; ++b) trace += ",lmp_" + std::to_string(b);
    for (int i = 0; i < n; ++i) trace += ",g_" + cs.generators[i].id;
    for (std::size_t l = 1; l <= cs.branches.size(); ++l) trace += ",splus_" + std::to_string(l);
    for (std::size_t l = 1; l <= cs.branches.size(); ++l) trace += ",sminus_" + std::to_string(l);
    trace += ",shortfall\n";
    auto obs = env.reset_with_seed(eval_seed);
    for (int t = 0; t < env.horizon(); ++t) {
      std::vector<std::vector<double>> actions(n);
      for (int i = 0; i < n; ++i)
        actions[i] = jr.policies[i].act_deterministic(jr.actor_params[i], obs[i]);
      auto st = env.step(actions);
      trace += std::to_string(st.t);
      for (double v : st.dispatch.lmp) { trace += ','; trace += fmt_g(v); }
      for (double v : st.dispatch.g) { trace += ','; trace += fmt_g(v); }
      for (double v : st.dispatch.s_plus) { trace += ','; trace += fmt_g(v); }
      for (double v : st.dispatch.s_minus) { trace += ','; trace += fmt_g(v); }
      trace += ',';
      trace += fmt_g(st.dispatch.shortfall);
      trace += '\n';
      obs = st.obs;
    }
    const fs::path tp = dir / "dispatch_trace.csv";
    write_text_file(tp.string(), trace);
    out.artifacts.push_back(tp.string());
    files["dispatch_trace"] = "dispatch_trace.csv";
  } else {
    out.failures.push_back("train_joint: " + error);
  }

  json metadata = base_metadata(cfg);
  metadata["seed"] = seed;
  metadata["gammas"] = gammas;
  metadata["case_name"] = cs.name;
  metadata["runs"] = json::array({json{{"seed", seed},
                                       {"status", error.empty() ? "ok" : "diverged"},
                                       {"episodes_completed", profits.size()},
                                       {"files", files}}});
  finish_run(cfg, dir, std::move(metadata), out);
  return out;
}

RunOutcome run_exploitability(const json& cfg, const fs::path& dir, int /*jobs*/) {
  const fs::path base_dir = cfg.at("baseline_dir").get<std::string>();
  const fs::path base_meta_path = base_dir / "run_metadata.json";
  if (!fs::exists(base_meta_path))
    throw ConfigError("config: baseline_dir has no run_metadata.json: " + base_dir.string());
  const json bm = read_json_file(base_meta_path.string());
  if (bm.at("experiment").get<std::string>() != "multi-agent")
    throw ConfigError("config: baseline_dir does not hold a multi-agent run");

  const std::string case_file = bm.at("config").at("case_file").get<std::string>();
  if (!fs::exists(case_file))
    throw ConfigError("config: baseline case_file does not exist: " + case_file);
  auto cs = net::NetworkCase::load_file(case_file);
  const net::NetworkEnvConfig ncfg = network_config_from(bm.at("config").at("network"));
  const std::uint64_t base_seed = bm.at("seed").get<std::uint64_t>();
  net::MultiAgentNetworkEnv env(cs, ncfg, base_seed);
  const int n = env.agents();

  // The gamma draws pin the cost curvature; a mismatch means the baseline
  // artifacts were produced by a different environment build.
  const auto gammas = bm.at("gammas").get<std::vector<double>>();
  for (int i = 0; i < n; ++i)
    if (gammas.at(i) != env.cost_gamma(i))
      throw std::runtime_error("baseline gamma draws do not match the rebuilt environment");

  std::vector<learn::GaussianPolicy> policies;
  std::vector<std::vector<double>> params;
  for (int i = 0; i < n; ++i) {
    const fs::path pp = base_dir / agent_policy_name(i + 1);
    if (!fs::exists(pp))
      throw ConfigError("config: baseline policy missing: " + pp.string());
    const json pj = read_json_file(pp.string());
    std::vector<double> p;
    policies.push_back(learn::GaussianPolicy::from_json(pj.at("policy"), p));
    params.push_back(std::move(p));
  }

  const std::string algo = cfg.at("algorithm").get<std::string>();
  validity::ExploitabilityConfig ec;
  ec.learner = train_config_from(cfg.at("train").at(algo), algo, cfg.at("episodes").get<int>());
  ec.n_restarts = cfg.at("n_restarts").get<int>();
  ec.demand_seeds = cfg.at("demand_seeds").get<std::vector<std::uint64_t>>();
  ec.agents = cfg.at("agents").get<std::vector<int>>();
  ec.threshold_pct = cfg.at("threshold_pct").get<double>();
  const auto report =
      validity::exploitability_assess(env, policies, params, ec, cfg.at("seed").get<std::uint64_t>());

  RunOutcome out;
  const fs::path rj = dir / "exploitability.json";
  write_json_file(rj.string(), validity::to_json(report));
  out.artifacts.push_back(rj.string());

  std::string rows =
      "agent,baseline_profit,br_profit,delta,rel,pct,br_profile_total,diverged\n";
  for (const auto& a : report.agents) {
    rows += std::to_string(a.agent);
    for (double v : {a.baseline_profit, a.br_profit, a.delta, a.rel, a.pct, a.br_profile_total}) {
      rows += ',';
      rows += fmt_g(v);
    }
    rows += ',';
    rows += a.diverged ? '1' : '0';
    rows += '\n';
  }
  const fs::path rc = dir / "exploitability_rows.csv";
  write_text_file(rc.string(), rows);
  out.artifacts.push_back(rc.string());

  json metadata = base_metadata(cfg);
  metadata["baseline_seed"] = base_seed;
  metadata["baseline_total_profit"] = report.baseline_total_profit;
  metadata["runs"] = json::array(
      {json{{"status", "ok"},
            {"files",
             {{"report", "exploitability.json"}, {"rows", "exploitability_rows.csv"}}}}});
  finish_run(cfg, dir, std::move(metadata), out);
  return out;
}

}  // namespace

json load_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; convert to 1-based line:column.
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                      e.what());
  }
}

json experiment_defaults(const std::string& experiment) {
  if (experiment == "axis-a") return axis_defaults(true);
  if (experiment == "axis-b") return axis_defaults(false);
  if (experiment == "nc-check") return nc_defaults();
  if (experiment == "oracle-audit") return oracle_defaults();
  if (experiment == "multi-agent") return multi_agent_defaults();
  if (experiment == "exploitability") return exploitability_defaults();
  throw ConfigError("unknown experiment '" + experiment + "'");
}

json resolve_config(const json& user) {
  if (!user.is_object()) throw ConfigError("config root must be a JSON object");
  if (!user.contains("experiment") || !user.at("experiment").is_string())
    throw ConfigError("config: missing string field 'experiment'");
  const std::string exp = user.at("experiment").get<std::string>();
  if (kExperiments.count(exp) == 0) throw ConfigError("config: unknown experiment '" + exp + "'");
  json resolved = experiment_defaults(exp);
  merge_into(resolved, user, "");
  validate_resolved(resolved);
  return resolved;
}

GapRunResult run_gap_training(const json& resolved, const std::string& mode,
                              const std::string& algo, std::uint64_t seed, bool keep_trace) {
  const market::SingleMarketConfig mc = market_config_from(resolved.at("env"), mode);
  market::SingleAgentMarketEnv env(mc, seed, resolved.at("env").at("reward_scale").get<double>());
  TracingEnv wrap(env, resolved.at("surface_t").get<int>(), keep_trace);
  const learn::TrainConfig tc =
      train_config_from(resolved.at("train").at(algo), algo, resolved.at("episodes").get<int>());

  GapRunResult out;
  out.env_gamma = env.gamma();
  try {
    const learn::TrainResult res = learn::train(wrap, tc, seed);
    out.checkpoint = json{{"format_version", kFormatVersion},
                          {"mode", mode},
                          {"algorithm", algo},
                          {"seed", seed},
                          {"env_gamma", env.gamma()},
                          {"policy", res.policy.to_json(res.actor_params)}};
  } catch (const learn::DivergenceError& e) {
    out.diverged = true;
    out.error = e.what();
  }
  wrap.finalize();
  out.episodes = wrap.take_episodes();
  out.trace = wrap.take_trace();
  out.surface = wrap.take_surface();
  return out;
}

RunOutcome run_experiment(const json& resolved, const std::string& out_dir, int jobs) {
  const std::string exp = resolved.at("experiment").get<std::string>();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  if (exp == "axis-a" || exp == "axis-b") return run_axis(resolved, dir, jobs);
  if (exp == "nc-check") return run_nc(resolved, dir, jobs);
  if (exp == "oracle-audit") return run_oracle_audit(resolved, dir, jobs);
  if (exp == "multi-agent") return run_multi_agent(resolved, dir, jobs);
  if (exp == "exploitability") return run_exploitability(resolved, dir, jobs);
  throw ConfigError("unknown experiment '" + exp + "'");
}

}  // namespace bidlab::cli
