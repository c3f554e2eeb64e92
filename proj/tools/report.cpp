#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "bidlab/validity.hpp"
#include "experiments.hpp"
#include "io_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bidlab::cli {

namespace {

struct Ctx {
  fs::path dir;
  fs::path report;
  std::vector<std::string> warnings;

  bool load_csv(const std::string& name, CsvTable& out) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) {
      warnings.push_back("missing artifact: " + name);
      return false;
    }
    try {
      out = parse_csv(read_text_file(p.string()), name);
      return true;
    } catch (const std::exception& e) {
      warnings.push_back(std::string("unreadable artifact: ") + e.what());
      return false;
    }
  }
};

void write_summary(Ctx& ctx, json summary) {
  summary["warnings"] = ctx.warnings;
  write_json_file((ctx.report / "summary.json").string(), summary);
  for (const auto& w : ctx.warnings) std::cerr << "warning: " << w << "\n";
}

json stats_row(const validity::GapStatistics& s) {
  return json{{"steady_state_mean", s.steady_state_mean},
              {"steady_state_std", s.steady_state_std},
              {"episode_to_10pct", s.episode_to_10pct},
              {"episode_to_5pct", s.episode_to_5pct},
              {"best_ma_gap", s.best_ma_gap},
              {"compliance_rate_last10", s.compliance_rate_last10}};
}

void summarize_axis(Ctx& ctx, const json& meta) {
  struct PerRun {
    std::string mode, algo;
    std::uint64_t seed = 0;
    std::vector<double> gaps;
    bool has_stats = false;
    validity::GapStatistics stats;
  };
  std::vector<PerRun> runs;
  std::string curves = "mode,algo,seed,episode,profit,gap,ma10\n";
  std::string surfaces = "mode,algo,seed,episode,segment,q_hi,price\n";

  for (const auto& run : meta.at("runs")) {
    PerRun pr;
    pr.mode = run.at("mode").get<std::string>();
    pr.algo = run.at("algorithm").get<std::string>();
    pr.seed = run.at("seed").get<std::uint64_t>();
    const std::string label = pr.mode + "," + pr.algo + "," + std::to_string(pr.seed);
    const json& files = run.at("files");

    CsvTable m;
    if (ctx.load_csv(files.at("metrics").get<std::string>(), m)) {
      const int ce = m.column("episode"), cp = m.column("profit");
      const int cg = m.column("gap"), cm = m.column("ma10");
      for (const auto& row : m.rows) {
        pr.gaps.push_back(row[cg]);
        curves += label + "," + fmt_g(row[ce]) + "," + fmt_g(row[cp]) + "," + fmt_g(row[cg]) +
                  "," + fmt_g(row[cm]) + "\n";
      }
      try {
        pr.stats = validity::gap_statistics(pr.gaps);
        pr.has_stats = true;
      } catch (const std::exception& e) {
        ctx.warnings.push_back("run " + label + ": gap statistics unavailable (" + e.what() +
                               ")");
      }
    }
    if (files.contains("surface")) {
      CsvTable s;
      if (ctx.load_csv(files.at("surface").get<std::string>(), s)) {
        for (const auto& row : s.rows) {
          surfaces += label;
          for (double v : row) {
            surfaces += ',';
            surfaces += fmt_g(v);
          }
          surfaces += '\n';
        }
      }
    }
    runs.push_back(std::move(pr));
  }

  json rows = json::array();
  std::string rows_csv =
      "mode,algo,seed,episodes,steady_state_mean,steady_state_std,episode_to_10pct,"
      "episode_to_5pct,best_ma_gap,compliance_rate_last10\n";
  for (const auto& pr : runs) {
    if (!pr.has_stats) continue;
    json r = stats_row(pr.stats);
    r["mode"] = pr.mode;
    r["algo"] = pr.algo;
    r["seed"] = pr.seed;
    r["episodes"] = pr.gaps.size();
    rows.push_back(r);
    rows_csv += pr.mode + "," + pr.algo + "," + std::to_string(pr.seed) + "," +
                std::to_string(pr.gaps.size()) + "," + fmt_g(pr.stats.steady_state_mean) + "," +
                fmt_g(pr.stats.steady_state_std) + "," +
                std::to_string(pr.stats.episode_to_10pct) + "," +
                std::to_string(pr.stats.episode_to_5pct) + "," + fmt_g(pr.stats.best_ma_gap) +
                "," + fmt_g(pr.stats.compliance_rate_last10) + "\n";
  }

  // One aggregate per (mode, algo): steady window gaps pooled across seeds,
  // episode counters averaged over the seeds that reached the threshold.
  json aggregates = json::array();
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& pr : runs) {
    const auto key = std::make_pair(pr.mode, pr.algo);
    if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
  }
  for (const auto& [mode, algo] : order) {
    std::vector<double> pooled;
    std::vector<std::uint64_t> seeds;
    int reached10 = 0, reached5 = 0;
    double sum10 = 0.0, sum5 = 0.0, best_ma = std::numeric_limits<double>::infinity();
    double compliance = 0.0;
    int contributing = 0;
    for (const auto& pr : runs) {
      if (pr.mode != mode || pr.algo != algo || !pr.has_stats) continue;
      ++contributing;
      seeds.push_back(pr.seed);
      const std::size_t tail = pr.gaps.size() / 10;
      pooled.insert(pooled.end(), pr.gaps.end() - tail, pr.gaps.end());
      if (pr.stats.episode_to_10pct >= 0) {
        ++reached10;
        sum10 += pr.stats.episode_to_10pct;
      }
      if (pr.stats.episode_to_5pct >= 0) {
        ++reached5;
        sum5 += pr.stats.episode_to_5pct;
      }
      best_ma = std::min(best_ma, pr.stats.best_ma_gap);
      compliance += pr.stats.compliance_rate_last10;
    }
    if (contributing == 0) continue;
    double mean = 0.0;
    for (double g : pooled) mean += g;
    mean /= static_cast<double>(pooled.size());
    double var = 0.0;
    for (double g : pooled) var += (g - mean) * (g - mean);
    var /= static_cast<double>(pooled.size());
    aggregates.push_back(json{
        {"mode", mode},
        {"algo", algo},
        {"seeds", seeds},
        {"steady_state_mean", mean},
        {"steady_state_std", std::sqrt(var)},
        {"seeds_reaching_10pct", reached10},
        {"episode_to_10pct_mean", reached10 ? json(sum10 / reached10) : json(nullptr)},
        {"seeds_reaching_5pct", reached5},
        {"episode_to_5pct_mean", reached5 ? json(sum5 / reached5) : json(nullptr)},
        {"best_ma_gap", best_ma},
        {"compliance_rate_last10", compliance / contributing}});
    std::cout << meta.at("experiment").get<std::string>() << " " << mode << "/" << algo
              << ": steady " << mean << " +- " << std::sqrt(var) << ", reached 10% on "
              << reached10 << "/" << contributing << " seeds, compliance "
              << compliance / contributing << "\n";
  }

  write_text_file((ctx.report / "summary.csv").string(), rows_csv);
  write_text_file((ctx.report / "gap_curves.csv").string(), curves);
  write_text_file((ctx.report / "bid_surfaces.csv").string(), surfaces);
  write_summary(ctx, json{{"experiment", meta.at("experiment")},
                          {"rows", rows},
                          {"aggregates", aggregates}});
}

void summarize_exploitability(Ctx& ctx, const json& meta) {
  CsvTable t;
  if (!ctx.load_csv("exploitability_rows.csv", t)) {
    write_summary(ctx, json{{"experiment", "exploitability"}});
    return;
  }
  const int cb = t.column("baseline_profit"), cbr = t.column("br_profit");
  const int ct = t.column("br_profile_total"), cd = t.column("diverged");
  std::vector<double> baseline, br, totals;
  std::vector<bool> diverged;
  for (const auto& row : t.rows) {
    baseline.push_back(row[cb]);
    br.push_back(row[cbr]);
    totals.push_back(row[ct]);
    diverged.push_back(row[cd] != 0.0);
  }
  auto rep = validity::assemble_exploitability(
      baseline, br, meta.at("baseline_total_profit").get<double>(), totals,
      meta.at("config").at("threshold_pct").get<double>());
  rep.epsilon_hat = 0.0;
  rep.epsilon_hat_pct = 0.0;
  for (std::size_t i = 0; i < rep.agents.size(); ++i) {
    rep.agents[i].diverged = diverged[i];
    if (diverged[i]) continue;
    rep.epsilon_hat = std::max(rep.epsilon_hat, rep.agents[i].delta);
    rep.epsilon_hat_pct = std::max(rep.epsilon_hat_pct, rep.agents[i].pct);
  }
  rep.pass = rep.epsilon_hat_pct <= rep.threshold_pct;

  std::string bars = "agent,delta,pct,diverged\n";
  for (const auto& a : rep.agents)
    bars += std::to_string(a.agent) + "," + fmt_g(a.delta) + "," + fmt_g(a.pct) + "," +
            (a.diverged ? "1" : "0") + "\n";
  write_text_file((ctx.report / "exploitability_bars.csv").string(), bars);

  std::cout << "exploitability: epsilon_hat " << rep.epsilon_hat << " (" << rep.epsilon_hat_pct
            << "% of baseline), " << (rep.pass ? "pass" : "fail") << " at threshold "
            << rep.threshold_pct << "%\n";
  json summary = validity::to_json(rep);
  summary["experiment"] = "exploitability";
  write_summary(ctx, std::move(summary));
}

void summarize_multi_agent(Ctx& ctx, const json& meta) {
  CsvTable t;
  if (!ctx.load_csv("metrics.csv", t)) {
    write_summary(ctx, json{{"experiment", "multi-agent"}});
    return;
  }
  const std::size_t n_ep = t.rows.size();
  const std::size_t tail = std::max<std::size_t>(1, n_ep / 10);
  json agents = json::array();
  double total_mean = 0.0, total_tail = 0.0;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (t.columns[c].rfind("profit_", 0) != 0) continue;
    double mean = 0.0, tail_mean = 0.0;
    for (std::size_t r = 0; r < n_ep; ++r) {
      mean += t.rows[r][c];
      if (r + tail >= n_ep) tail_mean += t.rows[r][c];
    }
    mean /= static_cast<double>(n_ep);
    tail_mean /= static_cast<double>(tail);
    total_mean += mean;
    total_tail += tail_mean;
    agents.push_back(json{{"column", t.columns[c]},
                          {"mean_profit", mean},
                          {"last_tenth_mean_profit", tail_mean}});
  }
  std::cout << "multi-agent: " << n_ep << " episodes, system mean profit " << total_mean
            << ", last tenth " << total_tail << "\n";
  write_summary(ctx, json{{"experiment", "multi-agent"},
                          {"episodes", n_ep},
                          {"agents", agents},
                          {"system",
                           {{"mean_total_profit", total_mean},
                            {"last_tenth_mean_total_profit", total_tail}}},
                          {"seed", meta.at("seed")}});
}

void summarize_nc(Ctx& ctx, const json& meta) {
  json modes;
  for (const auto& run : meta.at("runs")) {
    const std::string mode = run.at("mode").get<std::string>();
    if (run.at("status").get<std::string>() != "ok") {
      ctx.warnings.push_back("mode " + mode + " failed: " + run.value("error", ""));
      continue;
    }
    const fs::path p = ctx.dir / run.at("files").at("report").get<std::string>();
    if (!fs::exists(p)) {
      ctx.warnings.push_back("missing artifact: " + p.filename().string());
      continue;
    }
    const json r = read_json_file(p.string());
    modes[mode] = json{{"nc1", r.at("nc1").at("verdict")},
                       {"nc2", r.at("nc2").at("verdict")},
                       {"nc3", r.at("nc3").at("verdict")}};
    std::cout << "nc-check " << mode << ": nc1 " << modes[mode]["nc1"].get<std::string>()
              << ", nc2 " << modes[mode]["nc2"].get<std::string>() << ", nc3 "
              << modes[mode]["nc3"].get<std::string>() << "\n";
  }
  write_summary(ctx, json{{"experiment", "nc-check"}, {"modes", modes}});
}

void summarize_oracle(Ctx& ctx, const json&) {
  CsvTable t;
  if (!ctx.load_csv("audit.csv", t)) {
    write_summary(ctx, json{{"experiment", "oracle-audit"}});
    return;
  }
  const int cf = t.column("feasible"), cx = t.column("excess");
  long long feasible = 0, violations = 0;
  double max_excess = -std::numeric_limits<double>::infinity();
  double min_excess = std::numeric_limits<double>::infinity();
  for (const auto& row : t.rows) {
    if (row[cf] == 0.0) continue;
    ++feasible;
    if (row[cx] < -1e-9) ++violations;
    max_excess = std::max(max_excess, row[cx]);
    min_excess = std::min(min_excess, row[cx]);
  }
  std::cout << "oracle-audit: " << t.rows.size() << " instances, " << feasible << " feasible, "
            << violations << " violations, excess range [" << min_excess << ", " << max_excess
            << "]\n";
  write_summary(ctx, json{{"experiment", "oracle-audit"},
                          {"instances", t.rows.size()},
                          {"feasible", feasible},
                          {"violations", violations},
                          {"max_excess", max_excess},
                          {"min_excess", min_excess}});
}

}  // namespace

int report_directory(const std::string& results_dir) {
  Ctx ctx;
  ctx.dir = results_dir;
  if (!fs::exists(ctx.dir)) throw ConfigError("results directory does not exist: " + results_dir);
  ctx.report = ctx.dir / "report";
  fs::create_directories(ctx.report);

  const fs::path meta_path = ctx.dir / "run_metadata.json";
  if (!fs::exists(meta_path)) {
    ctx.warnings.push_back("no run_metadata.json found; nothing to report");
    write_summary(ctx, json{{"experiment", nullptr}});
    return 1;
  }
  const json meta = read_json_file(meta_path.string());
  const std::string exp = meta.at("experiment").get<std::string>();
  if (exp == "axis-a" || exp == "axis-b")
    summarize_axis(ctx, meta);
  else if (exp == "exploitability")
    summarize_exploitability(ctx, meta);
  else if (exp == "multi-agent")
    summarize_multi_agent(ctx, meta);
  else if (exp == "nc-check")
    summarize_nc(ctx, meta);
  else if (exp == "oracle-audit")
    summarize_oracle(ctx, meta);
  else
    throw ConfigError("run_metadata.json names an unknown experiment '" + exp + "'");
  return 0;
}

}  // namespace bidlab::cli
