#include "bidlab/network_market.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "bidlab/lp.hpp"

namespace bidlab::net {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;
// Load shedding is the last resort, priced above every line penalty so the
// LP always prefers relaxing a flow limit over leaving balance unmet.
constexpr double kShortfallPenalty = 1e4;

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end())
    throw std::invalid_argument(std::string("NetworkCase: missing field ") + name);
  return *it;
}

}  // namespace

double NetworkCase::total_capacity() const {
  double s = 0.0;
  for (const auto& g : generators) s += g.capacity;
  return s;
}

double NetworkCase::total_base_load() const {
  double s = 0.0;
  for (const auto& l : loads) s += l.base;
  return s;
}

void NetworkCase::validate() const {
  if (buses <= 0) throw std::invalid_argument("NetworkCase: no buses");
  if (slack_bus < 1 || slack_bus > buses)
    throw std::invalid_argument("NetworkCase: slack bus out of range");
  if (branches.empty()) throw std::invalid_argument("NetworkCase: no branches");
  auto check_bus = [&](int b, const char* what) {
    if (b < 1 || b > buses)
      throw std::invalid_argument(std::string("NetworkCase: ") + what + " bus out of range");
  };
  for (const auto& br : branches) {
    check_bus(br.from, "branch");
    check_bus(br.to, "branch");
    if (br.from == br.to) throw std::invalid_argument("NetworkCase: self-loop branch");
    if (!(br.x > 0)) throw std::invalid_argument("NetworkCase: nonpositive reactance");
    if (!(br.f_max > 0)) throw std::invalid_argument("NetworkCase: nonpositive flow limit");
    if (br.penalty < 0) throw std::invalid_argument("NetworkCase: negative penalty");
  }
  for (const auto& g : generators) {
    check_bus(g.bus, "generator");
    if (!(g.capacity > 0)) throw std::invalid_argument("NetworkCase: nonpositive capacity");
    if (g.ramp < 0) throw std::invalid_argument("NetworkCase: negative ramp");
  }
  for (const auto& l : loads) {
    check_bus(l.bus, "load");
    if (l.base < 0) throw std::invalid_argument("NetworkCase: negative base load");
  }
  // Connectivity by breadth-first search over branches.
  std::vector<char> seen(buses, 0);
  std::vector<int> queue{slack_bus - 1};
  seen[slack_bus - 1] = 1;
  while (!queue.empty()) {
    int b = queue.back();
    queue.pop_back();
    for (const auto& br : branches) {
      int other = -1;
      if (br.from - 1 == b) other = br.to - 1;
      if (br.to - 1 == b) other = br.from - 1;
      if (other >= 0 && !seen[other]) {
        seen[other] = 1;
        queue.push_back(other);
      }
    }
  }
  if (!std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; }))
    throw std::invalid_argument("NetworkCase: graph is not connected");
}

NetworkCase NetworkCase::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NetworkCase cs;
  cs.name = j.value("name", std::string());
  cs.buses = field(j, "buses").get<int>();
  cs.slack_bus = field(j, "slack_bus").get<int>();
  double f_max_default = j.value("f_max_default", 0.0);
  double penalty_default = j.value("penalty_default", 0.0);
  for (const auto& row : field(j, "branches")) {
    if (!row.is_array() || row.size() < 3 || row.size() > 5)
      throw std::invalid_argument("NetworkCase: branch rows are [from, to, x(, f_max, penalty)]");
    Branch br;
    br.from = row[0].get<int>();
    br.to = row[1].get<int>();
    br.x = row[2].get<double>();
    br.f_max = row.size() > 3 ? row[3].get<double>() : f_max_default;
    br.penalty = row.size() > 4 ? row[4].get<double>() : penalty_default;
    cs.branches.push_back(br);
  }
  for (const auto& row : field(j, "generators")) {
    Generator g;
    g.id = field(row, "id").get<std::string>();
    g.bus = field(row, "bus").get<int>();
    g.a = field(row, "a").get<double>();
    g.b = field(row, "b").get<double>();
    g.capacity = field(row, "capacity").get<double>();
    g.ramp = field(row, "ramp").get<double>();
    g.startup_cost = row.value("startup_cost", 0.0);
    g.fixed_cost = row.value("fixed_cost", 0.0);
    cs.generators.push_back(g);
  }
  for (const auto& row : field(j, "loads")) {
    if (!row.is_array() || row.size() != 2)
      throw std::invalid_argument("NetworkCase: load rows are [bus, base]");
    cs.loads.push_back({row[0].get<int>(), row[1].get<double>()});
  }
  cs.validate();
  return cs;
}

NetworkCase NetworkCase::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("NetworkCase: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::vector<double> ShiftFactorMatrix::flows(const std::vector<double>& injection) const {
  if (rows.empty() || injection.size() != rows.front().size())
    throw std::invalid_argument("ShiftFactorMatrix::flows: injection size mismatch");
  std::vector<double> f(rows.size(), 0.0);
  for (std::size_t l = 0; l < rows.size(); ++l)
    f[l] = std::inner_product(rows[l].begin(), rows[l].end(), injection.begin(), 0.0);
  return f;
}

ShiftFactorMatrix build_shift_factors(const NetworkCase& cs) {
  cs.validate();
  const int n = cs.buses;
  const int nb = static_cast<int>(cs.branches.size());
  const int slack = cs.slack_bus - 1;

  std::vector<int> red(n, -1);
  int m = 0;
  for (int b = 0; b < n; ++b)
    if (b != slack) red[b] = m++;

  // Reduced susceptance B = M' diag(1/x) M with the slack row/column removed.
  std::vector<std::vector<double>> a(m, std::vector<double>(2 * m, 0.0));
  for (const auto& br : cs.branches) {
    double y = 1.0 / br.x;
    int f = br.from - 1, t = br.to - 1;
    if (f != slack) a[red[f]][red[f]] += y;
    if (t != slack) a[red[t]][red[t]] += y;
    if (f != slack && t != slack) {
      a[red[f]][red[t]] -= y;
      a[red[t]][red[f]] -= y;
    }
  }
  // Gauss-Jordan inversion with partial pivoting on the augmented [B | I].
  for (int i = 0; i < m; ++i) a[i][m + i] = 1.0;
  for (int col = 0; col < m; ++col) {
    int piv = col;
    for (int r = col + 1; r < m; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-12)
      throw std::invalid_argument("build_shift_factors: singular reduced susceptance matrix");
    std::swap(a[col], a[piv]);
    double d = a[col][col];
    for (int c = col; c < 2 * m; ++c) a[col][c] /= d;
    for (int r = 0; r < m; ++r) {
      if (r == col) continue;
      double factor = a[r][col];
      if (factor == 0.0) continue;
      for (int c = col; c < 2 * m; ++c) a[r][c] -= factor * a[col][c];
    }
  }

  // theta(i) for a unit injection at bus b is Binv[red[i]][red[b]] (0 at the
  // slack); flow_l = (theta_from - theta_to) / x_l.
  ShiftFactorMatrix sf;
  sf.slack_bus = cs.slack_bus;
  sf.rows.assign(nb, std::vector<double>(n, 0.0));
  for (int l = 0; l < nb; ++l) {
    const auto& br = cs.branches[l];
    double y = 1.0 / br.x;
    int f = br.from - 1, t = br.to - 1;
    for (int b = 0; b < n; ++b) {
      if (b == slack) continue;
      double th_f = f == slack ? 0.0 : a[red[f]][m + red[b]];
      double th_t = t == slack ? 0.0 : a[red[t]][m + red[b]];
      sf.rows[l][b] = y * (th_f - th_t);
    }
  }
  return sf;
}

CommitSchedule commit(const NetworkCase& cs, const std::vector<double>& demand_totals,
                      double margin) {
  if (demand_totals.empty()) throw std::invalid_argument("commit: empty demand profile");
  if (!(margin >= 1.0)) throw std::invalid_argument("commit: margin below 1");
  double peak = *std::max_element(demand_totals.begin(), demand_totals.end());
  if (cs.total_capacity() < peak)
    throw std::invalid_argument("commit: fleet capacity below peak demand");

  const int n = static_cast<int>(cs.generators.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return cs.generators[i].a < cs.generators[j].a;
  });

  CommitSchedule sched;
  double target = margin * peak;
  double cum = 0.0;
  for (int i : order) {
    if (cum >= target) break;
    sched.committed.push_back(i);
    cum += cs.generators[i].capacity;
  }

  const int t_count = static_cast<int>(demand_totals.size());
  sched.u.assign(t_count, std::vector<int>(n, 0));
  sched.y.assign(t_count, std::vector<int>(n, 0));
  for (int t = 0; t < t_count; ++t)
    for (int i : sched.committed) sched.u[t][i] = 1;
  for (int i = 0; i < n; ++i) {
    sched.y[0][i] = sched.u[0][i];
    for (int t = 1; t < t_count; ++t)
      sched.y[t][i] = std::max(0, sched.u[t][i] - sched.u[t - 1][i]);
  }
  return sched;
}

DispatchResult sced(const NetworkCase& cs, const ShiftFactorMatrix& sf,
                    const std::vector<bids::StepBidCurve>& curves,
                    const std::vector<market::CostModel>& costs,
                    const std::vector<double>& loads_t,
                    const std::vector<int>& committed_t,
                    const std::vector<double>& prev_dispatch) {
  const int n_gen = static_cast<int>(cs.generators.size());
  const int nb = static_cast<int>(cs.branches.size());
  if (static_cast<int>(curves.size()) != n_gen || static_cast<int>(costs.size()) != n_gen ||
      static_cast<int>(prev_dispatch.size()) != n_gen)
    throw std::invalid_argument("sced: per-generator vectors must match the case");
  if (loads_t.size() != cs.loads.size())
    throw std::invalid_argument("sced: load vector must match the case load points");
  if (static_cast<int>(sf.rows.size()) != nb)
    throw std::invalid_argument("sced: shift factors do not match the case");

  std::vector<char> on(n_gen, 0);
  for (int i : committed_t) {
    if (i < 0 || i >= n_gen) throw std::invalid_argument("sced: committed index out of range");
    on[i] = 1;
  }

  // Variables: segments per generator, then s+, s-, then the shortfall.
  std::vector<int> seg_off(n_gen, 0);
  int n_seg = 0;
  for (int i = 0; i < n_gen; ++i) {
    if (curves[i].segments() <= 0) throw std::invalid_argument("sced: empty bid curve");
    seg_off[i] = n_seg;
    n_seg += curves[i].segments();
  }
  const int sp_off = n_seg, sm_off = n_seg + nb, shed = n_seg + 2 * nb;

  lp::LpProblem p;
  p.n = n_seg + 2 * nb + 1;
  p.c.assign(p.n, 0.0);
  p.lo.assign(p.n, 0.0);
  p.up.assign(p.n, 0.0);
  double total_load = std::accumulate(loads_t.begin(), loads_t.end(), 0.0);
  for (int i = 0; i < n_gen; ++i) {
    const auto& cur = curves[i];
    for (int b = 0; b < cur.segments(); ++b) {
      double width = cur.breakpoints[b + 1] - cur.breakpoints[b];
      if (width < 0) throw std::invalid_argument("sced: decreasing breakpoints");
      p.c[seg_off[i] + b] = cur.prices[b];
      p.up[seg_off[i] + b] = on[i] ? width : 0.0;
    }
  }
  for (int l = 0; l < nb; ++l) {
    p.c[sp_off + l] = cs.branches[l].penalty;
    p.c[sm_off + l] = cs.branches[l].penalty;
    p.up[sp_off + l] = std::numeric_limits<double>::infinity();
    p.up[sm_off + l] = std::numeric_limits<double>::infinity();
  }
  p.c[shed] = kShortfallPenalty;
  p.up[shed] = std::max(0.0, total_load);

  // Balance: sum of dispatch plus shortfall equals total load.
  std::vector<double> balance(p.n, 0.0);
  for (int v = 0; v < n_seg; ++v) balance[v] = 1.0;
  balance[shed] = 1.0;
  p.a_eq.push_back(std::move(balance));
  p.b_eq.push_back(total_load);

  // Net withdrawal term per branch: K_l = sum_m SF[l][bus_m] * load_m, so
  // flow_l = sum SF[l][bus_i] g_i - K_l.
  std::vector<double> k(nb, 0.0);
  for (int l = 0; l < nb; ++l)
    for (std::size_t mi = 0; mi < cs.loads.size(); ++mi)
      k[l] += sf.rows[l][cs.loads[mi].bus - 1] * loads_t[mi];

  // Rows 0..nb-1: flow <= F + s+; rows nb..2nb-1: -flow <= F + s-.
  for (int l = 0; l < nb; ++l) {
    std::vector<double> row(p.n, 0.0);
    for (int i = 0; i < n_gen; ++i) {
      double coeff = sf.rows[l][cs.generators[i].bus - 1];
      for (int b = 0; b < curves[i].segments(); ++b) row[seg_off[i] + b] = coeff;
    }
    row[sp_off + l] = -1.0;
    p.a_ineq.push_back(std::move(row));
    p.b_ineq.push_back(cs.branches[l].f_max + k[l]);
  }
  for (int l = 0; l < nb; ++l) {
    std::vector<double> row(p.n, 0.0);
    for (int i = 0; i < n_gen; ++i) {
      double coeff = -sf.rows[l][cs.generators[i].bus - 1];
      for (int b = 0; b < curves[i].segments(); ++b) row[seg_off[i] + b] = coeff;
    }
    row[sm_off + l] = -1.0;
    p.a_ineq.push_back(std::move(row));
    p.b_ineq.push_back(cs.branches[l].f_max - k[l]);
  }
  // Ramp coupling |g_i - prev_i| <= RR_i for online units.
  for (int i = 0; i < n_gen; ++i) {
    if (!on[i]) continue;
    std::vector<double> up_row(p.n, 0.0), dn_row(p.n, 0.0);
    for (int b = 0; b < curves[i].segments(); ++b) {
      up_row[seg_off[i] + b] = 1.0;
      dn_row[seg_off[i] + b] = -1.0;
    }
    p.a_ineq.push_back(std::move(up_row));
    p.b_ineq.push_back(cs.generators[i].ramp + prev_dispatch[i]);
    p.a_ineq.push_back(std::move(dn_row));
    p.b_ineq.push_back(cs.generators[i].ramp - prev_dispatch[i]);
  }

  lp::LpSolution sol = lp::solve(p);
  if (sol.status != lp::LpStatus::optimal)
    throw std::runtime_error(std::string("sced: dispatch LP ") + lp::to_string(sol.status));

  DispatchResult r;
  r.objective = sol.objective;
  r.lp_iterations = sol.iterations;
  r.g.assign(n_gen, 0.0);
  r.g_seg.resize(n_gen);
  for (int i = 0; i < n_gen; ++i) {
    r.g_seg[i].assign(curves[i].segments(), 0.0);
    for (int b = 0; b < curves[i].segments(); ++b) {
      r.g_seg[i][b] = sol.x[seg_off[i] + b];
      r.g[i] += r.g_seg[i][b];
    }
  }
  r.s_plus.assign(nb, 0.0);
  r.s_minus.assign(nb, 0.0);
  for (int l = 0; l < nb; ++l) {
    r.s_plus[l] = sol.x[sp_off + l];
    r.s_minus[l] = sol.x[sm_off + l];
  }
  r.shortfall = sol.x[shed];

  std::vector<double> injection(cs.buses, 0.0);
  for (int i = 0; i < n_gen; ++i) injection[cs.generators[i].bus - 1] += r.g[i];
  for (std::size_t mi = 0; mi < cs.loads.size(); ++mi)
    injection[cs.loads[mi].bus - 1] -= loads_t[mi];
  r.flows = sf.flows(injection);

  r.lambda_e = sol.eq_dual[0];
  r.mu_plus.assign(nb, 0.0);
  r.mu_minus.assign(nb, 0.0);
  for (int l = 0; l < nb; ++l) {
    r.mu_plus[l] = sol.ineq_dual[l];
    r.mu_minus[l] = sol.ineq_dual[nb + l];
  }
  r.lambda_c.assign(cs.buses, 0.0);
  for (int b = 0; b < cs.buses; ++b)
    for (int l = 0; l < nb; ++l)
      r.lambda_c[b] -= sf.rows[l][b] * (r.mu_plus[l] - r.mu_minus[l]);
  r.lmp.assign(cs.buses, 0.0);
  for (int b = 0; b < cs.buses; ++b) r.lmp[b] = r.lambda_e + r.lambda_c[b];

  r.profit.assign(n_gen, 0.0);
  for (int i = 0; i < n_gen; ++i) {
    double q = std::clamp(r.g[i], 0.0, costs[i].q_max());
    r.profit[i] = r.lmp[cs.generators[i].bus - 1] * q - costs[i].cost(q);
  }
  return r;
}

MultiAgentNetworkEnv::MultiAgentNetworkEnv(NetworkCase cs, const NetworkEnvConfig& cfg,
                                           std::uint64_t master_seed)
    : case_(std::move(cs)), cfg_(cfg), rng_(master_seed) {
  case_.validate();
  if (cfg_.t_count <= 0) throw std::invalid_argument("MultiAgentNetworkEnv: t_count <= 0");
  if (!(cfg_.peak_fraction > 0) || !(cfg_.price_cap > 0) || !(cfg_.reward_scale > 0))
    throw std::invalid_argument("MultiAgentNetworkEnv: nonpositive scale parameter");
  sf_ = build_shift_factors(case_);
  std::uniform_real_distribution<double> gamma_draw(cfg_.gamma_lo, cfg_.gamma_hi);
  for (const auto& g : case_.generators) {
    double gamma = gamma_draw(rng_);
    gammas_.push_back(gamma);
    costs_.emplace_back(g.a, g.b, gamma, g.capacity);
  }
  // Calibrate the base-load multiplier so the noise-free diurnal peak hits
  // peak_fraction of fleet capacity.
  load_scale_ = cfg_.peak_fraction * case_.total_capacity() /
                (case_.total_base_load() * (1.0 + cfg_.shape_amplitude));
  prev_dispatch_.assign(case_.generators.size(), 0.0);
}

maps::DpmpConfig MultiAgentNetworkEnv::agent_map_config(int agent) const {
  maps::DpmpConfig c = cfg_.map_cfg;
  c.q_max = case_.generators[agent].capacity;
  c.p_max = cfg_.price_cap;
  return c;
}

std::vector<double> MultiAgentNetworkEnv::obs_at(int t) const {
  double prev_total = load_scale_ * case_.total_base_load();
  if (t > 0) {
    prev_total = 0.0;
    for (double v : loads_[t - 1]) prev_total += v;
  }
  double angle = kTwoPi * t / cfg_.t_count;
  return {std::sin(angle), std::cos(angle), prev_total / case_.total_capacity()};
}

std::vector<std::vector<double>> MultiAgentNetworkEnv::reset() {
  std::normal_distribution<double> noise(0.0, 1.0);
  loads_.assign(cfg_.t_count, std::vector<double>(case_.loads.size(), 0.0));
  std::vector<double> totals(cfg_.t_count, 0.0);
  for (int t = 0; t < cfg_.t_count; ++t) {
    double shape = 1.0 + cfg_.shape_amplitude * std::sin(kTwoPi * t / cfg_.t_count + cfg_.phase);
    for (std::size_t mi = 0; mi < case_.loads.size(); ++mi) {
      double v = case_.loads[mi].base * load_scale_ * shape *
                 (1.0 + cfg_.load_noise_frac * noise(rng_));
      loads_[t][mi] = std::max(0.0, v);
      totals[t] += loads_[t][mi];
    }
  }
  sched_ = commit(case_, totals, cfg_.commit_margin);
  std::fill(prev_dispatch_.begin(), prev_dispatch_.end(), 0.0);
  t_ = 0;
  episode_open_ = true;
  return std::vector<std::vector<double>>(agents(), obs_at(0));
}

std::vector<std::vector<double>> MultiAgentNetworkEnv::reset_with_seed(std::uint64_t load_seed) {
  std::mt19937_64 keep = rng_;
  rng_ = std::mt19937_64(load_seed);
  auto obs = reset();
  rng_ = keep;
  return obs;
}

NetworkStep MultiAgentNetworkEnv::step(const std::vector<std::vector<double>>& actions) {
  if (!episode_open_) throw std::logic_error("MultiAgentNetworkEnv::step: call reset first");
  if (static_cast<int>(actions.size()) != agents())
    throw std::invalid_argument("MultiAgentNetworkEnv::step: one action per agent required");

  std::vector<bids::StepBidCurve> curves;
  curves.reserve(agents());
  for (int i = 0; i < agents(); ++i) {
    if (static_cast<int>(actions[i].size()) != act_dim())
      throw std::invalid_argument("MultiAgentNetworkEnv::step: action dimension mismatch");
    maps::UnitBoxAction a;
    a.u_q.assign(actions[i].begin(), actions[i].begin() + act_dim() / 2);
    a.u_p.assign(actions[i].begin() + act_dim() / 2, actions[i].end());
    curves.push_back(maps::dpmp_forward(a, agent_map_config(i)));
  }

  NetworkStep out;
  out.t = t_;
  out.dispatch =
      sced(case_, sf_, curves, costs_, loads_[t_], sched_.committed, prev_dispatch_);
  out.reward.resize(agents());
  for (int i = 0; i < agents(); ++i)
    out.reward[i] = out.dispatch.profit[i] * cfg_.reward_scale;
  prev_dispatch_ = out.dispatch.g;

  ++t_;
  out.done = t_ >= cfg_.t_count;
  if (out.done) {
    episode_open_ = false;
  } else {
    out.obs.assign(agents(), obs_at(t_));
  }
  return out;
}

}  // namespace bidlab::net
