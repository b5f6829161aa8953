#include "vanet/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

namespace vanet::exp {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Phy: return "phy";
    case Mode::Analytic: return "analytic";
    case Mode::Simulate: return "simulate";
    case Mode::Compare: return "compare";
  }
  return "?";
}

std::string_view to_string(SweepVar v) {
  switch (v) {
    case SweepVar::Threshold: return "threshold";
    case SweepVar::Eta: return "eta";
    case SweepVar::Snr: return "snr";
    case SweepVar::SensingTime: return "sensing_time";
    case SweepVar::Density: return "density";
    case SweepVar::RelativeSpeed: return "relative_speed";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::Phy, Mode::Analytic, Mode::Simulate, Mode::Compare}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

SweepVar parse_sweep_var(std::string_view s) {
  for (SweepVar v : {SweepVar::Threshold, SweepVar::Eta, SweepVar::Snr, SweepVar::SensingTime,
                     SweepVar::Density, SweepVar::RelativeSpeed}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown sweep variable '" + std::string(s) + "'");
}

std::vector<double> Sweep::values() const {
  if (!(step > 0.0) || !(stop >= start)) {
    throw ConfigError("empty sweep range: start=" + format_number(start) +
                      " stop=" + format_number(stop) + " step=" + format_number(step));
  }
  const auto n = static_cast<std::int64_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) v.push_back(start + static_cast<double>(k) * step);
  return v;
}

phy::SensingConfig PhyParams::sensing() const {
  return phy::SensingConfig::from_window(tau_us * 1e-6, fs_mhz * 1e6, phy::db_to_linear(gamma1_db),
                                         phy::db_to_linear(gamma2_db), eta, sigma_w2);
}

namespace {

const std::map<std::string, std::set<std::string>> kAllowed = {
    {"experiment",
     {"name", "mode", "sweep_var", "sweep_start", "sweep_stop", "sweep_step", "protocols", "seeds",
      "seed_base", "agreement"}},
    {"sensing",
     {"tau_us", "fs_mhz", "gamma1_db", "gamma2_db", "eta", "sigma_w2", "target_pd", "rate_mbps",
      "snr_db", "v_rel_kmh", "carrier_ghz", "fluctuation", "mc_trials"}},
    {"mac",
     {"t_slot_us", "t_aifs_us", "t_h_us", "t_cam_ms", "cam_bytes", "phy_rate_mbps", "w",
      "idle_mode", "protocol_occupancy", "fd_hidden_uses_hd_direct", "truncation", "tolerance",
      "max_iterations", "damping"}},
    {"topology", {"density_veh_per_km", "r_sens_m", "r_tx_m", "d_rx_m", "n_hc"}},
    {"detection", {"pd", "pf", "pd_dt", "pf_dt"}},
    {"priority", {"p_gn", "p_ge", "p_gc"}},
    {"sim",
     {"duration_s", "road_length_m", "cd_windows", "sensing_mode", "wraparound",
      "drop_on_first_collision"}},
};

std::vector<Protocol> parse_protocols(const std::string& s) {
  std::vector<Protocol> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::string t;
    for (char c : item) {
      if (!std::isspace(static_cast<unsigned char>(c))) t += c;
    }
    if (t.empty()) continue;
    const Protocol p = parse_protocol(t);
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  if (out.empty()) throw ConfigError("protocol list is empty");
  return out;
}

std::string fmt(double v) { return format_number(v); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

ExperimentSpec ExperimentSpec::from_config(const ConfigFile& c) {
  c.check_keys(kAllowed, {"meta"});
  ExperimentSpec s;
  s.name = c.get_string("experiment", "name", s.name);
  s.mode = parse_mode(c.get_string("experiment", "mode", std::string(to_string(s.mode))));
  s.sweep.var = parse_sweep_var(
      c.get_string("experiment", "sweep_var", std::string(to_string(s.sweep.var))));
  s.sweep.start = c.get_double("experiment", "sweep_start", s.sweep.start);
  s.sweep.stop = c.get_double("experiment", "sweep_stop", s.sweep.stop);
  s.sweep.step = c.get_double("experiment", "sweep_step", s.sweep.step);
  if (auto p = c.get("experiment", "protocols")) s.protocols = parse_protocols(*p);
  s.seeds = static_cast<int>(c.get_int("experiment", "seeds", s.seeds));
  s.seed_base = static_cast<std::uint64_t>(
      c.get_int("experiment", "seed_base", static_cast<std::int64_t>(s.seed_base)));
  s.agreement = c.get_double("experiment", "agreement", s.agreement);

  auto& p = s.phy;
  p.tau_us = c.get_double("sensing", "tau_us", p.tau_us);
  p.fs_mhz = c.get_double("sensing", "fs_mhz", p.fs_mhz);
  p.gamma1_db = c.get_double("sensing", "gamma1_db", p.gamma1_db);
  p.gamma2_db = c.get_double("sensing", "gamma2_db", p.gamma2_db);
  p.eta = c.get_double("sensing", "eta", p.eta);
  p.sigma_w2 = c.get_double("sensing", "sigma_w2", p.sigma_w2);
  p.target_pd = c.get_double("sensing", "target_pd", p.target_pd);
  p.rate_mbps = c.get_double("sensing", "rate_mbps", p.rate_mbps);
  p.snr_db = c.get_double("sensing", "snr_db", p.snr_db);
  p.v_rel_kmh = c.get_double("sensing", "v_rel_kmh", p.v_rel_kmh);
  p.carrier_ghz = c.get_double("sensing", "carrier_ghz", p.carrier_ghz);
  p.fluctuation = c.get_double("sensing", "fluctuation", p.fluctuation);
  p.mc_trials = c.get_int("sensing", "mc_trials", p.mc_trials);

  auto& t = s.timings;
  t.t_slot = c.get_double("mac", "t_slot_us", t.t_slot * 1e6) * 1e-6;
  t.t_aifs = c.get_double("mac", "t_aifs_us", t.t_aifs * 1e6) * 1e-6;
  t.t_h = c.get_double("mac", "t_h_us", t.t_h * 1e6) * 1e-6;
  t.t_cam = c.get_double("mac", "t_cam_ms", t.t_cam * 1e3) * 1e-3;
  s.cam_bytes = c.get_double("mac", "cam_bytes", s.cam_bytes);
  s.phy_rate_mbps = c.get_double("mac", "phy_rate_mbps", s.phy_rate_mbps);
  if (!(s.phy_rate_mbps > 0.0) || !(s.cam_bytes > 0.0)) {
    throw ConfigError("mac: cam_bytes and phy_rate_mbps must be > 0");
  }
  t.t_pkt = s.cam_bytes * 8.0 / (s.phy_rate_mbps * 1e6);
  s.opts.w = static_cast<int>(c.get_int("mac", "w", s.opts.w));
  const std::string idle = c.get_string("mac", "idle_mode", "binomial");
  if (idle == "binomial") {
    s.opts.idle_mode = model::IdleMode::Binomial;
  } else if (idle == "paper-literal") {
    s.opts.idle_mode = model::IdleMode::PaperLiteral;
  } else {
    throw ConfigError("mac: idle_mode must be 'binomial' or 'paper-literal'");
  }
  s.opts.protocol_occupancy = c.get_bool("mac", "protocol_occupancy", s.opts.protocol_occupancy);
  s.opts.fd_hidden_uses_hd_direct =
      c.get_bool("mac", "fd_hidden_uses_hd_direct", s.opts.fd_hidden_uses_hd_direct);
  s.opts.truncation = static_cast<int>(c.get_int("mac", "truncation", s.opts.truncation));
  s.opts.tolerance = c.get_double("mac", "tolerance", s.opts.tolerance);
  s.opts.max_iterations =
      static_cast<int>(c.get_int("mac", "max_iterations", s.opts.max_iterations));
  s.opts.damping = c.get_double("mac", "damping", s.opts.damping);

  s.topo.beta = c.get_double("topology", "density_veh_per_km", s.topo.beta * 1e3) * 1e-3;
  s.topo.r_sens = c.get_double("topology", "r_sens_m", s.topo.r_sens);
  s.topo.r_tx = c.get_double("topology", "r_tx_m", s.topo.r_tx);
  s.topo.d_rx = c.get_double("topology", "d_rx_m", s.topo.r_tx);
  if (c.has("topology", "n_hc")) s.topo.n_hc_override = c.get_double("topology", "n_hc", 0.0);

  s.det.pd = c.get_double("detection", "pd", s.det.pd);
  s.det.pf = c.get_double("detection", "pf", s.det.pf);
  s.det_dt.pd = c.get_double("detection", "pd_dt", s.det.pd);
  s.det_dt.pf = c.get_double("detection", "pf_dt", s.det.pf);

  s.mix.p_gn = c.get_double("priority", "p_gn", s.mix.p_gn);
  s.mix.p_ge = c.get_double("priority", "p_ge", s.mix.p_ge);
  s.mix.p_gc = c.get_double("priority", "p_gc", s.mix.p_gc);

  s.sim.duration_s = c.get_double("sim", "duration_s", s.sim.duration_s);
  s.sim.road_length_m = c.get_double("sim", "road_length_m", s.sim.road_length_m);
  s.sim.cd_windows = static_cast<int>(c.get_int("sim", "cd_windows", s.sim.cd_windows));
  const std::string mode = c.get_string("sim", "sensing_mode", "abstract");
  if (mode == "abstract") {
    s.sim.signal_level = false;
  } else if (mode == "signal") {
    s.sim.signal_level = true;
  } else {
    throw ConfigError("sim: sensing_mode must be 'abstract' or 'signal'");
  }
  s.sim.wraparound = c.get_bool("sim", "wraparound", s.sim.wraparound);
  s.sim.drop_on_first_collision =
      c.get_bool("sim", "drop_on_first_collision", s.sim.drop_on_first_collision);

  s.validate();
  return s;
}

ConfigFile ExperimentSpec::to_config() const {
  ConfigFile c;
  c.set("experiment", "name", name);
  c.set("experiment", "mode", std::string(to_string(mode)));
  c.set("experiment", "sweep_var", std::string(to_string(sweep.var)));
  c.set("experiment", "sweep_start", fmt(sweep.start));
  c.set("experiment", "sweep_stop", fmt(sweep.stop));
  c.set("experiment", "sweep_step", fmt(sweep.step));
  std::string plist;
  for (Protocol p : protocols) {
    if (!plist.empty()) plist += ",";
    plist += std::string(vanet::to_string(p));
  }
  c.set("experiment", "protocols", plist);
  c.set("experiment", "seeds", std::to_string(seeds));
  c.set("experiment", "seed_base", std::to_string(seed_base));
  c.set("experiment", "agreement", fmt(agreement));

  c.set("sensing", "tau_us", fmt(phy.tau_us));
  c.set("sensing", "fs_mhz", fmt(phy.fs_mhz));
  c.set("sensing", "gamma1_db", fmt(phy.gamma1_db));
  c.set("sensing", "gamma2_db", fmt(phy.gamma2_db));
  c.set("sensing", "eta", fmt(phy.eta));
  c.set("sensing", "sigma_w2", fmt(phy.sigma_w2));
  c.set("sensing", "target_pd", fmt(phy.target_pd));
  c.set("sensing", "rate_mbps", fmt(phy.rate_mbps));
  c.set("sensing", "snr_db", fmt(phy.snr_db));
  c.set("sensing", "v_rel_kmh", fmt(phy.v_rel_kmh));
  c.set("sensing", "carrier_ghz", fmt(phy.carrier_ghz));
  c.set("sensing", "fluctuation", fmt(phy.fluctuation));
  c.set("sensing", "mc_trials", std::to_string(phy.mc_trials));

  c.set("mac", "t_slot_us", fmt(timings.t_slot * 1e6));
  c.set("mac", "t_aifs_us", fmt(timings.t_aifs * 1e6));
  c.set("mac", "t_h_us", fmt(timings.t_h * 1e6));
  c.set("mac", "t_cam_ms", fmt(timings.t_cam * 1e3));
  c.set("mac", "cam_bytes", fmt(cam_bytes));
  c.set("mac", "phy_rate_mbps", fmt(phy_rate_mbps));
  c.set("mac", "w", std::to_string(opts.w));
  c.set("mac", "idle_mode",
        opts.idle_mode == model::IdleMode::Binomial ? "binomial" : "paper-literal");
  c.set("mac", "protocol_occupancy", fmt_bool(opts.protocol_occupancy));
  c.set("mac", "fd_hidden_uses_hd_direct", fmt_bool(opts.fd_hidden_uses_hd_direct));
  c.set("mac", "truncation", std::to_string(opts.truncation));
  c.set("mac", "tolerance", fmt(opts.tolerance));
  c.set("mac", "max_iterations", std::to_string(opts.max_iterations));
  c.set("mac", "damping", fmt(opts.damping));

  c.set("topology", "density_veh_per_km", fmt(topo.beta * 1e3));
  c.set("topology", "r_sens_m", fmt(topo.r_sens));
  c.set("topology", "r_tx_m", fmt(topo.r_tx));
  c.set("topology", "d_rx_m", fmt(topo.d_rx));
  if (topo.n_hc_override) c.set("topology", "n_hc", fmt(*topo.n_hc_override));

  c.set("detection", "pd", fmt(det.pd));
  c.set("detection", "pf", fmt(det.pf));
  c.set("detection", "pd_dt", fmt(det_dt.pd));
  c.set("detection", "pf_dt", fmt(det_dt.pf));

  c.set("priority", "p_gn", fmt(mix.p_gn));
  c.set("priority", "p_ge", fmt(mix.p_ge));
  c.set("priority", "p_gc", fmt(mix.p_gc));

  c.set("sim", "duration_s", fmt(sim.duration_s));
  c.set("sim", "road_length_m", fmt(sim.road_length_m));
  c.set("sim", "cd_windows", std::to_string(sim.cd_windows));
  c.set("sim", "sensing_mode", sim.signal_level ? "signal" : "abstract");
  c.set("sim", "wraparound", fmt_bool(sim.wraparound));
  c.set("sim", "drop_on_first_collision", fmt_bool(sim.drop_on_first_collision));
  return c;
}

void ExperimentSpec::validate() const {
  (void)sweep.values();
  const bool phy_var = sweep.var != SweepVar::Density;
  if (mode == Mode::Phy && !phy_var) {
    throw ConfigError("phy mode sweeps threshold, eta, snr, sensing_time or relative_speed");
  }
  if (mode != Mode::Phy && sweep.var != SweepVar::Density) {
    throw ConfigError(std::string(to_string(mode)) + " mode sweeps density only");
  }
  if ((mode == Mode::Simulate || mode == Mode::Compare) && seeds < 1) {
    throw ConfigError("seeds must be >= 1");
  }
  if (!(agreement > 0.0)) throw ConfigError("agreement threshold must be > 0");
  if (!(phy.target_pd > 0.0 && phy.target_pd < 1.0)) {
    throw ConfigError("sensing: target_pd must lie in (0,1)");
  }
  if (phy.mc_trials < 0) throw ConfigError("sensing: mc_trials must be >= 0");
  if (!(phy.fluctuation >= 0.0)) throw ConfigError("sensing: fluctuation must be >= 0");
  (void)phy.sensing();
  timings.validate();
  topo.validate();
  det.validate();
  det_dt.validate();
  mix.validate();
  opts.validate();
  if (mode == Mode::Simulate || mode == Mode::Compare) {
    for (Protocol p : protocols) sim_config(p, topo.beta, seed_base).validate();
  }
}

sim::SimConfig ExperimentSpec::sim_config(Protocol p, double beta, std::uint64_t seed) const {
  sim::SimConfig c;
  c.seed = seed;
  c.duration = sim.duration_s;
  c.road_length = sim.road_length_m;
  c.beta = beta;
  c.r_sens = topo.r_sens;
  c.r_tx = topo.r_tx;
  c.timings = timings;
  c.mix = mix;
  c.protocol = p;
  c.w = opts.w;
  c.cd_windows = sim.cd_windows;
  c.wraparound = sim.wraparound;
  c.drop_on_first_collision = sim.drop_on_first_collision;
  c.abstract_sensing = {det, det_dt};
  c.signal_level = sim.signal_level;
  if (sim.signal_level) {
    const phy::SensingConfig sc = phy.sensing();
    c.signal_sensing = {sc, phy::thresholds_for_target(phy.target_pd, phy.target_pd, sc)};
  }
  return c;
}

void MetricsReport::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.sweep_value, a.protocol, a.metric) <
           std::tie(b.sweep_value, b.protocol, b.metric);
  });
}

const Row* MetricsReport::find(double sweep_value, std::string_view protocol,
                               std::string_view metric) const {
  for (const Row& r : rows) {
    if (r.sweep_value == sweep_value && r.protocol == protocol && r.metric == metric) return &r;
  }
  return nullptr;
}

namespace {

void add(MetricsReport& rep, double x, std::string_view proto, std::string metric, double v) {
  rep.rows.push_back({x, std::string(proto), std::move(metric), v, std::nullopt, 0});
}

struct SeedStats {
  double mean = 0.0;
  std::optional<double> se;
  int n = 0;
};

SeedStats stats_of(const std::vector<double>& xs) {
  SeedStats s;
  s.n = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / s.n;
  if (s.n >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

void phy_point(const ExperimentSpec& spec, double x, std::size_t index, MetricsReport& rep) {
  PhyParams p = spec.phy;
  switch (spec.sweep.var) {
    case SweepVar::Eta: p.eta = x; break;
    case SweepVar::Snr: p.gamma2_db = x; break;
    case SweepVar::SensingTime: p.tau_us = x; break;
    case SweepVar::RelativeSpeed: p.v_rel_kmh = x; break;
    default: break;
  }
  const phy::SensingConfig cfg = p.sensing();
  constexpr std::string_view kPhy = "PHY";

  phy::ThresholdPair th = phy::thresholds_for_target(p.target_pd, p.target_pd, cfg);
  if (spec.sweep.var == SweepVar::Threshold) {
    th.eps0 = x * cfg.sigma_w2;
    th.eps1 = phy::threshold_link(th.eps0, cfg);
  }
  const auto bt = phy::rates_before(th.eps0, cfg);
  const auto dt = phy::rates_during(th.eps1, cfg);
  add(rep, x, kPhy, "eps0", th.eps0);
  add(rep, x, kPhy, "eps1", th.eps1);
  add(rep, x, kPhy, "pf_bt", bt.pf_bt);
  add(rep, x, kPhy, "pd_bt", bt.pd_bt);
  add(rep, x, kPhy, "pf_dt", dt.pf_dt);
  add(rep, x, kPhy, "pd_dt", dt.pd_dt);

  if (p.fluctuation > 0.0) {
    const double m = p.fluctuation * cfg.eta;
    add(rep, x, kPhy, "pf_dt_fluct", phy::pf_during_fluctuating(th.eps1, cfg, cfg.eta, m));
    add(rep, x, kPhy, "pd_dt_fluct", phy::pd_during_fluctuating(th.eps1, cfg, cfg.eta, m));
  }

  if (spec.sweep.var == SweepVar::RelativeSpeed) {
    const auto plan = phy::sensing_window_plan(p.rate_mbps * 1e6, p.snr_db, p.v_rel_kmh / 3.6,
                                               p.carrier_ghz * 1e9);
    add(rep, x, kPhy, "delta_f", plan.delta_f);
    add(rep, x, kPhy, "b", plan.b);
    add(rep, x, kPhy, "b_wide", plan.b_wide);
    const phy::SensingConfig wide = cfg.with_gamma2(cfg.gamma2 * plan.b / plan.b_wide);
    const auto th_wide = phy::thresholds_for_target(p.target_pd, p.target_pd, wide);
    add(rep, x, kPhy, "pd_bt_wide", phy::rates_before(th_wide.eps0, wide).pd_bt);
    const phy::SensingConfig fixed =
        cfg.with_gamma2(phy::effective_snr_fixed_window(cfg.gamma2, plan.delta_f, plan.b));
    add(rep, x, kPhy, "pd_bt_fixed", phy::rates_before(th.eps0, fixed).pd_bt);
  }

  if (p.mc_trials > 0) {
    const auto mc = phy::empirical_rates(cfg, th, p.mc_trials, spec.seed_base + index);
    add(rep, x, kPhy, "pf_bt_mc", mc.pf_bt);
    add(rep, x, kPhy, "pd_bt_mc", mc.pd_bt);
    add(rep, x, kPhy, "pf_dt_mc", mc.pf_dt);
    add(rep, x, kPhy, "pd_dt_mc", mc.pd_dt);
  }
}

void analytic_point(const ExperimentSpec& spec, double x, MetricsReport& rep) {
  model::TopologyParams topo = spec.topo;
  topo.beta = x * 1e-3;
  for (Protocol p : spec.protocols) {
    const std::string_view name = vanet::to_string(p);
    model::ProtocolMetrics m;
    try {
      m = model::evaluate(p, topo, spec.timings, spec.det, spec.mix, spec.opts);
    } catch (const SolverError& e) {
      rep.nonconverged = true;
      rep.warnings.push_back(std::string(name) + " at density " + format_number(x) +
                             ": " + e.what() + " (residual " + format_number(e.residual()) + ")");
      add(rep, x, name, "converged", 0.0);
      continue;
    }
    add(rep, x, name, "converged", 1.0);
    add(rep, x, name, "iterations", m.state.iterations);
    add(rep, x, name, "p_idle", m.state.p_idle);
    add(rep, x, name, "p_r", m.state.p_r);
    add(rep, x, name, "p_sigma", m.state.p_sigma);
    add(rep, x, name, "t_bo", m.state.t_bo);
    add(rep, x, name, "ps_agg", m.state.ps_agg);
    add(rep, x, name, "p_dc1", m.collision.p_dc1);
    add(rep, x, name, "p_dc2", m.collision.p_dc2);
    if (p == Protocol::Pbma) {
      add(rep, x, name, "p_dc3", m.collision.p_dc3);
      add(rep, x, name, "p_dc4", m.collision.p_dc4);
    }
    add(rep, x, name, "p_dc", m.p_dc);
    add(rep, x, name, "p_hc", m.p_hc);
    add(rep, x, name, "p_c", m.p_c);
    add(rep, x, name, "clamped", m.collision.clamped ? 1.0 : 0.0);
    if (p != Protocol::HdEdca) {
      const int cases = p == Protocol::Pbma ? 6 : 1;
      for (int k = 0; k < cases; ++k) {
        add(rep, x, name, "c_d" + std::to_string(k + 1), m.duration.cases[k]);
      }
      add(rep, x, name, "c_d7", m.duration.hidden);
    }
    add(rep, x, name, "c_d", m.c_d);
    for (const auto& [term, value] : m.waiting.terms) {
      std::string key = term;
      std::transform(key.begin(), key.end(), key.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      add(rep, x, name, key, value);
    }
    add(rep, x, name, "t_w", m.t_w);
    add(rep, x, name, "sr", m.sr);
    if (m.critical && m.critical->present) {
      add(rep, x, name, "mc_p_c", m.critical->p_c_conditional);
      add(rep, x, name, "mc_p_c_weighted", m.critical->p_c_weighted);
      add(rep, x, name, "mc_c_d", m.critical->c_d);
      add(rep, x, name, "mc_t_w", m.critical->t_w_conditional);
      add(rep, x, name, "mc_t_w_weighted", m.critical->t_w_weighted);
    }
  }
}

struct SimSeries {
  std::vector<std::pair<std::string, std::vector<double>>> metrics;
  void push(const std::string& name, double v) {
    for (auto& [k, xs] : metrics) {
      if (k == name) {
        xs.push_back(v);
        return;
      }
    }
    metrics.push_back({name, {v}});
  }
  const std::vector<double>* get(std::string_view name) const {
    for (const auto& [k, xs] : metrics) {
      if (k == name) return &xs;
    }
    return nullptr;
  }
};

SimSeries simulate_point(const ExperimentSpec& spec, Protocol p, double x) {
  SimSeries series;
  for (int k = 0; k < spec.seeds; ++k) {
    const sim::SimReport r =
        sim::run(spec.sim_config(p, x * 1e-3, spec.seed_base + static_cast<std::uint64_t>(k)));
    series.push("collision_probability", r.collision_probability());
    series.push("collision_duration", r.mean_collision_duration());
    series.push("wasted_airtime", r.wasted_airtime_per_attempt());
    series.push("waiting_time", r.mean_waiting());
    series.push("throughput", r.throughput());
    series.push("hidden_share", r.collided_attempts
                                    ? static_cast<double>(r.hidden_attempts) /
                                          static_cast<double>(r.collided_attempts)
                                    : 0.0);
    for (Priority q : kAllPriorities) {
      series.push("success_" + std::string(vanet::to_string(q)), r.success_rate(q));
    }
  }
  return series;
}

void add_series(MetricsReport& rep, double x, std::string_view proto, const std::string& metric,
                const std::vector<double>& xs) {
  const SeedStats s = stats_of(xs);
  rep.rows.push_back({x, std::string(proto), metric, s.mean, s.se, s.n});
}

std::vector<std::string> deviation_notes(const ExperimentSpec& spec) {
  std::vector<std::string> n;
  n.push_back(spec.opts.idle_mode == model::IdleMode::Binomial
                  ? "idle probability: binomial-weighted mixture"
                  : "idle probability: printed sum without binomial weights");
  n.push_back("collision duration: cases 1-6 weighted by pair probabilities, hidden case by p_hc");
  n.push_back(spec.opts.fd_hidden_uses_hd_direct
                  ? "FD hidden-collision correction: HD direct-collision probability"
                  : "FD hidden-collision correction: FD direct-collision probability");
  n.push_back(spec.opts.protocol_occupancy
                  ? "channel occupancy per attempt: protocol dependent"
                  : "channel occupancy per attempt: t_pkt for every protocol");
  n.push_back("PBMA one-Mc/Me case: exactly one Mc/Me among i contenders");
  n.push_back("Mc/Me waiting series: mis-detection terms use (1 - P_idle)^k");
  n.push_back("repeated backoff draws share the mean t_bo");
  n.push_back("simulated collision probability: collided attempts / attempts");
  return n;
}

}  // namespace

MetricsReport run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.mode == Mode::Compare) return compare(spec);
  MetricsReport rep;
  rep.sweep_var = std::string(to_string(spec.sweep.var));
  rep.notes = deviation_notes(spec);
  const auto xs = spec.sweep.values();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i];
    switch (spec.mode) {
      case Mode::Phy: phy_point(spec, x, i, rep); break;
      case Mode::Analytic: analytic_point(spec, x, rep); break;
      case Mode::Simulate:
        for (Protocol p : spec.protocols) {
          const SimSeries s = simulate_point(spec, p, x);
          for (const auto& [metric, vals] : s.metrics) {
            add_series(rep, x, vanet::to_string(p), metric, vals);
          }
        }
        break;
      case Mode::Compare: break;
    }
  }
  if ((spec.mode == Mode::Simulate) && spec.seeds == 1) {
    rep.warnings.push_back("single seed: no standard error");
  }
  rep.sort_rows();
  return rep;
}

MetricsReport compare(const ExperimentSpec& spec) {
  spec.validate();
  MetricsReport rep;
  rep.sweep_var = std::string(to_string(spec.sweep.var));
  rep.notes = deviation_notes(spec);
  if (spec.seeds == 1) rep.warnings.push_back("single seed: no standard error");

  struct Pair {
    const char* name;
    const char* sim_metric;
  };
  static constexpr Pair kPairs[] = {{"p_c", "collision_probability"},
                                    {"c_d", "wasted_airtime"},
                                    {"t_w", "waiting_time"},
                                    {"sr", "throughput"}};

  for (double x : spec.sweep.values()) {
    model::TopologyParams topo = spec.topo;
    topo.beta = x * 1e-3;
    for (Protocol p : spec.protocols) {
      const std::string_view name = vanet::to_string(p);
      std::optional<model::ProtocolMetrics> theory;
      try {
        theory = model::evaluate(p, topo, spec.timings, spec.det, spec.mix, spec.opts);
      } catch (const SolverError& e) {
        rep.nonconverged = true;
        rep.warnings.push_back(std::string(name) + " at density " + format_number(x) + ": " +
                               e.what());
      }
      const SimSeries s = simulate_point(spec, p, x);
      for (const Pair& pr : kPairs) {
        const std::vector<double>& sim_vals = *s.get(pr.sim_metric);
        const SeedStats st = stats_of(sim_vals);
        const std::string base = pr.name;
        rep.rows.push_back({x, std::string(name), base + "_sim", st.mean, st.se, st.n});
        if (!theory) {
          add(rep, x, name, base + "_flag", 1.0);
          continue;
        }
        double tv = 0.0;
        if (base == "p_c") tv = theory->p_c;
        if (base == "c_d") tv = theory->c_d;
        if (base == "t_w") tv = theory->t_w;
        if (base == "sr") tv = theory->sr;
        if (x == 0.0) tv = 0.0;
        double dev = 0.0;
        if (tv != 0.0) {
          dev = std::abs(st.mean - tv) / std::abs(tv);
        } else if (st.mean != 0.0) {
          dev = 1.0;
        }
        add(rep, x, name, base + "_theory", tv);
        add(rep, x, name, base + "_rel_dev", dev);
        add(rep, x, name, base + "_flag", dev > spec.agreement ? 1.0 : 0.0);
      }
    }
  }
  rep.sort_rows();
  return rep;
}

std::string to_csv(const MetricsReport& report) {
  std::string out(kCsvHeader);
  out += "\n";
  for (const Row& r : report.rows) {
    out += report.sweep_var;
    out += ",";
    out += format_number(r.sweep_value);
    out += ",";
    out += r.protocol;
    out += ",";
    out += r.metric;
    out += ",";
    out += format_number(r.mean);
    out += ",";
    if (r.stderr_) out += format_number(*r.stderr_);
    out += ",";
    out += std::to_string(r.n_seeds);
    out += "\n";
  }
  return out;
}

std::string to_meta(const ExperimentSpec& spec, const MetricsReport& report) {
  ConfigFile c = spec.to_config();
  c.set("meta", "version", std::string(kArtifactVersion));
  c.set("meta", "rows", std::to_string(report.rows.size()));
  for (std::size_t i = 0; i < report.notes.size(); ++i) {
    c.set("meta", "note_" + std::to_string(i + 1), report.notes[i]);
  }
  for (std::size_t i = 0; i < report.warnings.size(); ++i) {
    c.set("meta", "warning_" + std::to_string(i + 1), report.warnings[i]);
  }
  return c.dump();
}

void write_outputs(const ExperimentSpec& spec, const MetricsReport& report,
                   const std::filesystem::path& out) {
  if (report.rows.empty()) throw ConfigError("experiment produced no rows");
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    f << text;
  };
  write(out, to_csv(report));
  std::filesystem::path meta = out;
  meta += ".meta";
  write(meta, to_meta(spec, report));
}

}  // namespace vanet::exp
