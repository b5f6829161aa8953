#include "vanet/analytical_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "vanet/backoff_chain.hpp"

namespace vanet::model {

namespace {

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

double clamp01(double p, bool& flag) {
  if (p < 0.0) {
    flag = true;
    return 0.0;
  }
  if (p > 1.0) {
    flag = true;
    return 1.0;
  }
  return p;
}

}  // namespace

void MacTimings::validate() const {
  if (!(t_slot > 0 && t_aifs > 0 && t_pkt > 0 && t_cam > 0 && t_h > 0)) {
    throw ConfigError("timings: all durations must be > 0");
  }
  if (!(t_pkt < t_cam)) throw ConfigError("timings: t_pkt must be < t_cam");
  if (!(t_slot <= t_aifs)) throw ConfigError("timings: t_slot must be <= t_aifs");
}

double TopologyParams::n_hc() const {
  if (n_hc_override) return *n_hc_override;
  return std::max(0.0, d_rx + r_tx - r_sens) * beta;
}

int TopologyParams::n_contenders() const { return static_cast<int>(std::llround(n_tx())); }

void TopologyParams::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("topology: beta must be >= 0");
  if (!(r_tx > 0.0)) throw ConfigError("topology: r_tx must be > 0");
  if (!(r_sens > r_tx)) throw ConfigError("topology: r_sens must exceed r_tx");
  if (!(d_rx > 0.0 && d_rx <= r_tx)) throw ConfigError("topology: d_rx must lie in (0, r_tx]");
  if (n_hc_override && !(*n_hc_override >= 0.0)) throw ConfigError("topology: n_hc must be >= 0");
}

void DetectionProfile::validate() const {
  if (!in_unit(pd) || !in_unit(pf)) throw ConfigError("detection: pd and pf must lie in [0,1]");
}

void PriorityMix::validate() const {
  if (!in_unit(p_gn) || !in_unit(p_ge) || !in_unit(p_gc)) {
    throw ConfigError("priority mix: probabilities must lie in [0,1]");
  }
  if (std::abs(p_gn + p_ge + p_gc - 1.0) > 1e-9) {
    throw ConfigError("priority mix: probabilities must sum to 1");
  }
}

std::array<double, 6> PriorityMix::case_weights() const {
  return {p_gn * p_gn,       2.0 * p_gc * p_gn, 2.0 * p_ge * p_gn,
          p_gc * p_gc,       p_ge * p_ge,       2.0 * p_gc * p_ge};
}

void BackoffModel::validate() const {
  if (w < 1) throw ConfigError("backoff: window must be >= 1");
  if (!in_unit(p_a) || !in_unit(p_b) || std::abs(p_a + p_b - 1.0) > 1e-12) {
    throw ConfigError("backoff: p_a and p_b must be probabilities summing to 1");
  }
}

BackoffModel channel_access_probs(double p_idle, const DetectionProfile& det, int w) {
  BackoffModel m;
  m.w = w;
  m.p_a = p_idle * (1.0 - det.pf) + (1.0 - p_idle) * (1.0 - det.pd);
  m.p_b = 1.0 - m.p_a;
  return m;
}

double backoff_expected_time(const BackoffModel& model, const MacTimings& timings) {
  return backoff::expected_time<double>(model.w, model.p_a, timings.t_slot);
}

void ModelOptions::validate() const {
  if (w < 1) throw ConfigError("model: window must be >= 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("model: damping must lie in (0,1]");
  if (!(tolerance > 0.0)) throw ConfigError("model: tolerance must be > 0");
  if (max_iterations < 1) throw ConfigError("model: max_iterations must be >= 1");
  if (truncation < 1) throw ConfigError("model: truncation must be >= 1");
}

double SteadyState::ps(int i) const {
  if (i <= 1) return 0.0;
  return 1.0 - std::pow(1.0 - p_r * p_sigma, i - 1);
}

double idle_probability(int n, double t_bo, double air_time, double t_cam, IdleMode mode) {
  const double a = std::max(0.0, (t_cam - t_bo - air_time) / t_cam);
  const double b = t_bo / t_cam;
  double sum = 0.0;
  double binom = 1.0;
  for (int i = 0; i <= n; ++i) {
    if (i > 0) binom *= static_cast<double>(n - i + 1) / static_cast<double>(i);
    const double c = mode == IdleMode::Binomial ? binom : 1.0;
    sum += c * std::pow(a, i) * std::pow(b, n - i);
  }
  return std::clamp(sum, 0.0, 1.0);
}

std::array<double, 6> case_duration_factors(double pd) {
  const double q = 2.0 * pd - pd * pd;
  const double p2 = pd * pd, p3 = p2 * pd, p4 = p3 * pd, p5 = p4 * pd, p6 = p5 * pd;
  const double m = 2.0 * pd - p4 + 4.0 * p3 - 5.0 * p2;
  const double r = -p6 + 6.0 * p5 - 14.0 * p4 + 16.0 * p3 - 9.0 * p2 + 2.0 * pd;
  const double u = 1.0 - pd;
  return {
      q + 2.0 * u * u * q + 3.0 * u * u * u * u * q,
      pd + 2.0 * (p3 - p2 + pd) + 3.0 * (-2.0 * p6 + 9.0 * p5 - 15.0 * p4 + 13.0 * p3 - 7.0 * p2 + 2.0 * pd),
      pd + 2.0 * (p3 - p2 + pd) + 3.0 * (p5 - 5.0 * p4 + 9.0 * p3 - 7.0 * p2 + 2.0 * pd),
      3.0 * q + 4.0 * m + 5.0 * r,
      2.0 * q + 3.0 * m + 4.0 * r,
      2.0 * pd + 3.0 * (-p2 + pd) + 4.0 * (-p4 + 4.0 * p3 - 5.0 * p2 + 2.0 * pd),
  };
}

namespace {

// Mean air time of one direct-collision event, seconds.
double direct_collision_air(Protocol protocol, const DetectionProfile& det,
                            const PriorityMix& mix, const MacTimings& timings) {
  const auto c = case_duration_factors(det.pd);
  switch (protocol) {
    case Protocol::HdEdca: return timings.t_pkt;
    case Protocol::FdEdca: return timings.t_h * c[0];
    case Protocol::Pbma: {
      const auto w = mix.case_weights();
      double s = 0.0;
      for (int k = 0; k < 6; ++k) s += w[k] * c[k];
      return timings.t_h * s;
    }
  }
  return timings.t_pkt;
}

void refresh_derived(SteadyState& s, const DetectionProfile& det, const MacTimings& timings) {
  const BackoffModel m = channel_access_probs(s.p_idle, det, s.w);
  s.p_a = m.p_a;
  s.t_bo = backoff_expected_time(m, timings);
  s.p_sigma = backoff::ready_probability<double>(s.w, m.p_a);
  s.ps_agg = s.ps(s.n);
}

}  // namespace

SteadyState fixed_point_map(const SteadyState& s, const TopologyParams& topo,
                            const MacTimings& timings, const DetectionProfile& det,
                            const PriorityMix& mix, const ModelOptions& opts) {
  SteadyState cur = s;
  cur.n = topo.n_contenders();
  cur.w = opts.w;
  refresh_derived(cur, det, timings);

  SteadyState next = cur;
  next.p_idle = idle_probability(cur.n, cur.t_bo, cur.air_time, timings.t_cam, opts.idle_mode);

  const double ps = cur.ps(cur.n);
  const double w = static_cast<double>(cur.w);
  const double backlog = w * (1.0 - cur.p_idle) / 2.0 *
                         ((1.0 - ps) * timings.t_slot +
                          ps * (timings.t_slot + timings.t_aifs + cur.air_time));
  next.p_r = std::clamp((backlog + cur.air_time) / timings.t_cam, 0.0, 1.0);

  if (opts.protocol_occupancy && cur.protocol != Protocol::HdEdca) {
    const double p_dc = std::clamp(direct_collision_terms(cur, det, mix).p_dc, 0.0, 1.0);
    const double d = direct_collision_air(cur.protocol, det, mix, timings);
    next.air_time = (1.0 - p_dc) * timings.t_pkt + p_dc * d;
  } else {
    next.air_time = timings.t_pkt;
  }
  refresh_derived(next, det, timings);
  return next;
}

SteadyState solve_steady_state(Protocol protocol, const TopologyParams& topo,
                               const MacTimings& timings, const DetectionProfile& det,
                               const PriorityMix& mix, const ModelOptions& opts) {
  topo.validate();
  timings.validate();
  det.validate();
  mix.validate();
  opts.validate();

  SteadyState s;
  s.protocol = protocol;
  s.n = topo.n_contenders();
  s.w = opts.w;
  s.p_idle = 1.0;
  s.p_r = timings.t_pkt / timings.t_cam;
  s.air_time = timings.t_pkt;
  refresh_derived(s, det, timings);

  double d = opts.damping;
  double residual = 0.0;
  double checkpoint = 1.0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const SteadyState nx = fixed_point_map(s, topo, timings, det, mix, opts);
    residual = std::max({std::abs(nx.p_idle - s.p_idle), std::abs(nx.p_r - s.p_r),
                         std::abs(nx.air_time - s.air_time) / timings.t_pkt,
                         std::abs(nx.p_sigma - s.p_sigma), std::abs(nx.ps_agg - s.ps_agg)});
    if (residual < opts.tolerance) {
      s.iterations = it;
      s.residual = residual;
      return s;
    }
    // limit cycles: shrink the step
    if (it % 250 == 0) {
      if (residual > 0.1 * checkpoint && d > 1.0 / 128.0) d *= 0.5;
      checkpoint = residual;
    }
    s.p_idle = (1.0 - d) * s.p_idle + d * nx.p_idle;
    s.p_r = (1.0 - d) * s.p_r + d * nx.p_r;
    s.air_time = (1.0 - d) * s.air_time + d * nx.air_time;
    refresh_derived(s, det, timings);
    s.iterations = it;
    s.residual = residual;
  }
  throw SolverError("steady state did not converge for " + std::string(to_string(protocol)),
                    residual);
}

CollisionBreakdown direct_collision_terms(const SteadyState& state, const DetectionProfile& det,
                                          const PriorityMix& mix) {
  CollisionBreakdown b;
  const double p = state.p_idle;
  const int n = state.n;
  const double nf = 1.0 - det.pf;
  const double md = 1.0 - det.pd;
  for (int i = 1; i <= n; ++i) {
    const double ps = state.ps(i);
    const double busy = (1.0 - p) * std::pow(md, i) * ps;
    const double clear = p * std::pow(nf, i) * ps;
    if (state.protocol == Protocol::Pbma) {
      const double hi = mix.p_gc + mix.p_ge;
      b.p_dc1 += busy;
      if (i >= 2) b.p_dc2 += p * std::pow(hi * nf, i) * ps;
      b.p_dc3 += p * i * hi * std::pow(mix.p_gn, i - 1) * std::pow(nf, i) * ps;
      b.p_dc4 += p * std::pow(mix.p_gn * nf, i) * ps;
    } else {
      if (i >= 2) b.p_dc1 += clear;
      b.p_dc2 += busy;
    }
  }
  b.p_dc = b.p_dc1 + b.p_dc2 + b.p_dc3 + b.p_dc4;
  return b;
}

double hidden_collision(double p_dc_correction, const TopologyParams& topo,
                        const MacTimings& timings) {
  const double nh = std::max(0.0, topo.n_hc() - 1.0);
  return 2.0 * nh / timings.t_cam * (timings.t_aifs + timings.t_pkt) *
         (1.0 - p_dc_correction / 2.0);
}

CollisionBreakdown collision_probability(const SteadyState& state, const TopologyParams& topo,
                                         const MacTimings& timings, const DetectionProfile& det,
                                         const PriorityMix& mix, const ModelOptions& opts) {
  CollisionBreakdown b = direct_collision_terms(state, det, mix);
  bool flag = false;
  b.p_dc = clamp01(b.p_dc, flag);

  double correction = b.p_dc;
  if (state.protocol == Protocol::FdEdca && opts.fd_hidden_uses_hd_direct) {
    const SteadyState hd = solve_steady_state(Protocol::HdEdca, topo, timings, det, mix, opts);
    bool unused = false;
    correction = clamp01(direct_collision_terms(hd, det, mix).p_dc, unused);
  }
  b.p_hc = clamp01(hidden_collision(correction, topo, timings), flag);
  b.p_c = clamp01(b.p_dc + b.p_hc - b.p_dc * b.p_hc, flag);
  b.clamped = flag;
  return b;
}

DurationBreakdown collision_duration(Protocol protocol, const CollisionBreakdown& pc,
                                     const DetectionProfile& det, const PriorityMix& mix,
                                     const MacTimings& timings) {
  DurationBreakdown d;
  const auto c = case_duration_factors(det.pd);
  switch (protocol) {
    case Protocol::HdEdca:
      d.cases[0] = pc.p_dc * timings.t_pkt;
      d.total = pc.p_c * timings.t_pkt;
      d.hidden = d.total - d.cases[0];
      return d;
    case Protocol::FdEdca:
      d.cases[0] = pc.p_dc * timings.t_h * c[0];
      break;
    case Protocol::Pbma: {
      const auto w = mix.case_weights();
      for (int k = 0; k < 6; ++k) d.cases[k] = w[k] * pc.p_dc * timings.t_h * c[k];
      break;
    }
  }
  d.hidden = pc.p_hc * timings.t_pkt;
  double total = d.hidden;
  for (double v : d.cases) total += v;
  d.total = std::min(total, timings.t_pkt);
  return d;
}

namespace {

// Sums term(k) for k = 1, 2, ... until `limit` terms or a term below floor.
SeriesResult sum_series(const std::function<double(int)>& term, int limit, double floor) {
  SeriesResult r;
  double last = 0.0;
  int k = 1;
  for (; k <= limit; ++k) {
    const double t = term(k);
    if (std::abs(t) < floor) break;
    r.sum += t;
    r.terms = k;
    last = t;
  }
  r.first_omitted = std::abs(term(k));
  r.ratio = last != 0.0 ? r.first_omitted / std::abs(last) : 0.0;
  return r;
}

WaitingBreakdown fd_waiting(const SteadyState& s, const DetectionProfile& det,
                            const MacTimings& tm, int truncation) {
  WaitingBreakdown w;
  const double p = s.p_idle;
  const double pd = det.pd;
  const double x = (1.0 - p) * pd;
  const double th = tm.t_h;
  const double tb = s.t_bo;
  const double floor = 1e-12 * tm.t_cam;

  const double tw1 = p * (1.0 - det.pf) * th;
  const SeriesResult tw2 =
      sum_series([&](int k) { return std::pow(x, k) * k * (th + tb); }, truncation, floor);
  const SeriesResult tw3 = sum_series(
      [&](int k) { return p * det.pf * std::pow(x, k - 1) * k * (th + tb); }, truncation, floor);
  const SeriesResult tw4 = sum_series(
      [&](int k) {
        return std::pow(1.0 - p, k + 1) * det.pm() * std::pow(pd, k) * ((k + 1) * th + k * tb);
      },
      truncation, floor);

  w.terms = {{"T_w1", tw1}, {"T_w2", tw2.sum}, {"T_w3", tw3.sum}, {"T_w4", tw4.sum}};
  w.series = {tw2, tw3, tw4};
  w.total = tw1 + tw2.sum + tw3.sum + tw4.sum;
  return w;
}

}  // namespace

double pbma_priority_wait(Priority prio, const SteadyState& s, const DetectionProfile& det,
                          const MacTimings& tm, int truncation,
                          std::vector<SeriesResult>* series) {
  if (prio == Priority::Normal) return fd_waiting(s, det, tm, truncation).total;
  const double p = s.p_idle;
  const double pd = det.pd;
  const double th = tm.t_h;
  const double tb = s.t_bo;
  // Mc series runs one sensing window behind Me.
  const int shift = prio == Priority::Critical ? 3 : 2;
  const double head = (1.0 - p) * pd * tm.t_pkt / 2.0 + p * pd * th + p * det.pf * tm.t_pkt / 2.0;
  const SeriesResult tail = sum_series(
      [&](int k) {
        return std::pow(1.0 - p, k + shift) * det.pm() * std::pow(pd, k + shift - 1) *
               ((k + shift) * th + k * tb);
      },
      truncation, 1e-12 * tm.t_cam);
  if (series) series->push_back(tail);
  return head + tail.sum;
}

WaitingBreakdown waiting_time(const SteadyState& s, const DetectionProfile& det,
                              const PriorityMix& mix, const MacTimings& tm, int truncation) {
  if (truncation < 1) throw std::domain_error("waiting_time: truncation must be >= 1");
  switch (s.protocol) {
    case Protocol::HdEdca: {
      WaitingBreakdown w;
      const double idle = s.p_idle * tm.t_h;
      const double busy = (1.0 - s.p_idle) * (tm.t_h + s.t_bo);
      w.terms = {{"idle", idle}, {"busy", busy}};
      w.total = idle + busy;
      return w;
    }
    case Protocol::FdEdca: return fd_waiting(s, det, tm, truncation);
    case Protocol::Pbma: {
      WaitingBreakdown fd = fd_waiting(s, det, tm, truncation);
      WaitingBreakdown w;
      w.series = fd.series;
      const double wc = pbma_priority_wait(Priority::Critical, s, det, tm, truncation, &w.series);
      const double we = pbma_priority_wait(Priority::Emergency, s, det, tm, truncation, &w.series);
      w.terms = {{"T_w1", mix.p_gn * fd.total}, {"T_w2", mix.p_gc * wc}, {"T_w3", mix.p_ge * we}};
      w.total = mix.p_gn * fd.total + mix.p_gc * wc + mix.p_ge * we;
      return w;
    }
  }
  return {};
}

double throughput(double n_tx, double t_w, double p_c, const MacTimings& timings) {
  if (t_w > timings.t_cam) throw std::domain_error("throughput: waiting time exceeds t_cam");
  return n_tx * ((timings.t_cam - t_w) / timings.t_cam) * (1.0 - p_c);
}

CriticalMetrics critical_message_metrics(const SteadyState& s, const TopologyParams& topo,
                                         const MacTimings& tm, const DetectionProfile& det,
                                         const PriorityMix& mix, const ModelOptions& opts) {
  CriticalMetrics m;
  m.present = mix.p_gc > 0.0;
  const CollisionBreakdown pc = collision_probability(s, topo, tm, det, mix, opts);
  const double p = s.p_idle;
  const double own = (1.0 - p) * (1.0 - det.pd) + p * det.pd * s.ps(s.n);
  bool flag = false;
  m.p_c_conditional = clamp01(own + pc.p_hc, flag);
  m.p_c_weighted = clamp01(mix.p_gc * own + pc.p_hc, flag);

  const auto w = mix.case_weights();
  const auto c = case_duration_factors(det.pd);
  const double wsum = w[1] + w[3] + w[5];
  double direct = 0.0;
  if (wsum > 0.0) {
    direct = pc.p_dc * tm.t_h * (w[1] * c[1] + w[3] * c[3] + w[5] * c[5]) / wsum;
  }
  m.c_d = std::min(direct + pc.p_hc * tm.t_pkt, tm.t_pkt);

  m.t_w_conditional = pbma_priority_wait(Priority::Critical, s, det, tm, opts.truncation);
  m.t_w_weighted = mix.p_gc * m.t_w_conditional;
  return m;
}

ProtocolMetrics evaluate(Protocol protocol, const TopologyParams& topo, const MacTimings& timings,
                         const DetectionProfile& det, const PriorityMix& mix,
                         const ModelOptions& opts) {
  ProtocolMetrics m;
  m.protocol = protocol;
  m.state = solve_steady_state(protocol, topo, timings, det, mix, opts);
  m.collision = collision_probability(m.state, topo, timings, det, mix, opts);
  m.duration = collision_duration(protocol, m.collision, det, mix, timings);
  m.waiting = waiting_time(m.state, det, mix, timings, opts.truncation);
  m.p_dc = m.collision.p_dc;
  m.p_hc = m.collision.p_hc;
  m.p_c = m.collision.p_c;
  m.c_d = m.duration.total;
  m.t_w = m.waiting.total;
  m.sr = throughput(topo.n_tx(), m.t_w, m.p_c, timings);
  if (protocol == Protocol::Pbma) {
    m.critical = critical_message_metrics(m.state, topo, timings, det, mix, opts);
  }
  return m;
}

}  // namespace vanet::model
