#pragma once

// Closed-form MAC analysis for HD EDCA, FD EDCA and PBMA: coupled steady
// state, collision probability and duration, waiting time, throughput and the
// critical-message view.

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vanet/types.hpp"

namespace vanet::model {

struct MacTimings {
  double t_slot = 13e-6;
  double t_aifs = 58e-6;
  double t_pkt = 350.0 * 8.0 / 6e6;
  double t_cam = 0.1;
  double t_h = 13e-6;

  void validate() const;
};

struct TopologyParams {
  double beta = 0.1;    // vehicles per metre
  double r_sens = 250.0;
  double r_tx = 200.0;
  double d_rx = 200.0;  // reference receiver distance
  std::optional<double> n_hc_override;

  /// Direct contenders inside the sensing range, 2 * r_sens * beta.
  double n_tx() const { return 2.0 * r_sens * beta; }
  /// Hidden contenders, max(0, d_rx + r_tx - r_sens) * beta unless overridden.
  double n_hc() const;
  /// Integer contender count used by the per-i sums.
  int n_contenders() const;

  void validate() const;
};

struct DetectionProfile {
  double pd = 0.9;
  double pf = 0.1;

  double pm() const { return 1.0 - pd; }
  void validate() const;
};

struct PriorityMix {
  double p_gn = 0.90;
  double p_ge = 0.07;
  double p_gc = 0.03;

  void validate() const;
  /// Pairwise collision case weights P1..P6:
  /// Mn-Mn, Mc-Mn, Me-Mn, Mc-Mc, Me-Me, Mc-Me.
  std::array<double, 6> case_weights() const;
};

struct BackoffModel {
  int w = 16;
  double p_a = 1.0;
  double p_b = 0.0;

  void validate() const;
};

/// Per-slot idle / busy sensing probabilities given the channel idle probability.
BackoffModel channel_access_probs(double p_idle, const DetectionProfile& det, int w);

/// Mean backoff time from the fundamental matrix of the counter chain.
double backoff_expected_time(const BackoffModel& model, const MacTimings& timings);

enum class IdleMode { Binomial, PaperLiteral };

struct ModelOptions {
  int w = 16;
  IdleMode idle_mode = IdleMode::Binomial;
  /// Channel occupancy per attempt follows the protocol (aborted FD attempts
  /// free the channel early). When false every attempt holds it for t_pkt.
  bool protocol_occupancy = true;
  /// FD hidden-collision correction uses the HD direct-collision probability.
  bool fd_hidden_uses_hd_direct = false;
  double damping = 0.5;  // initial step; halved when progress stalls
  double tolerance = 1e-10;
  int max_iterations = 10000;
  int truncation = 20;

  void validate() const;
};

struct SteadyState {
  Protocol protocol = Protocol::HdEdca;
  int n = 0;              // integer contender count
  int w = 16;
  double p_idle = 1.0;
  double p_r = 0.0;
  double p_sigma = 0.0;
  double p_a = 1.0;
  double t_bo = 0.0;
  double air_time = 0.0;  // mean channel occupancy per attempt
  double ps_agg = 0.0;    // ps(n)
  int iterations = 0;
  double residual = 0.0;

  /// Simultaneous-start probability with i contenders, 1 - (1 - p_r p_sigma)^(i-1).
  double ps(int i) const;
};

/// P_idle from the contender count and the per-vehicle time split.
double idle_probability(int n, double t_bo, double air_time, double t_cam, IdleMode mode);

/// Mean direct-collision duration of each pairwise case in units of t_h
/// (cases 1..6, same order as PriorityMix::case_weights).
std::array<double, 6> case_duration_factors(double pd);

/// One undamped application of the coupled map to a state.
SteadyState fixed_point_map(const SteadyState& s, const TopologyParams& topo,
                            const MacTimings& timings, const DetectionProfile& det,
                            const PriorityMix& mix, const ModelOptions& opts);

/// Damped fixed-point solve. Throws SolverError on non-convergence.
SteadyState solve_steady_state(Protocol protocol, const TopologyParams& topo,
                               const MacTimings& timings, const DetectionProfile& det,
                               const PriorityMix& mix, const ModelOptions& opts = {});

struct CollisionBreakdown {
  // HD / FD: dc1 idle-channel simultaneous start, dc2 mis-detection.
  // PBMA: dc1 mis-detection, dc2 >= 2 Mc/Me, dc3 exactly one Mc/Me, dc4 only Mn.
  double p_dc1 = 0.0;
  double p_dc2 = 0.0;
  double p_dc3 = 0.0;
  double p_dc4 = 0.0;
  double p_dc = 0.0;
  double p_hc = 0.0;
  double p_c = 0.0;
  bool clamped = false;
};

/// Direct-collision terms of one protocol, before clamping.
CollisionBreakdown direct_collision_terms(const SteadyState& state, const DetectionProfile& det,
                                          const PriorityMix& mix);

/// Hidden-collision probability given the direct-collision probability that
/// enters its correction factor.
double hidden_collision(double p_dc_correction, const TopologyParams& topo,
                        const MacTimings& timings);

CollisionBreakdown collision_probability(const SteadyState& state, const TopologyParams& topo,
                                         const MacTimings& timings, const DetectionProfile& det,
                                         const PriorityMix& mix, const ModelOptions& opts = {});

struct DurationBreakdown {
  std::array<double, 6> cases{};  // direct-collision case durations, seconds
  double hidden = 0.0;
  double total = 0.0;
};

DurationBreakdown collision_duration(Protocol protocol, const CollisionBreakdown& pc,
                                     const DetectionProfile& det, const PriorityMix& mix,
                                     const MacTimings& timings);

struct SeriesResult {
  double sum = 0.0;
  int terms = 0;
  double first_omitted = 0.0;  // magnitude of the first dropped term
  double ratio = 0.0;          // bound on successive-term ratio past the cut
};

struct WaitingBreakdown {
  // FD: T_w1..T_w4. PBMA: Mn share, Mc share, Me share. HD: idle, busy.
  std::vector<std::pair<std::string, double>> terms;
  std::vector<SeriesResult> series;
  double total = 0.0;
};

/// Conditional waiting time of one Mc (or Me) frame under PBMA.
double pbma_priority_wait(Priority p, const SteadyState& state, const DetectionProfile& det,
                          const MacTimings& timings, int truncation,
                          std::vector<SeriesResult>* series = nullptr);

WaitingBreakdown waiting_time(const SteadyState& state, const DetectionProfile& det,
                              const PriorityMix& mix, const MacTimings& timings,
                              int truncation = 20);

/// Successful broadcasts per CAM interval. Throws std::domain_error when t_w > t_cam.
double throughput(double n_tx, double t_w, double p_c, const MacTimings& timings);

struct CriticalMetrics {
  bool present = false;          // p_gc > 0
  double p_c_conditional = 0.0;  // per Mc frame
  double p_c_weighted = 0.0;     // weighted by p_gc
  double c_d = 0.0;
  double t_w_conditional = 0.0;
  double t_w_weighted = 0.0;
};

CriticalMetrics critical_message_metrics(const SteadyState& state, const TopologyParams& topo,
                                         const MacTimings& timings, const DetectionProfile& det,
                                         const PriorityMix& mix, const ModelOptions& opts = {});

struct ProtocolMetrics {
  Protocol protocol = Protocol::HdEdca;
  SteadyState state;
  CollisionBreakdown collision;
  DurationBreakdown duration;
  WaitingBreakdown waiting;
  double p_dc = 0.0;
  double p_hc = 0.0;
  double p_c = 0.0;
  double c_d = 0.0;
  double t_w = 0.0;
  double sr = 0.0;
  std::optional<CriticalMetrics> critical;  // PBMA only
};

/// Full evaluation of one protocol at one operating point.
ProtocolMetrics evaluate(Protocol protocol, const TopologyParams& topo, const MacTimings& timings,
                         const DetectionProfile& det, const PriorityMix& mix,
                         const ModelOptions& opts = {});

}  // namespace vanet::model
