#pragma once

// Slot-level broadcast MAC simulator on a one-dimensional road.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vanet/analytical_model.hpp"
#include "vanet/phy_sensing.hpp"
#include "vanet/protocols.hpp"
#include "vanet/rng.hpp"
#include "vanet/types.hpp"

namespace vanet::sim {

struct AbstractSensing {
  model::DetectionProfile before;  // pd / pf before own transmission
  model::DetectionProfile during;  // pd / pf while transmitting
};

struct SignalSensing {
  phy::SensingConfig cfg;
  phy::ThresholdPair thresholds;
};

struct SimConfig {
  std::uint64_t seed = 1;
  double duration = 1.0;  // seconds
  double road_length = 2000.0;
  double beta = 0.1;
  double r_sens = 250.0;
  double r_tx = 200.0;
  model::MacTimings timings;
  model::PriorityMix mix;
  Protocol protocol = Protocol::FdEdca;
  int w = 16;
  int cd_windows = 3;
  bool signal_level = false;
  AbstractSensing abstract_sensing{{0.9, 0.1}, {0.9, 0.1}};
  SignalSensing signal_sensing{};
  bool wraparound = true;
  bool drop_on_first_collision = false;
  bool record_trace = false;
  /// Fixed vehicle positions; skips the Poisson draw when set.
  std::optional<std::vector<double>> positions;
  /// Per-vehicle first generation slot override, for scripted scenarios.
  std::optional<std::vector<std::int64_t>> first_gen_slots;

  void validate() const;
};

/// Slot counts derived from the timings.
struct SlotPlan {
  std::int64_t cam_slots;
  int tx_slots;
  int sense_slots;
  int aifs_slots;
  std::int64_t intervals;
};

SlotPlan slot_plan(const SimConfig& cfg);

/// Poisson(beta * road_length) vehicles placed uniformly, sorted ascending.
std::vector<double> spawn_topology(double beta, double road_length, std::uint64_t seed);

/// Distance between two positions, on the ring when `wrap` is set.
double road_distance(double a, double b, double road_length, bool wrap);

enum class CollisionKind { None, Direct, Hidden };

/// Classifies the interference that `other` causes to a frame sent by `sender`.
/// `sorted_positions` lists every vehicle (candidate receivers).
CollisionKind classify_interference(double sender, double other,
                                    const std::vector<double>& sorted_positions,
                                    double r_sens, double r_tx, double road_length, bool wrap);

/// Sensing draw for one slot. `other_in_range` tells whether another transmitter
/// lies inside the sensing range.
mac::Sensed sense_decision(bool other_in_range, bool during_tx, const SimConfig& cfg,
                           phy::StatisticSampler* sampler, Rng& rng);

struct PriorityCounts {
  std::int64_t generated = 0;
  std::int64_t delivered = 0;
  std::int64_t collided = 0;
  std::int64_t expired = 0;
  std::int64_t attempts = 0;
  std::int64_t collided_attempts = 0;
};

struct TraceEvent {
  std::int64_t slot;
  int vehicle;
  std::string what;
  bool operator==(const TraceEvent&) const = default;
};

struct SimReport {
  int vehicles = 0;
  std::int64_t intervals = 0;
  double n_tx = 0.0;
  double t_slot = 0.0;
  std::array<PriorityCounts, 3> by_priority{};
  std::int64_t attempts = 0;
  std::int64_t collided_attempts = 0;
  std::int64_t direct_attempts = 0;  // attempts with a direct collision
  std::int64_t hidden_attempts = 0;  // attempts with only hidden collisions
  std::int64_t collision_events = 0;
  std::int64_t collided_air_slots = 0;
  std::int64_t waiting_slots = 0;
  std::int64_t waited_frames = 0;
  std::vector<TraceEvent> trace;

  PriorityCounts totals() const;
  double collision_probability() const;
  double mean_collision_duration() const;     // seconds per collision event
  double wasted_airtime_per_attempt() const;  // seconds
  double mean_waiting() const;                // seconds
  double throughput() const;                  // deliveries per CAM interval scaled to n_tx
  double success_rate(Priority p) const;
};

SimReport run(const SimConfig& cfg);

}  // namespace vanet::sim
