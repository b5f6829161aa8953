#pragma once

// Config-driven sweeps over the PHY closed forms, the analytical model and the
// simulator, with CSV output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vanet/analytical_model.hpp"
#include "vanet/config_file.hpp"
#include "vanet/phy_sensing.hpp"
#include "vanet/sim_core.hpp"
#include "vanet/types.hpp"

namespace vanet::exp {

enum class Mode { Phy, Analytic, Simulate, Compare };
enum class SweepVar { Threshold, Eta, Snr, SensingTime, Density, RelativeSpeed };

std::string_view to_string(Mode m);
std::string_view to_string(SweepVar v);
Mode parse_mode(std::string_view s);
SweepVar parse_sweep_var(std::string_view s);

inline constexpr std::string_view kArtifactVersion = "1.0.0";
inline constexpr std::string_view kCsvHeader =
    "sweep_var,sweep_value,protocol,metric,mean,stderr,n_seeds";

struct Sweep {
  SweepVar var = SweepVar::Density;
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  /// start, start + step, ... up to stop (inclusive within 1e-9 * step).
  std::vector<double> values() const;
};

struct PhyParams {
  double tau_us = 100.0;
  double fs_mhz = 12.0;
  double gamma1_db = 10.0;
  double gamma2_db = -10.0;
  double eta = 0.2;
  double sigma_w2 = 1.0;
  double target_pd = 0.9;
  double rate_mbps = 6.0;
  double snr_db = 1.0;
  double v_rel_kmh = 0.0;
  double carrier_ghz = 5.9;
  double fluctuation = 0.0;  // SIC half-range as a fraction of eta
  std::int64_t mc_trials = 0;

  phy::SensingConfig sensing() const;
};

struct SimParams {
  double duration_s = 1.0;
  double road_length_m = 2000.0;
  int cd_windows = 3;
  bool signal_level = false;
  bool wraparound = true;
  bool drop_on_first_collision = false;
};

struct ExperimentSpec {
  std::string name = "experiment";
  Mode mode = Mode::Analytic;
  Sweep sweep;
  std::vector<Protocol> protocols{Protocol::HdEdca, Protocol::FdEdca, Protocol::Pbma};
  int seeds = 1;
  std::uint64_t seed_base = 1;
  double agreement = 0.15;
  PhyParams phy;
  double cam_bytes = 350.0;
  double phy_rate_mbps = 6.0;
  model::MacTimings timings;  // t_pkt follows cam_bytes and phy_rate_mbps
  model::TopologyParams topo;
  model::DetectionProfile det;
  model::DetectionProfile det_dt;
  model::PriorityMix mix;
  model::ModelOptions opts;
  SimParams sim;

  static ExperimentSpec from_config(const ConfigFile& cfg);
  ConfigFile to_config() const;
  void validate() const;

  /// Simulator configuration at one density (veh/m) and seed.
  sim::SimConfig sim_config(Protocol p, double beta, std::uint64_t seed) const;
};

struct Row {
  double sweep_value = 0.0;
  std::string protocol;
  std::string metric;
  double mean = 0.0;
  std::optional<double> stderr_;
  int n_seeds = 0;
};

struct MetricsReport {
  std::string sweep_var;
  std::vector<Row> rows;
  std::vector<std::string> notes;
  std::vector<std::string> warnings;
  bool nonconverged = false;

  /// Sorts rows by (sweep value, protocol, metric).
  void sort_rows();
  const Row* find(double sweep_value, std::string_view protocol, std::string_view metric) const;
};

MetricsReport run_experiment(const ExperimentSpec& spec);
MetricsReport compare(const ExperimentSpec& spec);

std::string to_csv(const MetricsReport& report);
/// Metadata sidecar: the resolved spec in config form plus a [meta] block.
std::string to_meta(const ExperimentSpec& spec, const MetricsReport& report);

/// Writes `out` and `out.meta`. Nothing is written when the report is empty.
void write_outputs(const ExperimentSpec& spec, const MetricsReport& report,
                   const std::filesystem::path& out);

}  // namespace vanet::exp
