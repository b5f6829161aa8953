#pragma once

// Full-duplex energy detection: thresholds, detection / false-alarm rates and
// a sample-level Monte Carlo sampler that checks every closed form.

#include <cstdint>

#include "vanet/rng.hpp"

namespace vanet::phy {

/// Gaussian upper-tail probability Q(x).
double q_func(double x);

/// Inverse of q_func. Throws std::domain_error unless 0 < p < 1.
double q_inv(double p);

inline constexpr double kSpeedOfLight = 2.998e8;  // m/s
inline constexpr double kDsrcCarrier = 5.9e9;     // Hz

double db_to_linear(double db);
double linear_to_db(double lin);

struct SensingConfig {
  double tau = 1e-4;               // sensing time, s
  double fs = 12e6;                // sampling frequency, Hz
  std::int64_t n_samples = 1200;   // round(tau * fs)
  double sigma_w2 = 1.0;           // noise power
  double gamma1 = 10.0;            // self-interference SNR (linear)
  double gamma2 = 0.1;             // other-vehicle SNR (linear)
  double eta = 0.0;                // residual SI fraction after cancellation

  /// Builds a config from a sensing window; n_samples = round(tau * fs).
  static SensingConfig from_window(double tau, double fs, double gamma1, double gamma2,
                                   double eta, double sigma_w2 = 1.0);
  /// Builds a config from a sample count at the default sampling rate.
  static SensingConfig with_samples(std::int64_t n, double gamma1, double gamma2, double eta,
                                    double sigma_w2 = 1.0);

  void validate() const;

  /// Residual self-interference power relative to noise, eta^2 * gamma1.
  double residual_si() const { return eta * eta * gamma1; }
  SensingConfig with_eta(double e) const {
    SensingConfig c = *this;
    c.eta = e;
    return c;
  }
  SensingConfig with_gamma2(double g) const {
    SensingConfig c = *this;
    c.gamma2 = g;
    return c;
  }
};

/// H0 noise only, H1 another vehicle, H2 own residual SI, H3 SI plus another vehicle.
enum class Hypothesis { NoiseOnly, Other, SelfOnly, SelfPlusOther };

/// Mean and variance of the energy statistic (Gaussian limit) under a hypothesis.
struct HypothesisStats {
  double mean;
  double variance;
};

/// Per-sample variance of |r[n]|^2 in units of sigma_w^4. The closed forms and
/// the sampler both read this.
double per_sample_variance(const SensingConfig& cfg, Hypothesis h);
HypothesisStats hypothesis_stats(const SensingConfig& cfg, Hypothesis h);

/// P(E > threshold) under the Gaussian limit of `stats`.
double exceed_probability(const HypothesisStats& stats, double threshold);

struct BeforeRates {
  double pf_bt;
  double pd_bt;
};

struct DuringRates {
  double pf_dt;
  double pd_dt;
};

struct ThresholdPair {
  double eps0;  // before own transmission
  double eps1;  // during own transmission
};

BeforeRates rates_before(double eps0, const SensingConfig& cfg);
DuringRates rates_during(double eps1, const SensingConfig& cfg);

/// Thresholds that hit the requested detection probabilities exactly.
ThresholdPair thresholds_for_target(double target_pd_bt, double target_pd_dt,
                                    const SensingConfig& cfg);

/// Maps eps0 to eps1 for identical detection targets (noise-normalized form,
/// rescaled by sigma_w^2 on output).
double threshold_link(double eps0, const SensingConfig& cfg);

/// Average false-alarm probability during transmission when the SIC factor
/// sits at eta0 - m or eta0 + m with equal probability.
double pf_during_fluctuating(double eps1, const SensingConfig& cfg, double eta0, double m);

/// Detection counterpart of pf_during_fluctuating.
double pd_during_fluctuating(double eps1, const SensingConfig& cfg, double eta0, double m);

struct DopplerPlan {
  double rate;     // bit/s
  double snr_db;
  double v_rel;    // m/s
  double f0;       // Hz
  double c;        // m/s
  double b;        // Shannon bandwidth, Hz
  double delta_f;  // Doppler shift, Hz
  double b_wide;   // widened sensing bandwidth, Hz
};

DopplerPlan sensing_window_plan(double rate, double snr_db, double v_rel,
                                double f0 = kDsrcCarrier);

/// SNR left inside a fixed window of width b when the spectrum is shifted by
/// delta_f (flat spectrum assumption).
double effective_snr_fixed_window(double gamma2, double delta_f, double b);

/// Draws n_samples of the received signal and returns (1/N) sum |r[n]|^2.
///
/// Noise is circular complex Gaussian. The other-vehicle and SI signals are
/// constant-envelope with independent uniform phase per sample (PSK-like);
/// this reproduces the per-sample variances used by the closed forms.
double sample_statistic(const SensingConfig& cfg, Hypothesis h, std::uint64_t seed);

/// Fast draws from the same law as sample_statistic.
///
/// Conditional on the signal envelope, N * E / sigma_w^2 is a Poisson mixture of
/// Gamma(N + K, 1) variates (non-central chi-square with 2N degrees of
/// freedom). For H3 the sum of the N relative-phase cosines is drawn from its
/// Gaussian limit N(0, N/2).
class StatisticSampler {
 public:
  explicit StatisticSampler(const SensingConfig& cfg);

  double draw(Hypothesis h, Rng& rng);
  const SensingConfig& config() const { return cfg_; }

 private:
  double draw_noncentral(double noncentrality, Rng& rng);

  SensingConfig cfg_;
  double n_;
};

struct EmpiricalRates {
  double pf_bt;
  double pd_bt;
  double pf_dt;
  double pd_dt;
  std::int64_t trials;
};

/// Fraction of sampled statistics that exceed the applicable threshold.
EmpiricalRates empirical_rates(const SensingConfig& cfg, const ThresholdPair& thresholds,
                               std::int64_t trials, std::uint64_t seed);

}  // namespace vanet::phy
