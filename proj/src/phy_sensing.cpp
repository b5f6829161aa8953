#include "vanet/phy_sensing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "vanet/types.hpp"

namespace vanet::phy {

double q_func(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

namespace {

// Acklam's rational approximation of the lower-tail normal quantile.
double acklam_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - lo) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double q_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("q_inv: probability must lie in (0,1), got " + std::to_string(p));
  }
  if (p > 0.5) return -q_inv(1.0 - p);
  if (p == 0.5) return 0.0;
  // Q(x) = p  <=>  Phi(-x) = p
  double x = -acklam_lower(p);
  for (int it = 0; it < 3; ++it) {
    const double e = q_func(x) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double u = -e / pdf;  // f/f' with f' = -pdf, f'' = x * pdf
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

SensingConfig SensingConfig::from_window(double tau, double fs, double gamma1, double gamma2,
                                         double eta, double sigma_w2) {
  SensingConfig c;
  c.tau = tau;
  c.fs = fs;
  c.n_samples = static_cast<std::int64_t>(std::llround(tau * fs));
  c.gamma1 = gamma1;
  c.gamma2 = gamma2;
  c.eta = eta;
  c.sigma_w2 = sigma_w2;
  c.validate();
  return c;
}

SensingConfig SensingConfig::with_samples(std::int64_t n, double gamma1, double gamma2,
                                          double eta, double sigma_w2) {
  SensingConfig c;
  c.n_samples = n;
  c.tau = static_cast<double>(n) / c.fs;
  c.gamma1 = gamma1;
  c.gamma2 = gamma2;
  c.eta = eta;
  c.sigma_w2 = sigma_w2;
  c.validate();
  return c;
}

void SensingConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("sensing: tau must be > 0");
  if (!(fs > 0.0)) throw ConfigError("sensing: fs must be > 0");
  if (n_samples < 1) throw ConfigError("sensing: n_samples must be >= 1");
  if (!(sigma_w2 > 0.0)) throw ConfigError("sensing: sigma_w2 must be > 0");
  if (!(gamma1 >= 0.0)) throw ConfigError("sensing: gamma1 must be >= 0");
  if (!(gamma2 >= 0.0)) throw ConfigError("sensing: gamma2 must be >= 0");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("sensing: eta must lie in [0,1]");
}

namespace {

double mean_factor(const SensingConfig& cfg, Hypothesis h) {
  switch (h) {
    case Hypothesis::NoiseOnly: return 1.0;
    case Hypothesis::Other: return 1.0 + cfg.gamma2;
    case Hypothesis::SelfOnly: return 1.0 + cfg.residual_si();
    case Hypothesis::SelfPlusOther: return 1.0 + cfg.gamma2 + cfg.residual_si();
  }
  return 1.0;
}

double variance_factor(double gamma2, double si, Hypothesis h) {
  switch (h) {
    case Hypothesis::NoiseOnly: return 1.0;
    case Hypothesis::Other: return 2.0 * gamma2 + 1.0;
    case Hypothesis::SelfOnly: return 2.0 * si + 1.0;
    case Hypothesis::SelfPlusOther: return 2.0 * si + 2.0 * si * gamma2 + 2.0 * gamma2 + 1.0;
  }
  return 1.0;
}

// Q((x - mean) * sqrt(N / V)) in noise-normalized units.
double tail(double x_norm, double mean, double v, double n) {
  return q_func((x_norm - mean) * std::sqrt(n / v));
}

double n_of(const SensingConfig& cfg) { return static_cast<double>(cfg.n_samples); }

void check_target(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("detection target must lie in (0,1), got " + std::to_string(p));
  }
}

}  // namespace

double per_sample_variance(const SensingConfig& cfg, Hypothesis h) {
  return variance_factor(cfg.gamma2, cfg.residual_si(), h);
}

HypothesisStats hypothesis_stats(const SensingConfig& cfg, Hypothesis h) {
  const double s2 = cfg.sigma_w2;
  return {mean_factor(cfg, h) * s2, per_sample_variance(cfg, h) * s2 * s2 / n_of(cfg)};
}

double exceed_probability(const HypothesisStats& stats, double threshold) {
  return q_func((threshold - stats.mean) / std::sqrt(stats.variance));
}

BeforeRates rates_before(double eps0, const SensingConfig& cfg) {
  const double x = eps0 / cfg.sigma_w2;
  const double n = n_of(cfg);
  return {tail(x, 1.0, 1.0, n),
          tail(x, 1.0 + cfg.gamma2, variance_factor(cfg.gamma2, 0.0, Hypothesis::Other), n)};
}

DuringRates rates_during(double eps1, const SensingConfig& cfg) {
  const double x = eps1 / cfg.sigma_w2;
  const double n = n_of(cfg);
  const double si = cfg.residual_si();
  return {tail(x, 1.0 + si, variance_factor(cfg.gamma2, si, Hypothesis::SelfOnly), n),
          tail(x, 1.0 + cfg.gamma2 + si,
               variance_factor(cfg.gamma2, si, Hypothesis::SelfPlusOther), n)};
}

ThresholdPair thresholds_for_target(double target_pd_bt, double target_pd_dt,
                                    const SensingConfig& cfg) {
  check_target(target_pd_bt);
  check_target(target_pd_dt);
  const double n = n_of(cfg);
  const double si = cfg.residual_si();
  const double v1 = per_sample_variance(cfg, Hypothesis::Other);
  const double v3 = per_sample_variance(cfg, Hypothesis::SelfPlusOther);
  const double e0 = q_inv(target_pd_bt) / std::sqrt(n / v1) + cfg.gamma2 + 1.0;
  const double e1 = q_inv(target_pd_dt) / std::sqrt(n / v3) + cfg.gamma2 + si + 1.0;
  return {e0 * cfg.sigma_w2, e1 * cfg.sigma_w2};
}

double threshold_link(double eps0, const SensingConfig& cfg) {
  const double x0 = eps0 / cfg.sigma_w2;
  const double si = cfg.residual_si();
  const double v1 = per_sample_variance(cfg, Hypothesis::Other);
  const double v3 = per_sample_variance(cfg, Hypothesis::SelfPlusOther);
  const double x1 = (x0 - cfg.gamma2 - 1.0) * std::sqrt(v3 / v1) + cfg.gamma2 + si + 1.0;
  return x1 * cfg.sigma_w2;
}

namespace {

void check_fluctuation(double eta0, double m) {
  if (!(m >= 0.0) || eta0 - m < 0.0 || eta0 + m > 1.0) {
    throw std::domain_error("SIC fluctuation range must stay inside [0,1]");
  }
}

}  // namespace

double pf_during_fluctuating(double eps1, const SensingConfig& cfg, double eta0, double m) {
  check_fluctuation(eta0, m);
  return 0.5 * rates_during(eps1, cfg.with_eta(eta0 + m)).pf_dt +
         0.5 * rates_during(eps1, cfg.with_eta(eta0 - m)).pf_dt;
}

double pd_during_fluctuating(double eps1, const SensingConfig& cfg, double eta0, double m) {
  check_fluctuation(eta0, m);
  return 0.5 * rates_during(eps1, cfg.with_eta(eta0 + m)).pd_dt +
         0.5 * rates_during(eps1, cfg.with_eta(eta0 - m)).pd_dt;
}

DopplerPlan sensing_window_plan(double rate, double snr_db, double v_rel, double f0) {
  if (!(rate > 0.0)) throw std::domain_error("sensing_window_plan: rate must be > 0");
  if (!(f0 > 0.0)) throw std::domain_error("sensing_window_plan: f0 must be > 0");
  if (!(v_rel >= 0.0)) throw std::domain_error("sensing_window_plan: v_rel must be >= 0");
  DopplerPlan p{};
  p.rate = rate;
  p.snr_db = snr_db;
  p.v_rel = v_rel;
  p.f0 = f0;
  p.c = kSpeedOfLight;
  p.b = rate / std::log2(1.0 + db_to_linear(snr_db));
  p.delta_f = v_rel / p.c * f0;
  p.b_wide = p.b + 2.0 * p.delta_f;
  return p;
}

double effective_snr_fixed_window(double gamma2, double delta_f, double b) {
  if (!(b > 0.0)) throw std::domain_error("effective_snr_fixed_window: b must be > 0");
  if (!(delta_f >= 0.0)) throw std::domain_error("effective_snr_fixed_window: delta_f < 0");
  return gamma2 * std::max(0.0, 1.0 - delta_f / b);
}

double sample_statistic(const SensingConfig& cfg, Hypothesis h, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.sigma_w2 / 2.0));
  const bool other = h == Hypothesis::Other || h == Hypothesis::SelfPlusOther;
  const bool self = h == Hypothesis::SelfOnly || h == Hypothesis::SelfPlusOther;
  const double amp_s = other ? std::sqrt(cfg.gamma2 * cfg.sigma_w2) : 0.0;
  const double amp_i = self ? std::sqrt(cfg.residual_si() * cfg.sigma_w2) : 0.0;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  double acc = 0.0;
  for (std::int64_t k = 0; k < cfg.n_samples; ++k) {
    std::complex<double> r(noise(rng), noise(rng));
    if (other) r += std::polar(amp_s, two_pi * uniform01(rng));
    if (self) r += std::polar(amp_i, two_pi * uniform01(rng));
    acc += std::norm(r);
  }
  return acc / static_cast<double>(cfg.n_samples);
}

StatisticSampler::StatisticSampler(const SensingConfig& cfg)
    : cfg_(cfg), n_(static_cast<double>(cfg.n_samples)) {
  cfg_.validate();
}

double StatisticSampler::draw_noncentral(double noncentrality, Rng& rng) {
  double k = 0.0;
  if (noncentrality > 0.0) {
    std::poisson_distribution<long long> pois(noncentrality);
    k = static_cast<double>(pois(rng));
  }
  std::gamma_distribution<double> g(n_ + k, 1.0);
  return cfg_.sigma_w2 * g(rng) / n_;
}

double StatisticSampler::draw(Hypothesis h, Rng& rng) {
  const double a = cfg_.gamma2;
  const double b = cfg_.residual_si();
  switch (h) {
    case Hypothesis::NoiseOnly: return draw_noncentral(0.0, rng);
    case Hypothesis::Other: return draw_noncentral(n_ * a, rng);
    case Hypothesis::SelfOnly: return draw_noncentral(n_ * b, rng);
    case Hypothesis::SelfPlusOther: {
      std::normal_distribution<double> cos_sum(0.0, std::sqrt(n_ / 2.0));
      const double lambda = n_ * (a + b) + 2.0 * std::sqrt(a * b) * cos_sum(rng);
      return draw_noncentral(std::max(0.0, lambda), rng);
    }
  }
  return 0.0;
}

EmpiricalRates empirical_rates(const SensingConfig& cfg, const ThresholdPair& thresholds,
                               std::int64_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::domain_error("empirical_rates: trials must be >= 1");
  StatisticSampler sampler(cfg);
  Rng r0 = make_rng(seed, 0);
  Rng r1 = make_rng(seed, 1);
  Rng r2 = make_rng(seed, 2);
  Rng r3 = make_rng(seed, 3);
  std::int64_t c0 = 0, c1 = 0, c2 = 0, c3 = 0;
  for (std::int64_t t = 0; t < trials; ++t) {
    c0 += sampler.draw(Hypothesis::NoiseOnly, r0) > thresholds.eps0;
    c1 += sampler.draw(Hypothesis::Other, r1) > thresholds.eps0;
    c2 += sampler.draw(Hypothesis::SelfOnly, r2) > thresholds.eps1;
    c3 += sampler.draw(Hypothesis::SelfPlusOther, r3) > thresholds.eps1;
  }
  const double n = static_cast<double>(trials);
  return {c0 / n, c1 / n, c2 / n, c3 / n, trials};
}

}  // namespace vanet::phy
