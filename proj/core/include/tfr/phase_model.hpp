#pragma once

#include <span>

#include "tfr/data.hpp"

namespace tfr {

/// Country-level double-logistic parameters. delta1..delta4 partition the
/// TFR range covered by the fertility transition (from the start level down
/// to the end level delta4); d is the maximum five-year decrement.
struct Phase2Params {
  double delta1 = 1.0;
  double delta2 = 1.0;
  double delta3 = 1.0;
  double delta4 = 1.0;
  double d = 1.0;

  bool valid() const {
    return delta1 > 0.0 && delta2 > 0.0 && delta3 > 0.0 && delta4 > 0.0 && d > 0.0;
  }
};

/// Piecewise-linear error-scale model: the distortion sd peaks at TFR level S
/// and falls off with slopes a (above S) and b (below S), never dropping
/// under sd_floor; periods starting before 1975 are inflated by c0.
struct VarianceParams {
  double sigma0 = 0.1;
  double S = 3.5;
  double a = 0.01;
  double b = 0.02;
  double c0 = 1.25;
  double sd_floor = 0.01;

  bool valid() const {
    return sigma0 > 0.0 && a >= 0.0 && b >= 0.0 && c0 >= 1.0 && sd_floor > 0.0;
  }
};

/// Post-transition AR(1) parameters: mean reversion toward asymptote mu with
/// autoregressive coefficient rho and innovation sd sigma_eps.
struct Phase3Params {
  double mu = 1.5;
  double rho = 0.8;
  double sigma_eps = 0.1;

  bool valid() const { return mu >= 0.0 && rho >= 0.0 && sigma_eps > 0.0; }
};

/// Annual-mode extension: first-order autocorrelation of the decrement
/// distortions.
struct AnnualParams {
  double phi = 0.0;

  bool valid() const { return phi >= 0.0 && phi < 1.0; }
};

/// Expected decrement at level f: difference of two logistic terms with
/// slopes 2*ln(9)/delta1 and 2*ln(9)/delta3. Tends to 0 for f -> 0+ and
/// f -> inf, and stays inside (-d, d).
double double_logistic_decrement(double f, const Phase2Params& p);

/// Expected next-period TFR under the transition model: f - g(f).
double phase2_step_mean(double f, const Phase2Params& p);

/// Distortion standard deviation at level f in the period starting at
/// `period_start`.
double error_sd(double f, int period_start, const VarianceParams& v);

double normal_logpdf(double x, double mean, double sd);

/// Log-likelihood of consecutive transition-phase observations (>= 2).
double phase2_loglik(std::span<const Observation> segment, const Phase2Params& p,
                     const VarianceParams& v);

/// Expected next-period TFR under mean reversion: mu + rho * (f - mu).
double phase3_step_mean(double f, const Phase3Params& q);

/// Log-likelihood of consecutive post-transition observations (>= 2).
double phase3_loglik(std::span<const Observation> segment, const Phase3Params& q);

/// Expected current decrement given the previous level and decrement:
/// g(f_next) + phi * (prev_decrement - g(prev_f)) with
/// f_next = prev_f - prev_decrement. Decrements are positive for declines.
double annual_decrement_mean(double prev_f, double prev_decrement, const Phase2Params& p,
                             const AnnualParams& a);

/// Log-likelihood of an annual transition segment (>= 3 observations) under
/// the autocorrelated-decrement model, conditioning on the first observed
/// decrement.
double annual_phase2_loglik(std::span<const Observation> segment, const Phase2Params& p,
                            const VarianceParams& v, const AnnualParams& a);

}  // namespace tfr
