#include "tfr/phase_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tfr {

namespace {
const double kTwoLn9 = 2.0 * std::log(9.0);
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}  // namespace

double double_logistic_decrement(double f, const Phase2Params& p) {
  const double mid_upper = p.delta2 + p.delta3 + p.delta4 - 0.5 * p.delta1;
  const double mid_lower = p.delta4 + 0.5 * p.delta3;
  const double neg = -p.d / (1.0 + std::exp(-kTwoLn9 * (f - mid_upper) / p.delta1));
  const double pos = p.d / (1.0 + std::exp(-kTwoLn9 * (f - mid_lower) / p.delta3));
  return neg + pos;
}

double phase2_step_mean(double f, const Phase2Params& p) {
  return f - double_logistic_decrement(f, p);
}

double error_sd(double f, int period_start, const VarianceParams& v) {
  const double raw = f > v.S ? v.sigma0 - v.a * (f - v.S) : v.sigma0 - v.b * (v.S - f);
  const double base = std::max(v.sd_floor, raw);
  return (period_start < 1975 ? v.c0 : 1.0) * base;
}

double normal_logpdf(double x, double mean, double sd) {
  if (!(sd > 0.0)) return -std::numeric_limits<double>::infinity();
  const double z = (x - mean) / sd;
  return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

double phase2_loglik(std::span<const Observation> segment, const Phase2Params& p,
                     const VarianceParams& v) {
  if (segment.size() < 2)
    throw std::invalid_argument("phase2_loglik: segment needs at least 2 observations");
  double ll = 0.0;
  for (std::size_t i = 0; i + 1 < segment.size(); ++i) {
    const double mean = phase2_step_mean(segment[i].tfr, p);
    const double sd = error_sd(segment[i].tfr, segment[i].period_start, v);
    ll += normal_logpdf(segment[i + 1].tfr, mean, sd);
  }
  return ll;
}

double phase3_step_mean(double f, const Phase3Params& q) {
  return q.mu + q.rho * (f - q.mu);
}

double phase3_loglik(std::span<const Observation> segment, const Phase3Params& q) {
  if (segment.size() < 2)
    throw std::invalid_argument("phase3_loglik: segment needs at least 2 observations");
  double ll = 0.0;
  for (std::size_t i = 0; i + 1 < segment.size(); ++i) {
    ll += normal_logpdf(segment[i + 1].tfr, phase3_step_mean(segment[i].tfr, q), q.sigma_eps);
  }
  return ll;
}

double annual_decrement_mean(double prev_f, double prev_decrement, const Phase2Params& p,
                             const AnnualParams& a) {
  const double f_next = prev_f - prev_decrement;
  return double_logistic_decrement(f_next, p) +
         a.phi * (prev_decrement - double_logistic_decrement(prev_f, p));
}

double annual_phase2_loglik(std::span<const Observation> segment, const Phase2Params& p,
                            const VarianceParams& v, const AnnualParams& a) {
  if (segment.size() < 3)
    throw std::invalid_argument("annual_phase2_loglik: segment needs at least 3 observations");
  double ll = 0.0;
  // The first decrement has no predecessor; it is conditioned on, not modeled.
  for (std::size_t i = 1; i + 1 < segment.size(); ++i) {
    const double prev_decr = segment[i - 1].tfr - segment[i].tfr;
    const double decr = segment[i].tfr - segment[i + 1].tfr;
    const double mean = annual_decrement_mean(segment[i - 1].tfr, prev_decr, p, a);
    const double sd = error_sd(segment[i].tfr, segment[i].period_start, v);
    ll += normal_logpdf(decr, mean, sd);
  }
  return ll;
}

}  // namespace tfr
