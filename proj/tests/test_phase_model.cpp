#include <doctest.h>

#include <cmath>
#include <vector>

#include "tfr/phase_model.hpp"
#include "tfr/rng.hpp"

using namespace tfr;

namespace {

const Phase2Params kUnit{1.0, 1.0, 1.0, 1.0, 1.0};

// Generator for realistically shaped transition parameters: shares obey
// delta2+delta3 > delta1 and delta1+delta2 > delta3, which keeps the
// decrement strictly inside (0, d) on the operational range [delta4, U].
struct ThetaSample {
  Phase2Params p;
  double start_level;
};

ThetaSample sample_theta(RngStream& rng) {
  double w1, w2, w3;
  while (true) {
    const double s1 = -1.5 + 3.0 * rng.u01();
    const double s2 = -1.5 + 3.0 * rng.u01();
    const double e1 = std::exp(s1), e2 = std::exp(s2);
    const double den = e1 + e2 + 1.0;
    w1 = e1 / den;
    w2 = e2 / den;
    w3 = 1.0 / den;
    if (w2 + w3 > 1.05 * w1 && w1 + w2 > 1.05 * w3) break;
  }
  const double start = 2.6 + 4.9 * rng.u01();
  const double hi4 = std::min(2.5, 0.95 * start);
  const double delta4 = 0.5 + (hi4 - 0.5) * rng.u01();
  const double range = start - delta4;
  const double d = 0.25 + 2.25 * rng.u01();
  return {{range * w1, range * w2, range * w3, delta4, d}, start};
}

}  // namespace

TEST_CASE("double logistic decrement: exact values at the unit configuration") {
  // both points evaluate to -1/2 + 81/82 = 20/41 by symmetry
  CHECK(double_logistic_decrement(2.5, kUnit) == doctest::Approx(20.0 / 41.0).epsilon(1e-12));
  CHECK(double_logistic_decrement(1.5, kUnit) == doctest::Approx(20.0 / 41.0).epsilon(1e-12));
}

TEST_CASE("double logistic decrement: tails") {
  const double far = double_logistic_decrement(10.0, kUnit);
  CHECK(far > 0.0);
  CHECK(far < 1e-6);
  CHECK(far == doctest::Approx(4.796973579870457e-15).epsilon(1e-9));
  CHECK(double_logistic_decrement(0.0, kUnit) ==
        doctest::Approx(1.3529282126825421e-3).epsilon(1e-12));
}

TEST_CASE("double logistic decrement: derivative matches the analytic form") {
  RngStream rng = derive_stream(42, {1});
  const double k = 2.0 * std::log(9.0);
  for (int i = 0; i < 100; ++i) {
    const auto [p, start] = sample_theta(rng);
    const double f = p.delta4 + (start - p.delta4) * rng.u01();
    const double m1 = p.delta2 + p.delta3 + p.delta4 - 0.5 * p.delta1;
    const double m2 = p.delta4 + 0.5 * p.delta3;
    const auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    const double s1 = sig(k * (f - m1) / p.delta1);
    const double s2 = sig(k * (f - m2) / p.delta3);
    const double analytic =
        -p.d * s1 * (1.0 - s1) * k / p.delta1 + p.d * s2 * (1.0 - s2) * k / p.delta3;
    const double h = 1e-6;
    const double numeric = (double_logistic_decrement(f + h, p) -
                            double_logistic_decrement(f - h, p)) /
                           (2.0 * h);
    CHECK(numeric == doctest::Approx(analytic).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("double logistic decrement: bounds") {
  RngStream rng = derive_stream(43, {2});
  for (int i = 0; i < 200; ++i) {
    const auto [p, start] = sample_theta(rng);
    for (int j = 0; j <= 50; ++j) {
      const double f = p.delta4 + (start - p.delta4) * j / 50.0;
      const double g = double_logistic_decrement(f, p);
      CHECK(g > 0.0);
      CHECK(g < p.d);
    }
    const double sum = p.delta1 + p.delta2 + p.delta3 + p.delta4;
    CHECK(std::abs(double_logistic_decrement(1000.0 * sum, p)) < 1e-6);
    // the (-d, d) envelope holds for any positive parameters, even ill-shaped
    const Phase2Params wild{5.0, 0.01, 0.02, 1.0, 1.3};
    for (double f : {0.1, 0.5, 1.0, 2.0, 4.0, 8.0}) {
      const double g = double_logistic_decrement(f, wild);
      CHECK(g > -wild.d);
      CHECK(g < wild.d);
    }
  }
}

TEST_CASE("phase2 step mean") {
  CHECK(phase2_step_mean(2.5, kUnit) == doctest::Approx(2.5 - 20.0 / 41.0).epsilon(1e-12));
  Phase2Params tiny = kUnit;
  tiny.d = 1e-12;
  CHECK(phase2_step_mean(3.0, tiny) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(phase2_step_mean(0.0, kUnit) == doctest::Approx(-1.3529282126825421e-3).epsilon(1e-9));
}

TEST_CASE("error sd: peak, pre-1975 multiplier, floor") {
  VarianceParams v;
  v.sigma0 = 0.1;
  v.S = 3.5;
  CHECK(error_sd(3.5, 2000, v) == doctest::Approx(0.1));
  VarianceParams v2 = v;
  v2.c0 = 1.5;
  CHECK(error_sd(3.5, 1960, v2) == doctest::Approx(0.15));
  VarianceParams v3;
  v3.sigma0 = 0.1;
  v3.a = 0.5;
  v3.S = 2.0;
  v3.sd_floor = 0.01;
  CHECK(error_sd(5.0, 2000, v3) == doctest::Approx(0.01));
}

TEST_CASE("error sd: never below the floor") {
  RngStream rng = derive_stream(44, {3});
  for (int i = 0; i < 500; ++i) {
    VarianceParams v;
    v.sigma0 = 0.01 + 0.4 * rng.u01();
    v.S = 1.0 + 5.0 * rng.u01();
    v.a = 0.3 * rng.u01();
    v.b = 0.3 * rng.u01();
    v.c0 = 1.0 + rng.u01();
    const double f = 8.0 * rng.u01();
    const int year = 1950 + static_cast<int>(70 * rng.u01());
    CHECK(error_sd(f, year, v) >= v.sd_floor);
  }
}

TEST_CASE("phase2 loglik: closed form at zero residual") {
  VarianceParams v;
  v.sigma0 = 0.1;
  v.S = 2.5;  // peak at the observed level: sd is exactly sigma0
  v.a = 0.0;
  v.b = 0.0;
  const std::vector<Observation> seg{{2000, 5, 2.5},
                                     {2005, 5, phase2_step_mean(2.5, kUnit)}};
  CHECK(phase2_loglik(seg, kUnit, v) == doctest::Approx(1.3836465597893729).epsilon(1e-12));
}

TEST_CASE("phase2 loglik: doubling residuals lowers the likelihood") {
  VarianceParams v;
  const double mean = phase2_step_mean(2.5, kUnit);
  const std::vector<Observation> near{{2000, 5, 2.5}, {2005, 5, mean + 0.05}};
  const std::vector<Observation> far{{2000, 5, 2.5}, {2005, 5, mean + 0.10}};
  CHECK(phase2_loglik(near, kUnit, v) > phase2_loglik(far, kUnit, v));
}

TEST_CASE("phase2 loglik: equals the sum of one-step densities") {
  VarianceParams v;
  const std::vector<Observation> seg{{1995, 5, 3.1}, {2000, 5, 2.7}, {2005, 5, 2.2}};
  double by_hand = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double mean = seg[i].tfr - double_logistic_decrement(seg[i].tfr, kUnit);
    const double sd = error_sd(seg[i].tfr, seg[i].period_start, v);
    const double z = (seg[i + 1].tfr - mean) / sd;
    by_hand += -0.5 * std::log(2.0 * M_PI) - std::log(sd) - 0.5 * z * z;
  }
  CHECK(phase2_loglik(seg, kUnit, v) == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK_THROWS_AS(phase2_loglik(std::vector<Observation>{{2000, 5, 2.0}}, kUnit, v),
                  std::invalid_argument);
}

TEST_CASE("phase2 loglik: invariant to time relabeling on one side of 1975") {
  VarianceParams v;
  const std::vector<Observation> a{{1990, 5, 3.1}, {1995, 5, 2.7}, {2000, 5, 2.2}};
  const std::vector<Observation> b{{2005, 5, 3.1}, {2010, 5, 2.7}, {2015, 5, 2.2}};
  CHECK(phase2_loglik(a, kUnit, v) == doctest::Approx(phase2_loglik(b, kUnit, v)));
  const std::vector<Observation> c{{1950, 5, 3.1}, {1955, 5, 2.7}, {1960, 5, 2.2}};
  const std::vector<Observation> d{{1960, 5, 3.1}, {1965, 5, 2.7}, {1970, 5, 2.2}};
  CHECK(phase2_loglik(c, kUnit, v) == doctest::Approx(phase2_loglik(d, kUnit, v)));
}

TEST_CASE("phase3 step mean") {
  Phase3Params q{1.7, 0.9, 0.1};
  CHECK(phase3_step_mean(1.7, q) == doctest::Approx(1.7));
  CHECK(phase3_step_mean(1.0, q) == doctest::Approx(1.07));
  q.rho = 0.0;
  CHECK(phase3_step_mean(0.3, q) == doctest::Approx(1.7));
}

TEST_CASE("phase3 step mean contracts toward mu") {
  RngStream rng = derive_stream(45, {4});
  for (int i = 0; i < 200; ++i) {
    Phase3Params q{2.1 * rng.u01(), rng.u01(), 0.1};
    const double f = 4.0 * rng.u01();
    CHECK(std::abs(phase3_step_mean(f, q) - q.mu) ==
          doctest::Approx(q.rho * std::abs(f - q.mu)));
  }
}

TEST_CASE("phase3 loglik: closed form, monotonicity, hand sum") {
  Phase3Params q{1.6, 0.8, 0.1};
  const std::vector<Observation> exact{{2000, 5, 1.2},
                                       {2005, 5, phase3_step_mean(1.2, q)}};
  CHECK(phase3_loglik(exact, q) == doctest::Approx(1.3836465597893729).epsilon(1e-12));

  const double mean = phase3_step_mean(1.2, q);
  const std::vector<Observation> near{{2000, 5, 1.2}, {2005, 5, mean + 0.03}};
  const std::vector<Observation> far{{2000, 5, 1.2}, {2005, 5, mean + 0.06}};
  CHECK(phase3_loglik(near, q) > phase3_loglik(far, q));

  const std::vector<Observation> seg{{2000, 5, 1.2}, {2005, 5, 1.31}, {2010, 5, 1.38}};
  double by_hand = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double z = (seg[i + 1].tfr - phase3_step_mean(seg[i].tfr, q)) / q.sigma_eps;
    by_hand += -0.5 * std::log(2.0 * M_PI) - std::log(q.sigma_eps) - 0.5 * z * z;
  }
  CHECK(phase3_loglik(seg, q) == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK_THROWS_AS(phase3_loglik(std::vector<Observation>{{2000, 5, 1.0}}, q),
                  std::invalid_argument);
}

TEST_CASE("annual decrement mean") {
  const AnnualParams none{0.0};
  const double prev_f = 2.8, prev_decr = 0.07;
  const double f_next = prev_f - prev_decr;
  CHECK(annual_decrement_mean(prev_f, prev_decr, kUnit, none) ==
        doctest::Approx(double_logistic_decrement(f_next, kUnit)));

  const AnnualParams half{0.5};
  const double on_curve = double_logistic_decrement(prev_f, kUnit);
  CHECK(annual_decrement_mean(prev_f, on_curve, kUnit, half) ==
        doctest::Approx(double_logistic_decrement(prev_f - on_curve, kUnit)));

  // carried residual 0.2 at phi = 0.5 adds exactly 0.1
  const double shifted = on_curve + 0.2;
  CHECK(annual_decrement_mean(prev_f, shifted, kUnit, half) ==
        doctest::Approx(double_logistic_decrement(prev_f - shifted, kUnit) + 0.1));
}

TEST_CASE("annual phase2 loglik conditions on the first decrement") {
  VarianceParams v;
  const AnnualParams a{0.4};
  const std::vector<Observation> seg{
      {2000, 1, 3.00}, {2001, 1, 2.90}, {2002, 1, 2.82}, {2003, 1, 2.75}};
  double by_hand = 0.0;
  for (int i = 1; i + 1 < 4; ++i) {
    const double prev_decr = seg[i - 1].tfr - seg[i].tfr;
    const double decr = seg[i].tfr - seg[i + 1].tfr;
    const double mean = annual_decrement_mean(seg[i - 1].tfr, prev_decr, kUnit, a);
    const double sd = error_sd(seg[i].tfr, seg[i].period_start, v);
    by_hand += normal_logpdf(decr, mean, sd);
  }
  CHECK(annual_phase2_loglik(seg, kUnit, v, a) == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK_THROWS_AS(
      annual_phase2_loglik(std::vector<Observation>{{2000, 1, 3.0}, {2001, 1, 2.9}}, kUnit, v, a),
      std::invalid_argument);
}
