#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tfr/data.hpp"
#include "tfr/mcmc.hpp"
#include "tfr/projection.hpp"

namespace tfr {

/// Fraction of observations falling inside their [lo, hi] interval.
double coverage(std::span<const double> observed,
                std::span<const std::pair<double, double>> intervals);

double rmse(std::span<const double> observed, std::span<const double> predicted);
double mae(std::span<const double> observed, std::span<const double> predicted);

struct FitTransition {
  std::string country_id;
  int from_period = 0;
  int to_period = 0;
  double observed = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double median = 0.0;
  bool covered = false;
};

struct FitCountryStat {
  std::size_t transitions = 0;
  std::size_t covered = 0;
  double sse = 0.0;  // squared residuals vs the predictive median
  double sae = 0.0;  // absolute residuals

  double coverage() const { return transitions ? double(covered) / transitions : 0.0; }
  double rmse() const;
  double mae() const;
};

/// One-step-ahead goodness of fit of the transition model over a data
/// window: per-transition posterior predictive intervals (draw mixture with
/// Gaussian step noise) and medians, aggregated per country and pooled.
struct FitReport {
  std::string window_label;
  std::map<std::string, FitCountryStat> per_country;
  std::vector<FitTransition> transitions;
  std::size_t total_transitions = 0;
  std::size_t total_covered = 0;
  double total_coverage = 0.0;
  double total_rmse = 0.0;
  double total_mae = 0.0;
};

FitReport fit_diagnostics(const DataStore& store,
                          const std::map<std::string, PhaseSegmentation>& segs,
                          const ChainSet& phase2_chains, int window_start, int window_end,
                          double interval_level = 0.95, std::size_t draw_cap = 1000);

std::string fit_report_text(const FitReport& report);
std::string fit_report_json(const FitReport& report);

struct HoldoutPeriod {
  int period_start = 0;
  double observed = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  bool contained = false;
};

struct HoldoutReport {
  int cutoff_year = 0;
  std::map<std::string, std::vector<HoldoutPeriod>> per_country;
  std::size_t total_periods = 0;
  std::size_t total_contained = 0;
  double summary_coverage = 0.0;
};

std::string holdout_report_text(const HoldoutReport& report);
std::string holdout_report_json(const HoldoutReport& report);

struct PipelineConfig {
  McmcConfig mcmc;
  ProjectionConfig projection;
  double phase3_threshold = 2.1;
};

/// Estimate to the cutoff and score held-out periods against the projected
/// 95% fan. Only the truncated store is handed to classification, fitting
/// and projection; held-out observations are read solely for scoring.
HoldoutReport cross_validate(const DataStore& store, int cutoff_year,
                             const PipelineConfig& config);

/// Forward-simulation oracle for calibration tests.
struct SyntheticTruth {
  enum class Regime { PhaseII, PhaseIII };
  Regime regime = Regime::PhaseIII;
  SeriesMode mode = SeriesMode::FiveYear;
  int start_year = 1950;
  double start_level = 2.0;
  Phase2Params theta;
  std::vector<Phase2Params> theta_per_country;  // optional per-country override
  VarianceParams variance;
  AnnualParams annual;
  Phase3Hyper hyper;                             // country layer sampled from this
  std::vector<Phase3Params> phase3_per_country;  // optional explicit values
  bool zero_noise = false;
};

struct SyntheticResult {
  DataStore store;
  std::vector<Phase2Params> phase2_truth;  // per country, when regime is PhaseII
  std::vector<Phase3Params> phase3_truth;  // per country, when regime is PhaseIII
  std::string manifest_json;               // records the ground truth
};

SyntheticResult generate_synthetic(const SyntheticTruth& truth, int n_countries, int n_periods,
                                   std::uint64_t seed);

}  // namespace tfr
