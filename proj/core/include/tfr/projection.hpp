#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfr/data.hpp"
#include "tfr/mcmc.hpp"
#include "tfr/phase_model.hpp"
#include "tfr/rng.hpp"

namespace tfr {

enum class Phase { TransitionII, PostTransitionIII };

/// One simulated future path. phase_at never reverts from III back to II.
struct Trajectory {
  std::string country_id;
  std::vector<int> period_starts;
  std::vector<double> values;
  std::vector<Phase> phase_at;
  std::size_t draw_index = 0;
};

/// Parameters backing one trajectory.
struct CountryDraw {
  std::optional<Phase2Params> theta;
  VarianceParams variance;
  Phase3Params phase3;
  std::optional<AnnualParams> annual;
  /// Start directly in Phase III even though the observed series never
  /// classified into it (fully post-transition country).
  bool force_phase3_start = false;
};

struct SimulationSettings {
  double floor = 0.5;            // TFR floor, enforced by resampling then clamping
  double phase3_threshold = 2.1;  // entry rule (a) threshold
  int floor_resample_attempts = 50;
};

/// Simulate one trajectory forward from the last observation. In Phase II
/// the transition step applies with its heteroscedastic distortion; the
/// trajectory enters Phase III at the first projected period where either
/// two consecutive increases below the threshold have occurred on the
/// concatenated observed+simulated series, or the value falls below the
/// draw's delta4. From then on the AR(1) step applies.
Trajectory simulate_trajectory(const TfrSeries& series, const PhaseSegmentation& seg,
                               const CountryDraw& draw, int horizon, RngStream& rng,
                               const SimulationSettings& settings = {});

struct QuantileFan {
  std::vector<double> levels;       // ascending probability levels
  std::vector<int> period_starts;   // one entry per projected period
  std::vector<std::vector<double>> rows;  // rows[period][level]
};

struct ProjectionResult {
  std::string country_id;
  QuantileFan fan;
  std::size_t trajectory_count = 0;
  /// Retained only when ProjectionConfig::keep_trajectories is set.
  std::vector<Trajectory> trajectories;
};

struct ProjectionConfig {
  int horizon_periods = 6;
  std::size_t trajectory_count = 4000;
  std::uint64_t seed = 1;
  std::vector<double> quantile_levels{0.025, 0.1, 0.5, 0.9, 0.975};
  SimulationSettings simulation;
  double rhat_bound = 1.1;
  bool force = false;  // skip the convergence gate
  std::size_t min_trajectories = 100;
  bool enforce_min_trajectories = false;  // false: warn to stderr; true: hard error
  std::vector<std::string> countries;     // empty: every country in the phase2 pool
  int jobs = 1;
  bool keep_trajectories = false;
};

/// Empirical quantile with linear interpolation (type 7). `sorted` must be
/// ascending and non-empty.
double quantile_type7(const std::vector<double>& sorted, double level);

/// Posterior-predictive projection for each requested country: trajectories
/// cycle over the recorded posterior draws, per-period quantiles summarize
/// them. Countries without Phase III draws get (mu, rho) sampled from the
/// hierarchy. Deterministic under (inputs, seed) for any jobs count.
std::map<std::string, ProjectionResult> project(
    const DataStore& store, const std::map<std::string, PhaseSegmentation>& segs,
    const ChainSet& phase2_chains, const ChainSet& phase3_chains,
    const ProjectionConfig& config);

}  // namespace tfr
