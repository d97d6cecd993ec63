#include "tfr/projection.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iostream>
#include <stdexcept>

namespace tfr {

namespace {

double draw_floored(double mean, double sd, RngStream& rng, const SimulationSettings& settings) {
  double value = 0.0;
  for (int attempt = 0; attempt < settings.floor_resample_attempts; ++attempt) {
    value = rng.normal(mean, sd);
    if (value >= settings.floor) return value;
  }
  return settings.floor;
}

}  // namespace

Trajectory simulate_trajectory(const TfrSeries& series, const PhaseSegmentation& seg,
                               const CountryDraw& draw, int horizon, RngStream& rng,
                               const SimulationSettings& settings) {
  if (horizon <= 0) throw std::invalid_argument("simulate_trajectory: horizon must be positive");
  if (series.observations.empty())
    throw std::invalid_argument("simulate_trajectory: empty series");

  const bool annual = series.mode == SeriesMode::Annual;
  const int len = period_length_of(series.mode);
  const auto& obs = series.observations;

  bool in_phase3 = seg.phase3_start.has_value() || draw.force_phase3_start;
  if (!in_phase3) {
    if (!draw.theta)
      throw std::invalid_argument(
          "simulate_trajectory: missing transition parameters for a country still in Phase II (" +
          series.country_id + ")");
    if (annual && !draw.annual)
      throw std::invalid_argument(
          "simulate_trajectory: annual series needs the decrement autocorrelation parameter");
  }

  Trajectory traj;
  traj.country_id = series.country_id;
  traj.period_starts.reserve(horizon);
  traj.values.reserve(horizon);
  traj.phase_at.reserve(horizon);

  double f = obs.back().tfr;
  int year = obs.back().period_start + len;

  // Sliding tail for entry rule (a), seeded from the observed series.
  double prev1 = f;
  std::optional<double> prev2;
  if (obs.size() >= 2) prev2 = obs[obs.size() - 2].tfr;

  // Annual Phase II carries the last decrement.
  double prev_f = obs.size() >= 2 ? obs[obs.size() - 2].tfr : f;
  double prev_decr = obs.size() >= 2 ? prev_f - f : 0.0;

  for (int step = 0; step < horizon; ++step) {
    double value;
    if (in_phase3) {
      value = draw_floored(phase3_step_mean(f, draw.phase3), draw.phase3.sigma_eps, rng,
                           settings);
    } else if (annual) {
      const double sd = error_sd(f, year, draw.variance);
      const double mean_decr = annual_decrement_mean(prev_f, prev_decr, *draw.theta, *draw.annual);
      double decr = 0.0;
      value = 0.0;
      for (int attempt = 0; attempt < settings.floor_resample_attempts; ++attempt) {
        decr = rng.normal(mean_decr, sd);
        value = f - decr;
        if (value >= settings.floor) break;
      }
      if (value < settings.floor) value = settings.floor;
      prev_f = f;
      prev_decr = f - value;
    } else {
      const double sd = error_sd(f, year, draw.variance);
      value = draw_floored(phase2_step_mean(f, *draw.theta), sd, rng, settings);
    }

    bool now_phase3 = in_phase3;
    if (!in_phase3) {
      // (a) two consecutive increases below the threshold on the
      //     concatenated observed+simulated series
      const bool rule_a = prev2 && *prev2 < prev1 && prev1 < value &&
                          *prev2 < settings.phase3_threshold &&
                          prev1 < settings.phase3_threshold &&
                          value < settings.phase3_threshold;
      // (b) fell below the draw's end-of-transition level
      const bool rule_b = value < draw.theta->delta4;
      now_phase3 = rule_a || rule_b;
    }

    traj.period_starts.push_back(year);
    traj.values.push_back(value);
    traj.phase_at.push_back(now_phase3 ? Phase::PostTransitionIII : Phase::TransitionII);
    in_phase3 = now_phase3;

    prev2 = prev1;
    prev1 = value;
    f = value;
    year += len;
  }
  return traj;
}

double quantile_type7(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) throw std::invalid_argument("quantile_type7: empty sample");
  if (level <= 0.0) return sorted.front();
  if (level >= 1.0) return sorted.back();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

ProjectionResult project_country(const TfrSeries& series, const PhaseSegmentation& seg,
                                 const ChainSet& phase2_chains, const ChainSet& phase3_chains,
                                 const ProjectionConfig& config) {
  const std::string& id = series.country_id;
  const bool has_phase2_block =
      phase2_chains.find_coord("country." + id + ".d_raw").has_value();
  const bool has_phase3_block = phase3_chains.find_coord("country." + id + ".mu").has_value();
  const bool observed_phase3 = seg.phase3_start.has_value();

  double start_level = 0.0;
  if (has_phase2_block)
    start_level = transition_start_level(series, seg);
  else if (!observed_phase3 && series.last_tfr() >= config.simulation.phase3_threshold)
    throw std::invalid_argument("project: missing Phase II parameter block for " + id);

  const std::size_t n2 = phase2_chains.total_draws();
  const std::size_t n3 = phase3_chains.total_draws();
  if (n2 == 0 || n3 == 0) throw std::invalid_argument("project: empty chain set");

  ProjectionResult result;
  result.country_id = id;
  result.trajectory_count = config.trajectory_count;

  const std::size_t levels = config.quantile_levels.size();
  std::vector<std::vector<double>> per_period(
      static_cast<std::size_t>(config.horizon_periods),
      std::vector<double>(config.trajectory_count));

  const std::uint64_t id_label = fnv1a64(id);
  for (std::size_t k = 0; k < config.trajectory_count; ++k) {
    const auto& draw2 = phase2_chains.draw(k % n2);
    const auto& draw3 = phase3_chains.draw(k % n3);
    RngStream rng = derive_stream(config.seed, {fnv1a64("projection"), id_label, k});

    CountryDraw draw;
    draw.variance = variance_from_draw(phase2_chains, draw2);
    draw.annual = annual_from_draw(phase2_chains, draw2);
    if (has_phase2_block)
      draw.theta = phase2_params_from_draw(phase2_chains, draw2, id, start_level);
    if (has_phase3_block) {
      draw.phase3 = *phase3_params_from_draw(phase3_chains, draw3, id);
    } else {
      draw.phase3 = predictive_country_draw(phase3_hyper_from_draw(phase3_chains, draw3), rng);
    }
    draw.force_phase3_start = !observed_phase3 && !has_phase2_block;

    Trajectory traj =
        simulate_trajectory(series, seg, draw, config.horizon_periods, rng, config.simulation);
    traj.draw_index = k % n2;
    if (result.fan.period_starts.empty()) result.fan.period_starts = traj.period_starts;
    for (int t = 0; t < config.horizon_periods; ++t) per_period[t][k] = traj.values[t];
    if (config.keep_trajectories) result.trajectories.push_back(std::move(traj));
  }

  result.fan.levels = config.quantile_levels;
  result.fan.rows.resize(per_period.size());
  for (std::size_t t = 0; t < per_period.size(); ++t) {
    std::sort(per_period[t].begin(), per_period[t].end());
    result.fan.rows[t].resize(levels);
    for (std::size_t q = 0; q < levels; ++q)
      result.fan.rows[t][q] = quantile_type7(per_period[t], config.quantile_levels[q]);
  }
  return result;
}

}  // namespace

std::map<std::string, ProjectionResult> project(
    const DataStore& store, const std::map<std::string, PhaseSegmentation>& segs,
    const ChainSet& phase2_chains, const ChainSet& phase3_chains,
    const ProjectionConfig& config) {
  if (config.horizon_periods <= 0)
    throw std::invalid_argument("project: horizon must be positive");
  if (!std::is_sorted(config.quantile_levels.begin(), config.quantile_levels.end()))
    throw std::invalid_argument("project: quantile levels must be ascending");
  if (config.trajectory_count < config.min_trajectories) {
    const std::string message = "project: trajectory count " +
                                std::to_string(config.trajectory_count) + " below the floor of " +
                                std::to_string(config.min_trajectories);
    if (config.enforce_min_trajectories) throw std::invalid_argument(message);
    std::cerr << "warning: " << message << "\n";
  }

  if (!config.force) {
    for (const ChainSet* chains : {&phase2_chains, &phase3_chains}) {
      const auto rhats = gelman_rubin(*chains, [](const std::string& name) {
        return is_pool_level_coordinate(name);
      });
      for (const auto& [name, rhat] : rhats) {
        if (rhat && *rhat >= config.rhat_bound)
          throw std::runtime_error("project: convergence gate failed: " + chains->kind + " " +
                                   name + " has R-hat " + std::to_string(*rhat) +
                                   " >= " + std::to_string(config.rhat_bound) +
                                   " (pass force to override)");
      }
    }
  }

  std::vector<std::string> ids = config.countries.empty() ? phase2_chains.pool_ids
                                                          : config.countries;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  auto run_one = [&](const std::string& id) {
    const auto series_it = store.series.find(id);
    if (series_it == store.series.end())
      throw std::invalid_argument("project: unknown country " + id);
    const auto seg_it = segs.find(id);
    if (seg_it == segs.end())
      throw std::invalid_argument("project: no phase segmentation for " + id);
    return project_country(series_it->second, seg_it->second, phase2_chains, phase3_chains,
                           config);
  };

  std::map<std::string, ProjectionResult> results;
  if (config.jobs > 1) {
    std::vector<std::future<ProjectionResult>> futures;
    futures.reserve(ids.size());
    for (const std::string& id : ids)
      futures.push_back(std::async(std::launch::async, run_one, id));
    for (std::size_t i = 0; i < ids.size(); ++i) results.emplace(ids[i], futures[i].get());
  } else {
    for (const std::string& id : ids) results.emplace(id, run_one(id));
  }
  return results;
}

}  // namespace tfr
