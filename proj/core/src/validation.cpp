#include "tfr/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tfr/rng.hpp"

namespace tfr {

double coverage(std::span<const double> observed,
                std::span<const std::pair<double, double>> intervals) {
  if (observed.empty()) throw std::invalid_argument("coverage: empty input");
  if (observed.size() != intervals.size())
    throw std::invalid_argument("coverage: length mismatch");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    inside += intervals[i].first <= observed[i] && observed[i] <= intervals[i].second;
  return static_cast<double>(inside) / observed.size();
}

double rmse(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.empty()) throw std::invalid_argument("rmse: empty input");
  if (observed.size() != predicted.size()) throw std::invalid_argument("rmse: length mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double r = observed[i] - predicted[i];
    ss += r * r;
  }
  return std::sqrt(ss / observed.size());
}

double mae(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.empty()) throw std::invalid_argument("mae: empty input");
  if (observed.size() != predicted.size()) throw std::invalid_argument("mae: length mismatch");
  double sa = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) sa += std::abs(observed[i] - predicted[i]);
  return sa / observed.size();
}

double FitCountryStat::rmse() const {
  return transitions ? std::sqrt(sse / transitions) : 0.0;
}

double FitCountryStat::mae() const { return transitions ? sae / transitions : 0.0; }

namespace {

/// Equal-weight mixture of Gaussians; quantiles by bisection on the CDF.
struct GaussianMixture {
  std::vector<double> means;
  std::vector<double> sds;

  double cdf(double x) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < means.size(); ++j)
      acc += normal_cdf((x - means[j]) / sds[j]);
    return acc / means.size();
  }

  double quantile(double p) const {
    double lo = means.front(), hi = means.front(), max_sd = 0.0;
    for (std::size_t j = 0; j < means.size(); ++j) {
      lo = std::min(lo, means[j]);
      hi = std::max(hi, means[j]);
      max_sd = std::max(max_sd, sds[j]);
    }
    lo -= 8.0 * max_sd;
    hi += 8.0 * max_sd;
    for (int iter = 0; iter < 200 && hi - lo > 1e-10; ++iter) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

}  // namespace

FitReport fit_diagnostics(const DataStore& store,
                          const std::map<std::string, PhaseSegmentation>& segs,
                          const ChainSet& phase2_chains, int window_start, int window_end,
                          double interval_level, std::size_t draw_cap) {
  const std::size_t n_draws = phase2_chains.total_draws();
  if (n_draws == 0) throw std::invalid_argument("fit_diagnostics: empty chain set");
  const std::size_t stride = std::max<std::size_t>(1, n_draws / std::max<std::size_t>(1, draw_cap));
  const double tail = (1.0 - interval_level) / 2.0;
  const bool annual = phase2_chains.mode == SeriesMode::Annual;

  FitReport report;
  report.window_label = std::to_string(window_start) + "-" + std::to_string(window_end);

  for (const std::string& id : phase2_chains.pool_ids) {
    const auto series_it = store.series.find(id);
    if (series_it == store.series.end())
      throw std::invalid_argument("fit_diagnostics: chain pool country not in store: " + id);
    const TfrSeries& series = series_it->second;
    const auto seg_it = segs.find(id);
    if (seg_it == segs.end())
      throw std::invalid_argument("fit_diagnostics: no segmentation for " + id);
    const auto segment = phase2_segment(series, seg_it->second);
    if (segment.size() < 2) continue;
    const double start_level = transition_start_level(series, seg_it->second);

    // Cache the per-draw parameter views once per country.
    std::vector<Phase2Params> thetas;
    std::vector<VarianceParams> variances;
    std::vector<AnnualParams> annuals;
    for (std::size_t k = 0; k < n_draws; k += stride) {
      const auto& draw = phase2_chains.draw(k);
      thetas.push_back(phase2_params_from_draw(phase2_chains, draw, id, start_level));
      variances.push_back(variance_from_draw(phase2_chains, draw));
      if (annual) annuals.push_back(*annual_from_draw(phase2_chains, draw));
    }

    FitCountryStat stat;
    const std::size_t first = annual ? 1 : 0;  // annual predictions need a previous decrement
    for (std::size_t i = first; i + 1 < segment.size(); ++i) {
      if (segment[i].period_start < window_start) continue;
      if (segment[i + 1].period_start + segment[i + 1].period_length > window_end) continue;

      GaussianMixture mixture;
      mixture.means.reserve(thetas.size());
      mixture.sds.reserve(thetas.size());
      for (std::size_t j = 0; j < thetas.size(); ++j) {
        double mean;
        if (annual) {
          const double prev_decr = segment[i - 1].tfr - segment[i].tfr;
          mean = segment[i].tfr -
                 annual_decrement_mean(segment[i - 1].tfr, prev_decr, thetas[j], annuals[j]);
        } else {
          mean = phase2_step_mean(segment[i].tfr, thetas[j]);
        }
        mixture.means.push_back(mean);
        mixture.sds.push_back(error_sd(segment[i].tfr, segment[i].period_start, variances[j]));
      }

      FitTransition tr;
      tr.country_id = id;
      tr.from_period = segment[i].period_start;
      tr.to_period = segment[i + 1].period_start;
      tr.observed = segment[i + 1].tfr;
      tr.lo = mixture.quantile(tail);
      tr.hi = mixture.quantile(1.0 - tail);
      tr.median = mixture.quantile(0.5);
      tr.covered = tr.lo <= tr.observed && tr.observed <= tr.hi;

      stat.transitions += 1;
      stat.covered += tr.covered;
      const double residual = tr.observed - tr.median;
      stat.sse += residual * residual;
      stat.sae += std::abs(residual);
      report.transitions.push_back(std::move(tr));
    }
    if (stat.transitions > 0) report.per_country.emplace(id, stat);
  }

  if (report.transitions.empty())
    throw std::runtime_error("fit_diagnostics: no transitions in window " + report.window_label);

  double sse = 0.0, sae = 0.0;
  for (const auto& [id, stat] : report.per_country) {
    report.total_transitions += stat.transitions;
    report.total_covered += stat.covered;
    sse += stat.sse;
    sae += stat.sae;
  }
  report.total_coverage = double(report.total_covered) / report.total_transitions;
  report.total_rmse = std::sqrt(sse / report.total_transitions);
  report.total_mae = sae / report.total_transitions;
  return report;
}

namespace {

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * x);
  return buf;
}

std::string fixed4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

}  // namespace

std::string fit_report_text(const FitReport& report) {
  std::ostringstream out;
  out << "Goodness of fit of the transition model (" << report.window_label << ")\n";
  out << "  1) Total Coverage 95%            " << percent(report.total_coverage) << "\n";
  out << "  2) Total Root Mean Square Error  " << fixed4(report.total_rmse) << "\n";
  out << "  3) Total Mean Absolute Error     " << fixed4(report.total_mae) << "\n";
  out << "  Per-country 95% coverage:\n";
  for (const auto& [id, stat] : report.per_country) {
    out << "    " << id << "  " << percent(stat.coverage()) << "  (" << stat.transitions
        << " transitions, rmse " << fixed4(stat.rmse()) << ", mae " << fixed4(stat.mae())
        << ")\n";
  }
  return out.str();
}

std::string fit_report_json(const FitReport& report) {
  nlohmann::json j;
  j["window"] = report.window_label;
  j["total"] = {{"transitions", report.total_transitions},
                {"covered", report.total_covered},
                {"coverage", report.total_coverage},
                {"rmse", report.total_rmse},
                {"mae", report.total_mae}};
  nlohmann::json countries = nlohmann::json::object();
  for (const auto& [id, stat] : report.per_country) {
    countries[id] = {{"transitions", stat.transitions},
                     {"covered", stat.covered},
                     {"coverage", stat.coverage()},
                     {"rmse", stat.rmse()},
                     {"mae", stat.mae()}};
  }
  j["per_country"] = countries;
  nlohmann::json transitions = nlohmann::json::array();
  for (const auto& tr : report.transitions) {
    transitions.push_back({{"country", tr.country_id},
                           {"from", tr.from_period},
                           {"to", tr.to_period},
                           {"observed", tr.observed},
                           {"lo", tr.lo},
                           {"hi", tr.hi},
                           {"median", tr.median},
                           {"covered", tr.covered}});
  }
  j["transitions"] = transitions;
  return j.dump(2) + "\n";
}

HoldoutReport cross_validate(const DataStore& store, int cutoff_year,
                             const PipelineConfig& config) {
  int max_end = 0, min_start = 0;
  bool first = true;
  std::size_t max_heldout = 0;
  for (const auto& [id, series] : store.series) {
    for (const Observation& obs : series.observations) {
      max_end = std::max(max_end, obs.period_start + obs.period_length);
      min_start = first ? obs.period_start : std::min(min_start, obs.period_start);
      first = false;
    }
    std::size_t heldout = 0;
    for (const Observation& obs : series.observations)
      heldout += obs.period_start + obs.period_length > cutoff_year;
    max_heldout = std::max(max_heldout, heldout);
  }
  if (first) throw std::invalid_argument("cross_validate: empty store");
  if (cutoff_year >= max_end || cutoff_year <= min_start)
    throw std::invalid_argument("cross_validate: cutoff outside the observed range");
  if (max_heldout < 2)
    throw std::invalid_argument("cross_validate: fewer than two observed periods after cutoff");

  // Only the truncated store flows into classification, estimation and
  // projection; the full store is touched again solely to read held-out
  // values for scoring.
  const DataStore truncated = truncate_store(store, cutoff_year);
  const auto segs = classify_all(truncated, config.phase3_threshold);

  McmcConfig mcmc = config.mcmc;
  mcmc.phase3_threshold = config.phase3_threshold;
  const ChainSet phase2 = run_phase2_mcmc(truncated, segs, mcmc);
  const ChainSet phase3 = run_phase3_mcmc(truncated, segs, mcmc);

  const int len = period_length_of(mcmc.mode);
  int horizon = 0;
  for (const std::string& id : phase2.pool_ids) {
    const auto trunc_it = truncated.series.find(id);
    const auto full_it = store.series.find(id);
    if (trunc_it == truncated.series.end() || full_it == store.series.end()) continue;
    const int needed =
        (full_it->second.last_period_start() - trunc_it->second.last_period_start()) / len;
    horizon = std::max(horizon, needed);
  }
  if (horizon == 0) throw std::invalid_argument("cross_validate: nothing to hold out");

  ProjectionConfig proj = config.projection;
  proj.horizon_periods = horizon;
  proj.simulation.phase3_threshold = config.phase3_threshold;
  const auto results = project(truncated, segs, phase2, phase3, proj);

  const auto level_index = [&](double level) {
    for (std::size_t q = 0; q < proj.quantile_levels.size(); ++q)
      if (std::abs(proj.quantile_levels[q] - level) < 1e-9) return q;
    throw std::invalid_argument("cross_validate: projection levels must include 0.025/0.5/0.975");
  };
  const std::size_t q025 = level_index(0.025), q50 = level_index(0.5),
                    q975 = level_index(0.975);

  HoldoutReport report;
  report.cutoff_year = cutoff_year;
  for (const auto& [id, result] : results) {
    const TfrSeries& full_series = store.series.at(id);
    std::vector<HoldoutPeriod> rows;
    for (std::size_t t = 0; t < result.fan.period_starts.size(); ++t) {
      const int period = result.fan.period_starts[t];
      const auto idx = full_series.index_of_period(period);
      if (!idx) continue;
      HoldoutPeriod row;
      row.period_start = period;
      row.observed = full_series.observations[*idx].tfr;
      row.q025 = result.fan.rows[t][q025];
      row.q50 = result.fan.rows[t][q50];
      row.q975 = result.fan.rows[t][q975];
      row.contained = row.q025 <= row.observed && row.observed <= row.q975;
      report.total_periods += 1;
      report.total_contained += row.contained;
      rows.push_back(row);
    }
    if (!rows.empty()) report.per_country.emplace(id, std::move(rows));
  }
  report.summary_coverage =
      report.total_periods ? double(report.total_contained) / report.total_periods : 0.0;
  return report;
}

std::string holdout_report_text(const HoldoutReport& report) {
  std::ostringstream out;
  out << "Cross-validation with projections starting at " << report.cutoff_year << "\n";
  out << "  country  period  observed   q2.5    q50    q97.5  contained\n";
  for (const auto& [id, rows] : report.per_country) {
    for (const HoldoutPeriod& row : rows) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %-7s  %6d  %8.3f  %6.3f  %6.3f  %6.3f  %s\n", id.c_str(),
                    row.period_start, row.observed, row.q025, row.q50, row.q975,
                    row.contained ? "yes" : "NO");
      out << buf;
    }
  }
  out << "  Summary coverage: " << report.total_contained << "/" << report.total_periods << " ("
      << percent(report.summary_coverage) << ")\n";
  return out.str();
}

std::string holdout_report_json(const HoldoutReport& report) {
  nlohmann::json j;
  j["cutoff_year"] = report.cutoff_year;
  j["total_periods"] = report.total_periods;
  j["total_contained"] = report.total_contained;
  j["summary_coverage"] = report.summary_coverage;
  nlohmann::json countries = nlohmann::json::object();
  for (const auto& [id, rows] : report.per_country) {
    nlohmann::json arr = nlohmann::json::array();
    for (const HoldoutPeriod& row : rows) {
      arr.push_back({{"period_start", row.period_start},
                     {"observed", row.observed},
                     {"q025", row.q025},
                     {"q50", row.q50},
                     {"q975", row.q975},
                     {"contained", row.contained}});
    }
    countries[id] = arr;
  }
  j["per_country"] = countries;
  return j.dump(2) + "\n";
}

SyntheticResult generate_synthetic(const SyntheticTruth& truth, int n_countries, int n_periods,
                                   std::uint64_t seed) {
  if (n_countries <= 0 || n_periods <= 0)
    throw std::invalid_argument("generate_synthetic: counts must be positive");
  constexpr double kFloor = 0.05;  // keeps every generated value positive
  const int len = period_length_of(truth.mode);

  SyntheticResult result;
  result.store.metadata.source_label = "synthetic";
  result.store.metadata.vintage_year = truth.start_year + len * (n_periods - 1);

  for (int c = 0; c < n_countries; ++c) {
    char id[16];
    std::snprintf(id, sizeof id, "SYN%02d", c % 100);
    RngStream rng = derive_stream(seed, {fnv1a64("synthetic"), static_cast<std::uint64_t>(c)});

    TfrSeries series;
    series.country_id = id;
    series.country_name = id;
    series.mode = truth.mode;

    double f = truth.start_level;
    int year = truth.start_year;
    series.observations.push_back({year, len, f});

    if (truth.regime == SyntheticTruth::Regime::PhaseII) {
      const Phase2Params theta =
          truth.theta_per_country.empty()
              ? truth.theta
              : truth.theta_per_country[c % truth.theta_per_country.size()];
      result.phase2_truth.push_back(theta);
      double prev_f = f, prev_decr = 0.0;
      bool have_prev = false;
      for (int t = 1; t < n_periods; ++t) {
        const double sd = error_sd(f, year, truth.variance);
        double next;
        if (truth.mode == SeriesMode::Annual && have_prev) {
          const double mean_decr = annual_decrement_mean(prev_f, prev_decr, theta, truth.annual);
          const double decr = truth.zero_noise ? mean_decr : rng.normal(mean_decr, sd);
          next = f - decr;
        } else {
          const double mean = phase2_step_mean(f, theta);
          next = truth.zero_noise ? mean : rng.normal(mean, sd);
        }
        next = std::max(kFloor, next);
        prev_f = f;
        prev_decr = f - next;
        have_prev = true;
        year += len;
        f = next;
        series.observations.push_back({year, len, f});
      }
    } else {
      Phase3Params q;
      if (!truth.phase3_per_country.empty()) {
        q = truth.phase3_per_country[c % truth.phase3_per_country.size()];
      } else {
        q = predictive_country_draw(truth.hyper, rng);
      }
      result.phase3_truth.push_back(q);
      for (int t = 1; t < n_periods; ++t) {
        const double mean = phase3_step_mean(f, q);
        double next = truth.zero_noise ? mean : rng.normal(mean, q.sigma_eps);
        next = std::max(kFloor, next);
        year += len;
        f = next;
        series.observations.push_back({year, len, f});
      }
    }
    result.store.series.emplace(series.country_id, std::move(series));
  }

  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["countries"] = n_countries;
  manifest["periods"] = n_periods;
  manifest["mode"] = to_string(truth.mode);
  manifest["regime"] = truth.regime == SyntheticTruth::Regime::PhaseII ? "phase2" : "phase3";
  manifest["start_level"] = truth.start_level;
  manifest["zero_noise"] = truth.zero_noise;
  if (truth.regime == SyntheticTruth::Regime::PhaseII) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& theta : result.phase2_truth)
      arr.push_back({{"delta1", theta.delta1},
                     {"delta2", theta.delta2},
                     {"delta3", theta.delta3},
                     {"delta4", theta.delta4},
                     {"d", theta.d}});
    manifest["phase2_truth"] = arr;
  } else {
    manifest["hyper"] = {{"mu_bar", truth.hyper.mu_bar},
                         {"sigma_mu", truth.hyper.sigma_mu},
                         {"rho_bar", truth.hyper.rho_bar},
                         {"sigma_rho", truth.hyper.sigma_rho},
                         {"sigma_eps", truth.hyper.sigma_eps}};
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& q : result.phase3_truth)
      arr.push_back({{"mu", q.mu}, {"rho", q.rho}, {"sigma_eps", q.sigma_eps}});
    manifest["phase3_truth"] = arr;
  }
  result.manifest_json = manifest.dump(2) + "\n";
  return result;
}

}  // namespace tfr
