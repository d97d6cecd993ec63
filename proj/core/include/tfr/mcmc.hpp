#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tfr/data.hpp"
#include "tfr/phase_model.hpp"
#include "tfr/rng.hpp"

namespace tfr {

/// Pool-level normal layer for one transformed country coordinate.
struct HyperPair {
  double mean = 0.0;
  double sd = 1.0;
};

/// Country-level coordinates of the transition hierarchy on unconstrained
/// scales: d and delta4 are scaled logistics of d_raw / delta4_raw, and
/// (delta1..delta3) come from a softmax of (share1, share2, 0) applied to the
/// TFR range between the observed transition start and delta4.
struct Phase2CountryRaw {
  double d_raw = 0.0;
  double delta4_raw = 0.0;
  double share1 = 0.0;
  double share2 = 0.0;
};

struct Phase2Hierarchy {
  HyperPair d_raw, delta4_raw, share1, share2;
  std::map<std::string, Phase2CountryRaw> country;
};

/// Natural parameters for one country. start_level is the transition start
/// level; it caps delta4 so that delta1..delta3 stay positive.
Phase2Params phase2_params_from_raw(const Phase2CountryRaw& raw, double start_level);

/// Transition start level used by the hierarchy: the observed TFR at the
/// transition start plus a small headroom. The decrement curve is pinned
/// near zero at the start level itself, so anchoring it a quarter child
/// above the observed maximum lets the fitted curve place the onset of the
/// decline anywhere at or below the first observation.
double transition_start_level(const TfrSeries& series, const PhaseSegmentation& seg);

/// Pool-level parameters of the post-transition layer.
struct Phase3Hyper {
  double mu_bar = 1.05;
  double sigma_mu = 0.25;
  double rho_bar = 0.8;
  double sigma_rho = 0.14;
  double sigma_eps = 0.1;
};

struct McmcConfig {
  int iterations = 20000;
  int burn_in = 10000;
  int thin = 10;
  int chain_count = 3;
  std::uint64_t seed = 1;
  CountrySet pool;
  SeriesMode mode = SeriesMode::FiveYear;
  int adapt_window = 50;   // proposal adaptation cadence during burn-in
  double phase3_threshold = 2.1;
  bool estimate_variance = true;
  VarianceParams variance;  // initial values; fixed when estimate_variance is false
  int jobs = 1;             // chains run concurrently when > 1
};

/// Recorded posterior draws across chains. Draw vectors are aligned with
/// coordinate_names; the first coordinate is the log posterior ("lp").
struct ChainSet {
  std::string kind;  // "phase2" | "phase3"
  SeriesMode mode = SeriesMode::FiveYear;
  std::vector<std::string> coordinate_names;
  std::vector<std::vector<std::vector<double>>> chains;  // chain -> draw -> value
  int iterations = 0;
  int burn_in = 0;
  int thin = 1;
  int chain_count = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> pool_ids;
  std::map<std::string, double> acceptance_rates;

  std::size_t coord_index(std::string_view name) const;
  std::optional<std::size_t> find_coord(std::string_view name) const;
  std::size_t draws_per_chain() const;
  std::size_t total_draws() const;
  /// Chain-major flat access: draws of chain 0, then chain 1, ...
  const std::vector<double>& draw(std::size_t flat_index) const;
};

/// Hierarchical estimation of the transition model over the pooled
/// countries: country-level raw coordinates, pool-level means/sds, the error
/// scale parameters (when estimated), and the decrement autocorrelation in
/// annual mode. Random-walk Metropolis within Gibbs, one block per country
/// and per hyperparameter group; proposal scales adapt during burn-in only.
ChainSet run_phase2_mcmc(const DataStore& store,
                         const std::map<std::string, PhaseSegmentation>& segs,
                         const McmcConfig& config);

/// Hierarchical estimation of the post-transition AR(1) layer over the
/// pooled countries that have entered Phase III (segment length >= 3).
/// Requires at least two such countries.
ChainSet run_phase3_mcmc(const DataStore& store,
                         const std::map<std::string, PhaseSegmentation>& segs,
                         const McmcConfig& config);

/// Potential scale reduction factor per coordinate. Zero-variance
/// coordinates report std::nullopt (not applicable). The optional selector
/// filters coordinates by name.
std::map<std::string, std::optional<double>> gelman_rubin(
    const ChainSet& chains, const std::function<bool(const std::string&)>& selector = {});

/// True for hyperparameter / error-scale / annual-autocorrelation
/// coordinates: the ones gated by the convergence check.
bool is_pool_level_coordinate(std::string_view name);

/// Sample country-level (mu, rho) from the hierarchy at the given
/// hyperparameter draw; used when projecting a country without Phase III
/// data. mu is truncated to [0, inf), rho to [0, 1).
Phase3Params predictive_country_draw(const Phase3Hyper& hyper, RngStream& rng);

// Typed views into recorded draws.
Phase2Params phase2_params_from_draw(const ChainSet& chains, const std::vector<double>& draw,
                                     const std::string& country_id, double start_level);
VarianceParams variance_from_draw(const ChainSet& chains, const std::vector<double>& draw);
std::optional<AnnualParams> annual_from_draw(const ChainSet& chains,
                                             const std::vector<double>& draw);
Phase3Hyper phase3_hyper_from_draw(const ChainSet& chains, const std::vector<double>& draw);
std::optional<Phase3Params> phase3_params_from_draw(const ChainSet& chains,
                                                    const std::vector<double>& draw,
                                                    const std::string& country_id);

/// Transition-phase observations: from the global maximum down to (and
/// including) the Phase III trough, or to the end of the series.
std::span<const Observation> phase2_segment(const TfrSeries& series,
                                            const PhaseSegmentation& seg);

/// Post-transition observations: from the trough to the end; empty when the
/// series never entered Phase III.
std::span<const Observation> phase3_segment(const TfrSeries& series,
                                            const PhaseSegmentation& seg);

}  // namespace tfr
