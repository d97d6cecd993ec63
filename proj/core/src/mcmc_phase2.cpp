#include <algorithm>
#include <stdexcept>

#include "mcmc_internal.hpp"
#include "tfr/mcmc.hpp"

namespace tfr {

namespace {

using internal::Block;
using internal::kNegInf;

struct CountryData {
  std::string id;
  std::vector<Observation> segment;  // transition-phase observations
  double start_level = 0.0;          // observed TFR at the transition start
};

// State layout (names exclude the leading "lp" of recorded draws):
//   0..5   var.sigma0 var.S var.a var.b var.c0 var.sd_floor
//   6..13  hyper.{d_raw,delta4_raw,share1,share2}.{mean,sd}
//   [14]   phi                      (annual mode only)
//   then   country.<id>.{d_raw,delta4_raw,share1,share2} per pooled country
struct Layout {
  bool annual = false;
  std::size_t phi = 0;          // valid when annual
  std::size_t country_base = 0;  // first country coordinate

  static constexpr std::size_t kVar = 0;
  static constexpr std::size_t kHyper = 6;

  std::size_t country(std::size_t country_index, std::size_t coord) const {
    return country_base + 4 * country_index + coord;
  }
  std::size_t size(std::size_t n_countries) const {
    return country_base + 4 * n_countries;
  }
};

VarianceParams variance_at(const std::vector<double>& s) {
  return {s[0], s[1], s[2], s[3], s[4], s[5]};
}

Phase2CountryRaw raw_at(const std::vector<double>& s, const Layout& lay, std::size_t ci) {
  return {s[lay.country(ci, 0)], s[lay.country(ci, 1)], s[lay.country(ci, 2)],
          s[lay.country(ci, 3)]};
}

struct Phase2Posterior {
  std::vector<CountryData> countries;
  Layout lay;
  bool estimate_variance = true;
  double sigma0_max = 0.5;

  double country_loglik(const std::vector<double>& s, std::size_t ci) const {
    const CountryData& c = countries[ci];
    const Phase2Params theta = phase2_params_from_raw(raw_at(s, lay, ci), c.start_level);
    const VarianceParams v = variance_at(s);
    if (!theta.valid() || !v.valid()) return kNegInf;
    if (lay.annual)
      return annual_phase2_loglik(c.segment, theta, v, AnnualParams{s[lay.phi]});
    return phase2_loglik(c.segment, theta, v);
  }

  double country_prior(const std::vector<double>& s, std::size_t ci) const {
    double lp = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double mean = s[Layout::kHyper + 2 * j];
      const double sd = s[Layout::kHyper + 2 * j + 1];
      lp += normal_logpdf(s[lay.country(ci, j)], mean, sd);
    }
    return lp;
  }

  double hyper_prior(const std::vector<double>& s) const {
    for (std::size_t j = 0; j < 4; ++j) {
      const double mean = s[Layout::kHyper + 2 * j];
      const double sd = s[Layout::kHyper + 2 * j + 1];
      if (mean < -5.0 || mean > 5.0 || sd <= 0.0 || sd > 2.0) return kNegInf;
    }
    return 0.0;
  }

  double variance_prior(const std::vector<double>& s) const {
    const VarianceParams v = variance_at(s);
    if (v.sigma0 <= 0.0 || v.sigma0 > sigma0_max) return kNegInf;
    if (v.S < 1.0 || v.S > 6.5) return kNegInf;
    if (v.a < 0.0 || v.a > 0.3 || v.b < 0.0 || v.b > 0.3) return kNegInf;
    if (v.c0 < 1.0 || v.c0 > 3.0) return kNegInf;
    return 0.0;
  }

  double phi_prior(const std::vector<double>& s) const {
    if (!lay.annual) return 0.0;
    const double phi = s[lay.phi];
    return (phi >= 0.0 && phi < 1.0) ? 0.0 : kNegInf;
  }

  double full(const std::vector<double>& s) const {
    double lp = hyper_prior(s) + variance_prior(s) + phi_prior(s);
    if (!std::isfinite(lp)) return kNegInf;
    for (std::size_t ci = 0; ci < countries.size(); ++ci)
      lp += country_loglik(s, ci) + country_prior(s, ci);
    return lp;
  }
};

}  // namespace

ChainSet run_phase2_mcmc(const DataStore& store,
                         const std::map<std::string, PhaseSegmentation>& segs,
                         const McmcConfig& config) {
  if (config.pool.ids.empty()) throw std::invalid_argument("run_phase2_mcmc: empty pool");

  auto posterior = std::make_shared<Phase2Posterior>();
  posterior->lay.annual = config.mode == SeriesMode::Annual;
  posterior->lay.country_base = Layout::kHyper + 8 + (posterior->lay.annual ? 1 : 0);
  if (posterior->lay.annual) posterior->lay.phi = Layout::kHyper + 8;
  posterior->estimate_variance = config.estimate_variance;
  posterior->sigma0_max = posterior->lay.annual ? 0.2 : 0.5;

  const std::size_t min_segment = posterior->lay.annual ? 3 : 2;
  for (const std::string& id : config.pool.ids) {
    const auto series_it = store.series.find(id);
    if (series_it == store.series.end())
      throw std::invalid_argument("run_phase2_mcmc: pool country not in store: " + id);
    if (series_it->second.mode != config.mode)
      throw std::invalid_argument("run_phase2_mcmc: series mode mismatch for " + id);
    const auto seg_it = segs.find(id);
    if (seg_it == segs.end())
      throw std::invalid_argument("run_phase2_mcmc: no phase segmentation for " + id);
    const auto segment = phase2_segment(series_it->second, seg_it->second);
    if (segment.size() < min_segment)
      throw std::runtime_error("run_phase2_mcmc: country has no usable Phase II transitions: " +
                               id);
    CountryData data;
    data.id = id;
    data.segment.assign(segment.begin(), segment.end());
    data.start_level = transition_start_level(series_it->second, seg_it->second);
    posterior->countries.push_back(std::move(data));
  }

  const Layout lay = posterior->lay;
  const std::size_t n_countries = posterior->countries.size();

  std::vector<std::string> names{"lp",
                                 "var.sigma0",
                                 "var.S",
                                 "var.a",
                                 "var.b",
                                 "var.c0",
                                 "var.sd_floor",
                                 "hyper.d_raw.mean",
                                 "hyper.d_raw.sd",
                                 "hyper.delta4_raw.mean",
                                 "hyper.delta4_raw.sd",
                                 "hyper.share1.mean",
                                 "hyper.share1.sd",
                                 "hyper.share2.mean",
                                 "hyper.share2.sd"};
  if (lay.annual) names.push_back("phi");
  for (const CountryData& c : posterior->countries)
    for (const char* coord : {"d_raw", "delta4_raw", "share1", "share2"})
      names.push_back("country." + c.id + "." + coord);

  const VarianceParams v0 = config.variance;
  auto make_init = [posterior, lay, n_countries, v0]() {
    std::vector<double> s(lay.size(n_countries), 0.0);
    s[0] = v0.sigma0;
    s[1] = v0.S;
    s[2] = v0.a;
    s[3] = v0.b;
    s[4] = v0.c0;
    s[5] = v0.sd_floor;
    for (std::size_t j = 0; j < 4; ++j) {
      s[Layout::kHyper + 2 * j] = 0.0;  // pool-prior midpoint of U(-5, 5)
      s[Layout::kHyper + 2 * j + 1] = 1.0;
    }
    if (lay.annual) s[lay.phi] = 0.5;
    // country transforms start at the pool-prior midpoints (all raw = 0)
    return s;
  };

  auto make_blocks = [posterior, lay, n_countries, config]() {
    std::vector<Block> blocks;
    auto all_logliks = [posterior](const std::vector<double>& s) {
      double lp = 0.0;
      for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
        lp += posterior->country_loglik(s, ci);
      return lp;
    };
    if (config.estimate_variance) {
      // The peak level S rides a near-flat ridge against the slopes and mixes
      // poorly; it stays at its configured value while the level, slopes and
      // early-period multiplier are estimated.
      const char* var_names[4] = {"var.sigma0", "var.a", "var.b", "var.c0"};
      const std::size_t var_coords[4] = {0, 2, 3, 4};
      const double var_units[4] = {0.02, 0.02, 0.02, 0.1};
      for (std::size_t j = 0; j < 4; ++j) {
        Block var;
        var.name = var_names[j];
        var.coords = {var_coords[j]};
        var.units = {var_units[j]};
        var.scale = 1.0;
        var.logpost_contrib = [posterior, all_logliks](const std::vector<double>& s) {
          const double prior = posterior->variance_prior(s);
          if (!std::isfinite(prior)) return kNegInf;
          return prior + all_logliks(s);
        };
        blocks.push_back(std::move(var));
      }
      // sigma0 trades off against the slopes along a near-flat ridge; move
      // the pairs together to traverse it
      for (const auto& [name, slope_coord] :
           {std::pair<const char*, std::size_t>{"var.ridge_b", 3},
            std::pair<const char*, std::size_t>{"var.ridge_a", 2}}) {
        Block ridge;
        ridge.name = name;
        ridge.translate = true;
        ridge.coords = {0, slope_coord};
        ridge.units = {0.02, 0.012};
        ridge.scale = 1.0;
        ridge.logpost_contrib = [posterior, all_logliks](const std::vector<double>& s) {
          const double prior = posterior->variance_prior(s);
          if (!std::isfinite(prior)) return kNegInf;
          return prior + all_logliks(s);
        };
        blocks.push_back(std::move(ridge));
      }
    }
    const char* hyper_names[4] = {"hyper.d_raw", "hyper.delta4_raw", "hyper.share1",
                                  "hyper.share2"};
    for (std::size_t j = 0; j < 4; ++j) {
      Block hyper;
      hyper.name = hyper_names[j];
      hyper.coords = {Layout::kHyper + 2 * j, Layout::kHyper + 2 * j + 1};
      hyper.units = {1.0, 0.5};
      hyper.scale = 0.3;
      hyper.repeats = 4;  // pool-level conditionals are likelihood-free and cheap
      hyper.logpost_contrib = [posterior, j](const std::vector<double>& s) {
        double lp = posterior->hyper_prior(s);
        if (!std::isfinite(lp)) return kNegInf;
        const double mean = s[Layout::kHyper + 2 * j];
        const double sd = s[Layout::kHyper + 2 * j + 1];
        for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
          lp += normal_logpdf(s[posterior->lay.country(ci, j)], mean, sd);
        return lp;
      };
      blocks.push_back(std::move(hyper));

      // Funnel move: shift the pool mean and every country coordinate by the
      // same amount. The country prior terms are invariant, so only the
      // likelihood and the mean's box matter.
      Block shift;
      shift.name = std::string(hyper_names[j]) + ".shift";
      shift.translate = true;
      shift.coords.push_back(Layout::kHyper + 2 * j);
      for (std::size_t ci = 0; ci < n_countries; ++ci)
        shift.coords.push_back(lay.country(ci, j));
      shift.units.assign(shift.coords.size(), 1.0);
      shift.scale = 0.2;
      shift.logpost_contrib = [posterior, j, all_logliks](const std::vector<double>& s) {
        const double mean = s[Layout::kHyper + 2 * j];
        if (mean < -5.0 || mean > 5.0) return kNegInf;
        return all_logliks(s);
      };
      blocks.push_back(std::move(shift));

      // Funnel move along the sd direction: contract or spread the country
      // cloud together with the pool sd.
      Block spread;
      spread.name = std::string(hyper_names[j]) + ".spread";
      spread.scale_group = true;
      spread.anchor_coord = Layout::kHyper + 2 * j;
      spread.coords.push_back(Layout::kHyper + 2 * j + 1);
      for (std::size_t ci = 0; ci < n_countries; ++ci)
        spread.coords.push_back(lay.country(ci, j));
      spread.units.assign(spread.coords.size(), 1.0);
      spread.scale = 0.15;
      spread.logpost_contrib = [posterior, j, all_logliks](const std::vector<double>& s) {
        const double sd = s[Layout::kHyper + 2 * j + 1];
        if (sd <= 0.0 || sd > 2.0) return kNegInf;
        const double mean = s[Layout::kHyper + 2 * j];
        double lp = all_logliks(s);
        for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
          lp += normal_logpdf(s[posterior->lay.country(ci, j)], mean, sd);
        return lp;
      };
      blocks.push_back(std::move(spread));
    }
    if (lay.annual) {
      Block phi;
      phi.name = "phi";
      phi.coords = {lay.phi};
      phi.units = {0.1};
      phi.scale = 1.0;
      phi.logpost_contrib = [posterior](const std::vector<double>& s) {
        double lp = posterior->phi_prior(s);
        if (!std::isfinite(lp)) return kNegInf;
        for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
          lp += posterior->country_loglik(s, ci);
        return lp;
      };
      blocks.push_back(std::move(phi));
    }
    for (std::size_t ci = 0; ci < n_countries; ++ci) {
      auto contrib = [posterior, ci](const std::vector<double>& s) {
        return posterior->country_loglik(s, ci) + posterior->country_prior(s, ci);
      };
      Block country;
      country.name = "country." + posterior->countries[ci].id;
      country.coords = {lay.country(ci, 0), lay.country(ci, 1), lay.country(ci, 2),
                        lay.country(ci, 3)};
      country.units = {1.0, 1.0, 1.0, 1.0};
      country.scale = 0.3;
      country.logpost_contrib = contrib;
      blocks.push_back(std::move(country));

      // the share coordinates are weakly identified for short segments;
      // single-coordinate moves diffuse them faster than the joint block
      Block shares;
      shares.name = "country." + posterior->countries[ci].id + ".shares";
      shares.coords = {lay.country(ci, 2), lay.country(ci, 3)};
      shares.units = {1.0, 1.0};
      shares.scale = 0.8;
      shares.logpost_contrib = contrib;
      blocks.push_back(std::move(shares));
    }
    return blocks;
  };

  auto full_logpost = [posterior](const std::vector<double>& s) { return posterior->full(s); };

  std::vector<std::string> pool_ids;
  pool_ids.reserve(n_countries);
  for (const CountryData& c : posterior->countries) pool_ids.push_back(c.id);

  return internal::run_chains(make_init, make_blocks, full_logpost, config, "phase2",
                              std::move(names), std::move(pool_ids));
}

}  // namespace tfr
