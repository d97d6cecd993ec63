#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mcmc_internal.hpp"
#include "tfr/mcmc.hpp"

namespace tfr {

namespace {

using internal::Block;
using internal::kNegInf;
using internal::truncated_normal_logpdf;

constexpr double kInf = std::numeric_limits<double>::infinity();
// rho draws at or above 1 are rejected at proposal time to keep projections
// stationary, so the country layer is a normal truncated to [0, 1).
constexpr double kRhoMax = 1.0 - 1e-12;

struct CountryData {
  std::string id;
  std::vector<Observation> segment;  // post-transition observations
};

// State layout:
//   0..4  hyper.mu_bar hyper.sigma_mu hyper.rho_bar hyper.sigma_rho hyper.sigma_eps
//   then  country.<id>.{mu,rho} per pooled Phase III country
struct Phase3Posterior {
  std::vector<CountryData> countries;

  static std::size_t mu_index(std::size_t ci) { return 5 + 2 * ci; }
  static std::size_t rho_index(std::size_t ci) { return 5 + 2 * ci + 1; }

  double country_loglik(const std::vector<double>& s, std::size_t ci) const {
    const Phase3Params q{s[mu_index(ci)], s[rho_index(ci)], s[4]};
    if (!(q.sigma_eps > 0.0)) return kNegInf;
    return phase3_loglik(countries[ci].segment, q);
  }

  double country_prior(const std::vector<double>& s, std::size_t ci) const {
    return truncated_normal_logpdf(s[mu_index(ci)], s[0], s[1], 0.0, kInf) +
           truncated_normal_logpdf(s[rho_index(ci)], s[2], s[3], 0.0, kRhoMax);
  }

  double hyper_prior(const std::vector<double>& s) const {
    if (s[0] < 0.0 || s[0] > 2.1) return kNegInf;    // mu_bar ~ U[0, 2.1]
    if (s[1] <= 0.0 || s[1] > 0.5) return kNegInf;   // sigma_mu ~ U[0, 0.5]
    if (s[2] < 0.0 || s[2] > 1.0) return kNegInf;    // rho_bar ~ U[0, 1]
    if (s[3] <= 0.0 || s[3] > 0.289) return kNegInf;  // sigma_rho ~ U[0, 0.289]
    if (s[4] <= 0.0 || s[4] > 0.5) return kNegInf;   // sigma_eps ~ U[0, 0.5]
    return 0.0;
  }

  double full(const std::vector<double>& s) const {
    double lp = hyper_prior(s);
    if (!std::isfinite(lp)) return kNegInf;
    for (std::size_t ci = 0; ci < countries.size(); ++ci)
      lp += country_loglik(s, ci) + country_prior(s, ci);
    return lp;
  }
};

}  // namespace

ChainSet run_phase3_mcmc(const DataStore& store,
                         const std::map<std::string, PhaseSegmentation>& segs,
                         const McmcConfig& config) {
  if (config.pool.ids.empty()) throw std::invalid_argument("run_phase3_mcmc: empty pool");

  auto posterior = std::make_shared<Phase3Posterior>();
  std::vector<double> last_values;
  for (const std::string& id : config.pool.ids) {
    const auto series_it = store.series.find(id);
    if (series_it == store.series.end())
      throw std::invalid_argument("run_phase3_mcmc: pool country not in store: " + id);
    const auto seg_it = segs.find(id);
    if (seg_it == segs.end()) continue;
    const auto segment = phase3_segment(series_it->second, seg_it->second);
    if (segment.size() < 3) continue;
    CountryData data;
    data.id = id;
    data.segment.assign(segment.begin(), segment.end());
    posterior->countries.push_back(std::move(data));
    last_values.push_back(segment.back().tfr);
  }
  if (posterior->countries.size() < 2)
    throw std::runtime_error(
        "run_phase3_mcmc: fewer than 2 pooled countries have entered Phase III; the hierarchy "
        "is unidentifiable");

  const std::size_t n_countries = posterior->countries.size();

  std::vector<std::string> names{"lp",
                                 "hyper.mu_bar",
                                 "hyper.sigma_mu",
                                 "hyper.rho_bar",
                                 "hyper.sigma_rho",
                                 "hyper.sigma_eps"};
  for (const CountryData& c : posterior->countries) {
    names.push_back("country." + c.id + ".mu");
    names.push_back("country." + c.id + ".rho");
  }

  auto make_init = [posterior, last_values, n_countries]() {
    std::vector<double> s(5 + 2 * n_countries);
    double mean_last = 0.0;
    for (double v : last_values) mean_last += v;
    mean_last /= last_values.size();
    s[0] = std::clamp(mean_last, 0.0, 2.1);
    s[1] = 0.25;
    s[2] = 0.8;
    s[3] = 0.14;
    s[4] = 0.1;
    for (std::size_t ci = 0; ci < n_countries; ++ci) {
      s[Phase3Posterior::mu_index(ci)] = std::max(0.0, last_values[ci]);
      s[Phase3Posterior::rho_index(ci)] = 0.8;
    }
    return s;
  };

  auto make_blocks = [posterior, n_countries]() {
    std::vector<Block> blocks;

    Block mu;
    mu.name = "hyper.mu";
    mu.coords = {0, 1};
    mu.units = {0.1, 0.05};
    mu.scale = 1.0;
    mu.repeats = 4;
    mu.logpost_contrib = [posterior](const std::vector<double>& s) {
      double lp = posterior->hyper_prior(s);
      if (!std::isfinite(lp)) return kNegInf;
      for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
        lp += truncated_normal_logpdf(s[Phase3Posterior::mu_index(ci)], s[0], s[1], 0.0, kInf);
      return lp;
    };
    blocks.push_back(std::move(mu));

    Block rho;
    rho.name = "hyper.rho";
    rho.coords = {2, 3};
    rho.units = {0.1, 0.05};
    rho.scale = 1.0;
    rho.repeats = 4;
    rho.logpost_contrib = [posterior](const std::vector<double>& s) {
      double lp = posterior->hyper_prior(s);
      if (!std::isfinite(lp)) return kNegInf;
      for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
        lp += truncated_normal_logpdf(s[Phase3Posterior::rho_index(ci)], s[2], s[3], 0.0,
                                      kRhoMax);
      return lp;
    };
    blocks.push_back(std::move(rho));

    // funnel moves: pool mean with the country values; pool sd with the
    // spread of the country cloud
    const struct {
      const char* name;
      std::size_t mean_coord;
      std::size_t sd_coord;
      bool is_mu;
    } groups[2] = {{"hyper.mu", 0, 1, true}, {"hyper.rho", 2, 3, false}};
    for (const auto& group : groups) {
      Block shift;
      shift.name = std::string(group.name) + ".shift";
      shift.translate = true;
      shift.coords.push_back(group.mean_coord);
      for (std::size_t ci = 0; ci < n_countries; ++ci)
        shift.coords.push_back(group.is_mu ? Phase3Posterior::mu_index(ci)
                                           : Phase3Posterior::rho_index(ci));
      shift.units.assign(shift.coords.size(), 1.0);
      shift.scale = 0.05;
      shift.logpost_contrib = [posterior](const std::vector<double>& s) {
        double lp = posterior->hyper_prior(s);
        if (!std::isfinite(lp)) return kNegInf;
        for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
          lp += posterior->country_loglik(s, ci) + posterior->country_prior(s, ci);
        return lp;
      };
      blocks.push_back(std::move(shift));

      Block spread;
      spread.name = std::string(group.name) + ".spread";
      spread.scale_group = true;
      spread.anchor_coord = group.mean_coord;
      spread.coords.push_back(group.sd_coord);
      for (std::size_t ci = 0; ci < n_countries; ++ci)
        spread.coords.push_back(group.is_mu ? Phase3Posterior::mu_index(ci)
                                            : Phase3Posterior::rho_index(ci));
      spread.units.assign(spread.coords.size(), 1.0);
      spread.scale = 0.1;
      spread.logpost_contrib = [posterior, group](const std::vector<double>& s) {
        const double sd = s[group.sd_coord];
        const double hi = group.is_mu ? 0.5 : 0.289;
        if (sd <= 0.0 || sd > hi) return kNegInf;
        double lp = 0.0;
        for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci) {
          // country values must stay in the truncation support
          const std::size_t idx = group.is_mu ? Phase3Posterior::mu_index(ci)
                                              : Phase3Posterior::rho_index(ci);
          if (s[idx] < 0.0 || (!group.is_mu && s[idx] >= 1.0)) return kNegInf;
          lp += posterior->country_loglik(s, ci);
          // the truncated-normal normalization is not shift/scale invariant
          lp += posterior->country_prior(s, ci);
        }
        return lp;
      };
      blocks.push_back(std::move(spread));
    }

    Block eps;
    eps.name = "hyper.sigma_eps";
    eps.coords = {4};
    eps.units = {0.05};
    eps.scale = 1.0;
    eps.repeats = 2;
    eps.logpost_contrib = [posterior](const std::vector<double>& s) {
      double lp = posterior->hyper_prior(s);
      if (!std::isfinite(lp)) return kNegInf;
      for (std::size_t ci = 0; ci < posterior->countries.size(); ++ci)
        lp += posterior->country_loglik(s, ci);
      return lp;
    };
    blocks.push_back(std::move(eps));

    for (std::size_t ci = 0; ci < n_countries; ++ci) {
      Block country;
      country.name = "country." + posterior->countries[ci].id;
      country.coords = {Phase3Posterior::mu_index(ci), Phase3Posterior::rho_index(ci)};
      country.units = {0.1, 0.1};
      country.scale = 1.0;
      country.logpost_contrib = [posterior, ci](const std::vector<double>& s) {
        return posterior->country_loglik(s, ci) + posterior->country_prior(s, ci);
      };
      blocks.push_back(std::move(country));
    }
    return blocks;
  };

  auto full_logpost = [posterior](const std::vector<double>& s) { return posterior->full(s); };

  std::vector<std::string> pool_ids;
  pool_ids.reserve(n_countries);
  for (const CountryData& c : posterior->countries) pool_ids.push_back(c.id);

  return internal::run_chains(make_init, make_blocks, full_logpost, config, "phase3",
                              std::move(names), std::move(pool_ids));
}

}  // namespace tfr
