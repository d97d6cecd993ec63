#include <algorithm>
#include <cmath>
#include <future>
#include <stdexcept>

#include "mcmc_internal.hpp"
#include "tfr/mcmc.hpp"

namespace tfr {

namespace internal {

double truncated_normal_logpdf(double x, double mean, double sd, double lo, double hi) {
  if (!(sd > 0.0)) return kNegInf;
  if (x < lo || x > hi) return kNegInf;
  const double plo = std::isinf(lo) ? 0.0 : normal_cdf((lo - mean) / sd);
  const double phi = std::isinf(hi) ? 1.0 : normal_cdf((hi - mean) / sd);
  const double mass = phi - plo;
  if (!(mass > 0.0)) return kNegInf;
  return normal_logpdf(x, mean, sd) - std::log(mass);
}

ChainRun run_chain(std::vector<double> state, std::vector<Block> blocks,
                   const std::function<double(const std::vector<double>&)>& full_logpost,
                   const McmcConfig& config, RngStream rng) {
  constexpr double kTargetRate = 0.35;
  if (!std::isfinite(full_logpost(state)))
    throw std::runtime_error("mcmc: non-finite log-posterior at initialization");

  ChainRun out;
  std::vector<double> saved;
  for (int iter = 0; iter < config.iterations; ++iter) {
    const bool adapting = iter < config.burn_in;
    for (Block& block : blocks) {
      for (int rep = 0; rep < block.repeats; ++rep) {
        const double current = block.logpost_contrib(state);
        saved.resize(block.coords.size());
        double log_ratio_adjust = 0.0;
        if (block.scale_group) {
          const double step = block.scale * rng.normal();
          const double factor = std::exp(step);
          const double anchor = state[block.anchor_coord];
          for (std::size_t j = 0; j < block.coords.size(); ++j)
            saved[j] = state[block.coords[j]];
          state[block.coords[0]] *= factor;
          for (std::size_t j = 1; j < block.coords.size(); ++j)
            state[block.coords[j]] = anchor + (state[block.coords[j]] - anchor) * factor;
          log_ratio_adjust = step * static_cast<double>(block.coords.size());
        } else {
          const double shared = block.translate ? rng.normal() : 0.0;
          for (std::size_t j = 0; j < block.coords.size(); ++j) {
            saved[j] = state[block.coords[j]];
            const double step = block.translate ? shared : rng.normal();
            state[block.coords[j]] += block.scale * block.units[j] * step;
          }
        }
        const double proposed = block.logpost_contrib(state);
        const bool accept = std::log(rng.u01()) < proposed - current + log_ratio_adjust;
        if (!accept) {
          for (std::size_t j = 0; j < block.coords.size(); ++j)
            state[block.coords[j]] = saved[j];
        }
        if (adapting) {
          ++block.window_proposed;
          block.window_accepted += accept;
          if (block.window_proposed >= static_cast<std::uint64_t>(config.adapt_window)) {
            const double rate =
                static_cast<double>(block.window_accepted) / block.window_proposed;
            ++block.adapt_rounds;
            block.scale *=
                std::exp((rate - kTargetRate) / std::sqrt(double(block.adapt_rounds)));
            block.scale = std::clamp(block.scale, 1e-6, 50.0);
            block.window_proposed = block.window_accepted = 0;
          }
        } else {
          ++block.post_proposed;
          block.post_accepted += accept;
        }
      }
    }
    if (iter >= config.burn_in && (iter - config.burn_in) % config.thin == 0) {
      std::vector<double> draw;
      draw.reserve(state.size() + 1);
      draw.push_back(full_logpost(state));
      draw.insert(draw.end(), state.begin(), state.end());
      out.draws.push_back(std::move(draw));
    }
  }
  for (const Block& block : blocks) {
    out.acceptance_rates[block.name] =
        block.post_proposed == 0
            ? 0.0
            : static_cast<double>(block.post_accepted) / block.post_proposed;
  }
  return out;
}

ChainSet run_chains(const std::function<std::vector<double>()>& make_init,
                    const std::function<std::vector<Block>()>& make_blocks,
                    const std::function<double(const std::vector<double>&)>& full_logpost,
                    const McmcConfig& config, const std::string& kind,
                    std::vector<std::string> coordinate_names,
                    std::vector<std::string> pool_ids) {
  if (config.iterations <= config.burn_in)
    throw std::invalid_argument("mcmc: iterations must exceed burn_in");
  if (config.chain_count < 2)
    throw std::invalid_argument("mcmc: at least 2 chains required for diagnostics");
  if (config.thin < 1) throw std::invalid_argument("mcmc: thin must be >= 1");

  auto one_chain = [&](int chain_index) {
    RngStream rng =
        derive_stream(config.seed, {fnv1a64(kind), static_cast<std::uint64_t>(chain_index)});
    return run_chain(make_init(), make_blocks(), full_logpost, config, std::move(rng));
  };

  std::vector<ChainRun> runs(config.chain_count);
  if (config.jobs > 1) {
    std::vector<std::future<ChainRun>> futures;
    futures.reserve(config.chain_count);
    for (int c = 0; c < config.chain_count; ++c)
      futures.push_back(std::async(std::launch::async, one_chain, c));
    for (int c = 0; c < config.chain_count; ++c) runs[c] = futures[c].get();
  } else {
    for (int c = 0; c < config.chain_count; ++c) runs[c] = one_chain(c);
  }

  ChainSet set;
  set.kind = kind;
  set.mode = config.mode;
  set.coordinate_names = std::move(coordinate_names);
  set.iterations = config.iterations;
  set.burn_in = config.burn_in;
  set.thin = config.thin;
  set.chain_count = config.chain_count;
  set.seed = config.seed;
  set.pool_ids = std::move(pool_ids);
  for (auto& run : runs) set.chains.push_back(std::move(run.draws));
  // average post-burn-in acceptance over chains
  for (const auto& run : runs)
    for (const auto& [name, rate] : run.acceptance_rates) set.acceptance_rates[name] += rate;
  for (auto& [name, rate] : set.acceptance_rates) rate /= config.chain_count;
  return set;
}

}  // namespace internal

std::size_t ChainSet::coord_index(std::string_view name) const {
  const auto found = find_coord(name);
  if (!found) throw std::out_of_range("chain set has no coordinate '" + std::string(name) + "'");
  return *found;
}

std::optional<std::size_t> ChainSet::find_coord(std::string_view name) const {
  const auto it = std::find(coordinate_names.begin(), coordinate_names.end(), name);
  if (it == coordinate_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - coordinate_names.begin());
}

std::size_t ChainSet::draws_per_chain() const {
  return chains.empty() ? 0 : chains.front().size();
}

std::size_t ChainSet::total_draws() const { return draws_per_chain() * chains.size(); }

const std::vector<double>& ChainSet::draw(std::size_t flat_index) const {
  const std::size_t per_chain = draws_per_chain();
  return chains[flat_index / per_chain][flat_index % per_chain];
}

std::map<std::string, std::optional<double>> gelman_rubin(
    const ChainSet& chains, const std::function<bool(const std::string&)>& selector) {
  const std::size_t m = chains.chains.size();
  if (m < 2) throw std::invalid_argument("gelman_rubin: at least 2 chains required");
  const std::size_t n = chains.draws_per_chain();
  if (n < 10) throw std::invalid_argument("gelman_rubin: chains shorter than 10 draws");
  for (const auto& chain : chains.chains)
    if (chain.size() != n) throw std::invalid_argument("gelman_rubin: unequal chain lengths");

  std::map<std::string, std::optional<double>> out;
  for (std::size_t k = 0; k < chains.coordinate_names.size(); ++k) {
    const std::string& name = chains.coordinate_names[k];
    if (selector && !selector(name)) continue;
    std::vector<double> means(m), vars(m);
    for (std::size_t j = 0; j < m; ++j) {
      double sum = 0.0;
      for (const auto& draw : chains.chains[j]) sum += draw[k];
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& draw : chains.chains[j]) ss += (draw[k] - mean) * (draw[k] - mean);
      means[j] = mean;
      vars[j] = ss / (n - 1);
    }
    double w = 0.0;
    for (double v : vars) w += v;
    w /= m;
    double grand = 0.0;
    for (double mu : means) grand += mu;
    grand /= m;
    if (!(w > 1e-18 * (grand * grand + 1e-12))) {
      out[name] = std::nullopt;  // degenerate coordinate: diagnostic not applicable
      continue;
    }
    double b_over_n = 0.0;
    for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
    b_over_n /= (m - 1);
    const double var_plus = (double(n) - 1.0) / n * w + b_over_n;
    out[name] = std::sqrt(var_plus / w);
  }
  return out;
}

bool is_pool_level_coordinate(std::string_view name) {
  return name.starts_with("hyper.") || name.starts_with("var.") || name == "phi";
}

Phase3Params predictive_country_draw(const Phase3Hyper& hyper, RngStream& rng) {
  Phase3Params q;
  q.mu = rng.truncated_normal(hyper.mu_bar, hyper.sigma_mu, 0.0,
                              std::numeric_limits<double>::infinity());
  q.rho = std::min(rng.truncated_normal(hyper.rho_bar, hyper.sigma_rho, 0.0, 1.0),
                   1.0 - 1e-12);
  q.sigma_eps = hyper.sigma_eps;
  return q;
}

Phase2Params phase2_params_from_raw(const Phase2CountryRaw& raw, double start_level) {
  Phase2Params p;
  p.d = 0.25 + 2.25 * internal::logistic(raw.d_raw);
  const double delta4_hi = std::min(2.5, 0.95 * start_level);
  if (!(delta4_hi > 0.5))
    throw std::invalid_argument("phase2_params_from_raw: transition start level too low");
  p.delta4 = 0.5 + (delta4_hi - 0.5) * internal::logistic(raw.delta4_raw);
  const double e1 = std::exp(raw.share1), e2 = std::exp(raw.share2);
  const double denom = e1 + e2 + 1.0;
  const double range = start_level - p.delta4;
  p.delta1 = range * e1 / denom;
  p.delta2 = range * e2 / denom;
  p.delta3 = range * 1.0 / denom;
  return p;
}

Phase2Params phase2_params_from_draw(const ChainSet& chains, const std::vector<double>& draw,
                                     const std::string& country_id, double start_level) {
  Phase2CountryRaw raw;
  const std::string base = "country." + country_id + ".";
  raw.d_raw = draw[chains.coord_index(base + "d_raw")];
  raw.delta4_raw = draw[chains.coord_index(base + "delta4_raw")];
  raw.share1 = draw[chains.coord_index(base + "share1")];
  raw.share2 = draw[chains.coord_index(base + "share2")];
  return phase2_params_from_raw(raw, start_level);
}

VarianceParams variance_from_draw(const ChainSet& chains, const std::vector<double>& draw) {
  VarianceParams v;
  v.sigma0 = draw[chains.coord_index("var.sigma0")];
  v.S = draw[chains.coord_index("var.S")];
  v.a = draw[chains.coord_index("var.a")];
  v.b = draw[chains.coord_index("var.b")];
  v.c0 = draw[chains.coord_index("var.c0")];
  v.sd_floor = draw[chains.coord_index("var.sd_floor")];
  return v;
}

std::optional<AnnualParams> annual_from_draw(const ChainSet& chains,
                                             const std::vector<double>& draw) {
  const auto idx = chains.find_coord("phi");
  if (!idx) return std::nullopt;
  return AnnualParams{draw[*idx]};
}

Phase3Hyper phase3_hyper_from_draw(const ChainSet& chains, const std::vector<double>& draw) {
  Phase3Hyper h;
  h.mu_bar = draw[chains.coord_index("hyper.mu_bar")];
  h.sigma_mu = draw[chains.coord_index("hyper.sigma_mu")];
  h.rho_bar = draw[chains.coord_index("hyper.rho_bar")];
  h.sigma_rho = draw[chains.coord_index("hyper.sigma_rho")];
  h.sigma_eps = draw[chains.coord_index("hyper.sigma_eps")];
  return h;
}

std::optional<Phase3Params> phase3_params_from_draw(const ChainSet& chains,
                                                    const std::vector<double>& draw,
                                                    const std::string& country_id) {
  const auto mu_idx = chains.find_coord("country." + country_id + ".mu");
  if (!mu_idx) return std::nullopt;
  Phase3Params q;
  q.mu = draw[*mu_idx];
  q.rho = draw[chains.coord_index("country." + country_id + ".rho")];
  q.sigma_eps = draw[chains.coord_index("hyper.sigma_eps")];
  return q;
}

double transition_start_level(const TfrSeries& series, const PhaseSegmentation& seg) {
  constexpr double kHeadroom = 0.25;
  return series.observations[seg.phase2_start].tfr + kHeadroom;
}

std::span<const Observation> phase2_segment(const TfrSeries& series,
                                            const PhaseSegmentation& seg) {
  const auto& obs = series.observations;
  const std::size_t end = seg.phase3_start ? *seg.phase3_start + 1 : obs.size();
  return std::span<const Observation>(obs).subspan(seg.phase2_start, end - seg.phase2_start);
}

std::span<const Observation> phase3_segment(const TfrSeries& series,
                                            const PhaseSegmentation& seg) {
  const auto& obs = series.observations;
  if (!seg.phase3_start) return {};
  return std::span<const Observation>(obs).subspan(*seg.phase3_start);
}

}  // namespace tfr
