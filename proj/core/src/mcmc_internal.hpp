#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tfr/mcmc.hpp"
#include "tfr/rng.hpp"

namespace tfr::internal {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// log density of N(mean, sd^2) truncated to [lo, hi].
double truncated_normal_logpdf(double x, double mean, double sd, double lo, double hi);

/// One Metropolis block: a named set of state coordinates updated jointly by
/// a Gaussian random walk with a shared scale (per-coordinate units allow
/// mixed magnitudes inside a block).
struct Block {
  std::string name;
  std::vector<std::size_t> coords;
  std::vector<double> units;  // same length as coords
  double scale = 0.2;
  int repeats = 1;  // cheap blocks sweep several times per iteration
  // Translation blocks shift every coordinate by the same draw; used to move
  // a pool mean together with its country coordinates along the funnel ridge.
  bool translate = false;
  // Scale-group blocks multiply coords[0] (a pool sd) by e^step and recenter
  // coords[1..] around anchor_coord by the same factor. run_chain adds the
  // transformation Jacobian (step * coords.size()) to the MH log ratio;
  // logpost_contrib must cover every density term the move touches,
  // including the country prior terms.
  bool scale_group = false;
  std::size_t anchor_coord = 0;
  // Only the state terms this block can change; used for the MH ratio.
  std::function<double(const std::vector<double>&)> logpost_contrib;

  // bookkeeping
  std::uint64_t window_proposed = 0, window_accepted = 0;
  std::uint64_t post_proposed = 0, post_accepted = 0;
  int adapt_rounds = 0;
};

struct ChainRun {
  std::vector<std::vector<double>> draws;        // [lp, state...]
  std::map<std::string, double> acceptance_rates;  // post-burn-in, per block
};

/// Run one chain of Metropolis-within-Gibbs sweeps. Proposal scales adapt
/// toward 35% acceptance during burn-in and are frozen afterwards. Throws
/// when the log posterior is not finite at the initial state.
ChainRun run_chain(std::vector<double> state, std::vector<Block> blocks,
                   const std::function<double(const std::vector<double>&)>& full_logpost,
                   const McmcConfig& config, RngStream rng);

/// Run `config.chain_count` chains (concurrently when config.jobs > 1) and
/// assemble the ChainSet. `stream_kind` decorates the per-chain seed so
/// phase2 and phase3 runs never share streams.
ChainSet run_chains(const std::function<std::vector<double>()>& make_init,
                    const std::function<std::vector<Block>()>& make_blocks,
                    const std::function<double(const std::vector<double>&)>& full_logpost,
                    const McmcConfig& config, const std::string& kind,
                    std::vector<std::string> coordinate_names,
                    std::vector<std::string> pool_ids);

}  // namespace tfr::internal
