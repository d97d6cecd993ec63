#include <doctest.h>

#include <cmath>

#include "tfr/mcmc.hpp"
#include "tfr/validation.hpp"

using namespace tfr;

namespace {

ChainSet synthetic_chainset(std::vector<std::vector<std::vector<double>>> chains,
                            std::vector<std::string> names) {
  ChainSet set;
  set.kind = "test";
  set.coordinate_names = std::move(names);
  set.chains = std::move(chains);
  set.chain_count = static_cast<int>(set.chains.size());
  return set;
}

McmcConfig small_config(const CountrySet& pool, int iters = 1200, int burn = 600) {
  McmcConfig config;
  config.iterations = iters;
  config.burn_in = burn;
  config.thin = 5;
  config.chain_count = 2;
  config.seed = 99;
  config.pool = pool;
  return config;
}

}  // namespace

TEST_CASE("gelman-rubin: iid chains sit near one") {
  RngStream rng = derive_stream(5, {1});
  std::vector<std::vector<std::vector<double>>> chains(2);
  for (auto& chain : chains)
    for (int i = 0; i < 10000; ++i) chain.push_back({rng.normal()});
  const auto rhat = gelman_rubin(synthetic_chainset(std::move(chains), {"x"}));
  REQUIRE(rhat.at("x").has_value());
  CHECK(*rhat.at("x") > 0.99);
  CHECK(*rhat.at("x") < 1.02);
}

TEST_CASE("gelman-rubin: offset chains blow up") {
  RngStream rng = derive_stream(6, {1});
  std::vector<std::vector<std::vector<double>>> chains(2);
  for (int i = 0; i < 2000; ++i) chains[0].push_back({rng.normal()});
  for (int i = 0; i < 2000; ++i) chains[1].push_back({rng.normal() + 10.0});
  const auto rhat = gelman_rubin(synthetic_chainset(std::move(chains), {"x"}));
  CHECK(*rhat.at("x") > 2.0);
}

TEST_CASE("gelman-rubin: duplicated chain stays at/below one") {
  RngStream rng = derive_stream(7, {1});
  std::vector<std::vector<double>> draws;
  for (int i = 0; i < 5000; ++i) draws.push_back({rng.normal()});
  const auto rhat = gelman_rubin(synthetic_chainset({draws, draws}, {"x"}));
  CHECK(*rhat.at("x") <= 1.0 + 1e-6);
}

TEST_CASE("gelman-rubin: zero-variance coordinate is not applicable") {
  std::vector<std::vector<std::vector<double>>> chains(2);
  for (auto& chain : chains)
    for (int i = 0; i < 100; ++i) chain.push_back({3.7});
  const auto rhat = gelman_rubin(synthetic_chainset(std::move(chains), {"x"}));
  CHECK_FALSE(rhat.at("x").has_value());
}

TEST_CASE("gelman-rubin: input validation") {
  std::vector<std::vector<std::vector<double>>> one(1);
  for (int i = 0; i < 100; ++i) one[0].push_back({0.0});
  CHECK_THROWS_AS(gelman_rubin(synthetic_chainset(std::move(one), {"x"})),
                  std::invalid_argument);
  std::vector<std::vector<std::vector<double>>> tiny(2);
  for (auto& chain : tiny)
    for (int i = 0; i < 5; ++i) chain.push_back({0.0});
  CHECK_THROWS_AS(gelman_rubin(synthetic_chainset(std::move(tiny), {"x"})),
                  std::invalid_argument);
}

TEST_CASE("predictive country draw") {
  SUBCASE("degenerate spreads return the means") {
    RngStream rng = derive_stream(8, {1});
    const Phase3Hyper hyper{1.3, 0.0, 0.7, 0.0, 0.2};
    const Phase3Params q = predictive_country_draw(hyper, rng);
    CHECK(q.mu == doctest::Approx(1.3));
    CHECK(q.rho == doctest::Approx(0.7));
    CHECK(q.sigma_eps == doctest::Approx(0.2));
  }
  SUBCASE("moment matches the truncated-normal mean") {
    RngStream rng = derive_stream(9, {1});
    const Phase3Hyper hyper{1.0, 0.2, 0.8, 0.05, 0.1};
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const Phase3Params q = predictive_country_draw(hyper, rng);
      REQUIRE(q.mu >= 0.0);
      REQUIRE(q.rho >= 0.0);
      REQUIRE(q.rho < 1.0);
      sum += q.mu;
    }
    const double alpha = -1.0 / 0.2;
    const double phi = std::exp(-0.5 * alpha * alpha) / std::sqrt(2.0 * M_PI);
    const double expected = 1.0 + 0.2 * phi / (1.0 - normal_cdf(alpha));
    CHECK(sum / n == doctest::Approx(expected).epsilon(0.01));
  }
}

TEST_CASE("phase2 raw-to-natural mapping") {
  RngStream rng = derive_stream(10, {1});
  for (int i = 0; i < 200; ++i) {
    Phase2CountryRaw raw{8.0 * (rng.u01() - 0.5), 8.0 * (rng.u01() - 0.5),
                         4.0 * (rng.u01() - 0.5), 4.0 * (rng.u01() - 0.5)};
    const double start = 1.0 + 6.0 * rng.u01();
    const Phase2Params p = phase2_params_from_raw(raw, start);
    CHECK(p.valid());
    CHECK(p.d > 0.25);
    CHECK(p.d < 2.5);
    CHECK(p.delta4 > 0.5);
    CHECK(p.delta4 < std::min(2.5, 0.95 * start));
    CHECK(p.delta1 + p.delta2 + p.delta3 ==
          doctest::Approx(start - p.delta4).epsilon(1e-12));
  }
  CHECK_THROWS_AS(phase2_params_from_raw(Phase2CountryRaw{}, 0.4), std::invalid_argument);
}

TEST_CASE("phase3 mcmc: constant series pin the asymptote") {
  SyntheticTruth truth;
  truth.regime = SyntheticTruth::Regime::PhaseIII;
  truth.start_level = 1.5;
  truth.phase3_per_country = {{1.5, 0.8, 0.05}};
  truth.zero_noise = true;  // constant series at exactly 1.5
  const SyntheticResult synth = generate_synthetic(truth, 3, 10, 17);

  std::map<std::string, PhaseSegmentation> segs;
  for (const auto& [id, series] : synth.store.series) {
    PhaseSegmentation seg;
    seg.phase2_start = 0;
    seg.phase3_start = 0;  // hand-set: constant history is treated as post-transition
    segs.emplace(id, seg);
  }
  const CountrySet pool = select_pool(synth.store, PoolCriterion::all());
  const ChainSet chains = run_phase3_mcmc(synth.store, segs, small_config(pool));

  for (const std::string& id : chains.pool_ids) {
    const std::size_t idx = chains.coord_index("country." + id + ".mu");
    std::vector<double> values;
    for (const auto& chain : chains.chains)
      for (const auto& draw : chain) values.push_back(draw[idx]);
    std::sort(values.begin(), values.end());
    const double median = values[values.size() / 2];
    CHECK(median == doctest::Approx(1.5).epsilon(0.0).scale(1.0).epsilon(0.07));
  }
}

TEST_CASE("phase3 mcmc: hyper draws stay inside the prior boxes, lp finite") {
  SyntheticTruth truth;
  truth.start_level = 2.0;
  truth.hyper = {1.6, 0.1, 0.8, 0.05, 0.1};
  const SyntheticResult synth = generate_synthetic(truth, 6, 12, 4);
  const auto segs = classify_all(synth.store, 2.1);
  const CountrySet pool = select_pool(synth.store, PoolCriterion::all());
  const ChainSet chains = run_phase3_mcmc(synth.store, segs, small_config(pool));

  REQUIRE(chains.pool_ids.size() >= 2);
  const std::size_t lp = chains.coord_index("lp");
  const std::size_t mu_bar = chains.coord_index("hyper.mu_bar");
  const std::size_t sigma_mu = chains.coord_index("hyper.sigma_mu");
  const std::size_t rho_bar = chains.coord_index("hyper.rho_bar");
  const std::size_t sigma_rho = chains.coord_index("hyper.sigma_rho");
  const std::size_t sigma_eps = chains.coord_index("hyper.sigma_eps");
  for (const auto& chain : chains.chains) {
    for (const auto& draw : chain) {
      CHECK(std::isfinite(draw[lp]));
      CHECK(draw[mu_bar] >= 0.0);
      CHECK(draw[mu_bar] <= 2.1);
      CHECK(draw[sigma_mu] >= 0.0);
      CHECK(draw[sigma_mu] <= 0.5);
      CHECK(draw[rho_bar] >= 0.0);
      CHECK(draw[rho_bar] <= 1.0);
      CHECK(draw[sigma_rho] >= 0.0);
      CHECK(draw[sigma_rho] <= 0.289);
      CHECK(draw[sigma_eps] >= 0.0);
      CHECK(draw[sigma_eps] <= 0.5);
    }
  }
}

TEST_CASE("phase3 mcmc: fewer than two post-transition countries is a hard error") {
  SyntheticTruth truth;
  truth.regime = SyntheticTruth::Regime::PhaseII;
  truth.start_level = 5.0;
  truth.theta = {1.5, 1.2, 1.0, 1.3, 0.8};
  truth.zero_noise = true;
  const SyntheticResult synth = generate_synthetic(truth, 3, 10, 5);  // pure declines
  const auto segs = classify_all(synth.store, 2.1);
  const CountrySet pool = select_pool(synth.store, PoolCriterion::all());
  CHECK_THROWS_AS(run_phase3_mcmc(synth.store, segs, small_config(pool)), std::runtime_error);
}

TEST_CASE("phase2 mcmc: structure, support and determinism") {
  SyntheticTruth truth;
  truth.regime = SyntheticTruth::Regime::PhaseII;
  truth.theta = {1.4, 1.3, 0.9, 1.4, 0.9};
  // start one delta1 below the curve start so the decline is under way
  truth.start_level = 3.6;
  truth.start_year = 1980;
  truth.variance.sigma0 = 0.05;
  const SyntheticResult synth = generate_synthetic(truth, 2, 10, 6);
  const auto segs = classify_all(synth.store, 2.1);
  const CountrySet pool = select_pool(synth.store, PoolCriterion::all());
  const McmcConfig config = small_config(pool, 900, 450);

  const ChainSet chains = run_phase2_mcmc(synth.store, segs, config);

  // country blocks cover exactly the pool
  CHECK(chains.pool_ids == pool.ids);
  for (const std::string& id : pool.ids)
    CHECK(chains.find_coord("country." + id + ".d_raw").has_value());
  CHECK_FALSE(chains.find_coord("country.XXX.d_raw").has_value());

  // every recorded draw maps to valid natural parameters with finite lp
  const std::size_t lp = chains.coord_index("lp");
  for (const auto& chain : chains.chains) {
    REQUIRE(chain.size() == chains.draws_per_chain());
    for (const auto& draw : chain) {
      CHECK(std::isfinite(draw[lp]));
      for (const std::string& id : pool.ids) {
        const double start = transition_start_level(synth.store.series.at(id), segs.at(id));
        const Phase2Params p = phase2_params_from_draw(chains, draw, id, start);
        CHECK(p.valid());
        const VarianceParams v = variance_from_draw(chains, draw);
        CHECK(v.valid());
      }
    }
  }

  // acceptance rates recorded per block
  CHECK(chains.acceptance_rates.count("var.sigma0") == 1);
  CHECK(chains.acceptance_rates.count("country." + pool.ids.front()) == 1);

  // bit-for-bit determinism under an identical configuration
  const ChainSet again = run_phase2_mcmc(synth.store, segs, config);
  REQUIRE(again.chains.size() == chains.chains.size());
  for (std::size_t c = 0; c < chains.chains.size(); ++c) {
    REQUIRE(again.chains[c].size() == chains.chains[c].size());
    for (std::size_t d = 0; d < chains.chains[c].size(); ++d)
      CHECK(again.chains[c][d] == chains.chains[c][d]);
  }

  // concurrent chains produce the identical result
  McmcConfig parallel = config;
  parallel.jobs = 2;
  const ChainSet par = run_phase2_mcmc(synth.store, segs, parallel);
  CHECK(par.chains == chains.chains);
}

TEST_CASE("phase2 mcmc: errors") {
  SyntheticTruth truth;
  truth.regime = SyntheticTruth::Regime::PhaseII;
  truth.start_level = 4.0;
  truth.zero_noise = true;
  const SyntheticResult synth = generate_synthetic(truth, 2, 8, 7);
  const auto segs = classify_all(synth.store, 2.1);

  SUBCASE("empty pool") {
    McmcConfig config = small_config(CountrySet{});
    CHECK_THROWS_AS(run_phase2_mcmc(synth.store, segs, config), std::invalid_argument);
  }
  SUBCASE("pool country missing from the store") {
    CountrySet pool;
    pool.ids = {"NOPE"};
    CHECK_THROWS_AS(run_phase2_mcmc(synth.store, segs, small_config(pool)),
                    std::invalid_argument);
  }
  SUBCASE("country without transitions") {
    DataStore store = synth.store;
    TfrSeries flat;
    flat.country_id = "FLT";
    flat.country_name = "Flat";
    flat.mode = SeriesMode::FiveYear;
    flat.observations = {{2015, 5, 1.2}};
    store.series.emplace("FLT", flat);
    auto segs2 = classify_all(store, 2.1);
    const CountrySet pool = select_pool(store, PoolCriterion::all());
    CHECK_THROWS_AS(run_phase2_mcmc(store, segs2, small_config(pool)), std::runtime_error);
  }
}
