#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tfr/chain_io.hpp"
#include "tfr/rng.hpp"

using namespace tfr;

namespace {

ChainSet tiny_chains() {
  ChainSet set;
  set.kind = "phase3";
  set.mode = SeriesMode::FiveYear;
  set.coordinate_names = {"lp", "hyper.mu_bar", "country.AAA.mu"};
  set.iterations = 20;
  set.burn_in = 10;
  set.thin = 2;
  set.chain_count = 2;
  set.seed = 31;
  set.pool_ids = {"AAA"};
  set.acceptance_rates = {{"hyper.mu", 0.31}};
  RngStream rng = derive_stream(77, {1});
  set.chains.resize(2);
  for (auto& chain : set.chains)
    for (int i = 0; i < 5; ++i)
      chain.push_back({rng.normal(), rng.u01(), 0.1 + rng.u01()});
  return set;
}

}  // namespace

TEST_CASE("chain csv + manifest round-trip preserves every draw exactly") {
  const ChainSet original = tiny_chains();
  const auto dir = std::filesystem::temp_directory_path() / "tfr_chain_io_test";
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / "phase3.csv";
  save_chain_set(original, csv_path, {"data.csv", "abc123", 2020});

  const ChainSet loaded = load_chain_set(csv_path, dir / "phase3.manifest.json");
  CHECK(loaded.kind == original.kind);
  CHECK(loaded.coordinate_names == original.coordinate_names);
  CHECK(loaded.seed == original.seed);
  CHECK(loaded.thin == original.thin);
  CHECK(loaded.pool_ids == original.pool_ids);
  REQUIRE(loaded.chains.size() == original.chains.size());
  for (std::size_t c = 0; c < original.chains.size(); ++c)
    CHECK(loaded.chains[c] == original.chains[c]);  // exact doubles via to_chars
  CHECK(loaded.acceptance_rates.at("hyper.mu") == doctest::Approx(0.31));
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupted chain csv is rejected by the digest check") {
  const ChainSet original = tiny_chains();
  const auto dir = std::filesystem::temp_directory_path() / "tfr_chain_io_corrupt";
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / "phase3.csv";
  save_chain_set(original, csv_path, {"data.csv", "abc123", 2020});

  {
    std::fstream f(csv_path, std::ios::in | std::ios::out);
    f.seekp(40);
    f.put('7');
  }
  CHECK_THROWS_WITH_AS(load_chain_set(csv_path, dir / "phase3.manifest.json"),
                       doctest::Contains("digest mismatch"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("digest helper is stable") {
  CHECK(hex_digest("") == hex_digest(""));
  CHECK(hex_digest("a") != hex_digest("b"));
  CHECK(hex_digest("chain").size() == 16);
}
