#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "tfr/mcmc.hpp"

namespace tfr {

/// Hex digest (FNV-1a 64) of a byte string. Integrity check, not
/// cryptographic.
std::string hex_digest(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

/// Columnar chain output: header `chain,draw,<coordinate names...>`, one row
/// per recorded draw, shortest round-trip number formatting.
std::string chain_csv(const ChainSet& chains);

/// Sidecar manifest (JSON): seed, sampler settings, coordinate names, pool,
/// acceptance rates, digests of the chain CSV and of the input data.
struct ChainDataInfo {
  std::string path;
  std::string digest;
  int vintage_year = 0;
};
std::string chain_manifest_json(const ChainSet& chains, const std::string& csv_digest,
                                const ChainDataInfo& data);

/// Write chains + manifest next to each other (`<stem>.csv`,
/// `<stem>.manifest.json`).
void save_chain_set(const ChainSet& chains, const std::filesystem::path& csv_path,
                    const ChainDataInfo& data);

/// Reload a saved chain set. Verifies the CSV digest recorded in the
/// manifest and throws on mismatch.
ChainSet load_chain_set(const std::filesystem::path& csv_path,
                        const std::filesystem::path& manifest_path);

}  // namespace tfr
