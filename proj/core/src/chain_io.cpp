#include "tfr/chain_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tfr/rng.hpp"
#include "tfr/version.hpp"

namespace tfr {

namespace {

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::string hex_digest(std::string_view bytes) {
  const std::uint64_t h = fnv1a64(bytes);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

std::string file_digest(const std::filesystem::path& path) {
  return hex_digest(read_file(path));
}

std::string chain_csv(const ChainSet& chains) {
  std::string out = "chain,draw";
  for (const std::string& name : chains.coordinate_names) {
    out.push_back(',');
    out += name;
  }
  out.push_back('\n');
  for (std::size_t c = 0; c < chains.chains.size(); ++c) {
    for (std::size_t d = 0; d < chains.chains[c].size(); ++d) {
      out += std::to_string(c);
      out.push_back(',');
      out += std::to_string(d);
      for (double value : chains.chains[c][d]) {
        out.push_back(',');
        out += format_double(value);
      }
      out.push_back('\n');
    }
  }
  return out;
}

std::string chain_manifest_json(const ChainSet& chains, const std::string& csv_digest,
                                const ChainDataInfo& data) {
  nlohmann::json j;
  j["tool_version"] = kVersion;
  j["kind"] = chains.kind;
  j["mode"] = to_string(chains.mode);
  j["seed"] = chains.seed;
  j["iterations"] = chains.iterations;
  j["burn_in"] = chains.burn_in;
  j["thin"] = chains.thin;
  j["chain_count"] = chains.chain_count;
  j["coordinate_names"] = chains.coordinate_names;
  j["pool_ids"] = chains.pool_ids;
  j["acceptance_rates"] = chains.acceptance_rates;
  j["csv_digest"] = csv_digest;
  j["digest_algorithm"] = "fnv1a-64";
  j["data"] = {{"path", data.path}, {"digest", data.digest}, {"vintage_year", data.vintage_year}};
  return j.dump(2) + "\n";
}

void save_chain_set(const ChainSet& chains, const std::filesystem::path& csv_path,
                    const ChainDataInfo& data) {
  const std::string csv = chain_csv(chains);
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    out << csv;
  }
  std::filesystem::path manifest_path = csv_path;
  manifest_path.replace_extension(".manifest.json");
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
  out << chain_manifest_json(chains, hex_digest(csv), data);
}

ChainSet load_chain_set(const std::filesystem::path& csv_path,
                        const std::filesystem::path& manifest_path) {
  const std::string manifest_text = read_file(manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(manifest_text);

  const std::string csv = read_file(csv_path);
  const std::string expected = manifest.at("csv_digest").get<std::string>();
  if (hex_digest(csv) != expected)
    throw std::runtime_error("chain file digest mismatch for " + csv_path.string() +
                             " (expected " + expected + ", got " + hex_digest(csv) + ")");

  ChainSet chains;
  chains.kind = manifest.at("kind").get<std::string>();
  chains.mode = series_mode_from_string(manifest.at("mode").get<std::string>());
  chains.seed = manifest.at("seed").get<std::uint64_t>();
  chains.iterations = manifest.at("iterations").get<int>();
  chains.burn_in = manifest.at("burn_in").get<int>();
  chains.thin = manifest.at("thin").get<int>();
  chains.chain_count = manifest.at("chain_count").get<int>();
  chains.coordinate_names = manifest.at("coordinate_names").get<std::vector<std::string>>();
  chains.pool_ids = manifest.at("pool_ids").get<std::vector<std::string>>();
  for (const auto& [name, rate] : manifest.at("acceptance_rates").items())
    chains.acceptance_rates[name] = rate.get<double>();

  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty chain csv");
  chains.chains.assign(chains.chain_count, {});
  const std::size_t n_coords = chains.coordinate_names.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    values.reserve(n_coords);
    std::size_t pos = 0, field = 0;
    std::size_t chain_index = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string_view token(line.data() + pos, comma - pos);
      if (field == 0) {
        chain_index = std::stoul(std::string(token));
      } else if (field >= 2) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc())
          throw std::runtime_error("malformed chain csv value: " + std::string(token));
        values.push_back(v);
      }
      ++field;
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (values.size() != n_coords)
      throw std::runtime_error("chain csv row has wrong number of coordinates");
    if (chain_index >= chains.chains.size())
      throw std::runtime_error("chain csv row references unknown chain");
    chains.chains[chain_index].push_back(std::move(values));
  }
  return chains;
}

}  // namespace tfr
