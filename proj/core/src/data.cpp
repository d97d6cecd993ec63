#include "tfr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace tfr {

int period_length_of(SeriesMode mode) { return mode == SeriesMode::Annual ? 1 : 5; }

std::string to_string(SeriesMode mode) {
  return mode == SeriesMode::Annual ? "annual" : "five-year";
}

SeriesMode series_mode_from_string(std::string_view text) {
  if (text == "annual") return SeriesMode::Annual;
  if (text == "five-year" || text == "five_year") return SeriesMode::FiveYear;
  throw std::invalid_argument("unknown series mode: " + std::string(text));
}

double TfrSeries::last_tfr() const {
  if (observations.empty()) throw std::logic_error("last_tfr on empty series");
  return observations.back().tfr;
}

int TfrSeries::last_period_start() const {
  if (observations.empty()) throw std::logic_error("last_period_start on empty series");
  return observations.back().period_start;
}

std::optional<std::size_t> TfrSeries::index_of_period(int period_start) const {
  for (std::size_t i = 0; i < observations.size(); ++i)
    if (observations[i].period_start == period_start) return i;
  return std::nullopt;
}

bool CountrySet::contains(std::string_view id) const {
  return std::binary_search(ids.begin(), ids.end(), id);
}

namespace {

constexpr std::string_view kHeader = "country_id,country_name,year,tfr";

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

DataStore parse_tfr_csv(std::istream& in, SeriesMode mode, std::string source_label) {
  const int len = period_length_of(mode);
  DataStore store;
  store.metadata.source_label = std::move(source_label);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input: missing header row");
  strip_cr(line);
  if (line != kHeader)
    throw ParseError("line 1: expected header '" + std::string(kHeader) + "', got '" + line +
                     "'");

  struct Row {
    int year;
    double tfr;
    std::size_t line_no;
  };
  std::map<std::string, std::string> names;
  std::map<std::string, std::vector<Row>> rows;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 4)
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    const std::string id(fields[0]);
    if (id.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty country_id");

    int year = 0;
    {
      auto [p, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), year);
      if (ec != std::errc() || p != fields[2].data() + fields[2].size())
        throw ParseError("line " + std::to_string(line_no) + ": malformed year '" +
                         std::string(fields[2]) + "'");
    }
    double tfr = 0.0;
    {
      auto [p, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), tfr);
      if (ec != std::errc() || p != fields[3].data() + fields[3].size() || !std::isfinite(tfr))
        throw ParseError("line " + std::to_string(line_no) + ": malformed tfr '" +
                         std::string(fields[3]) + "'");
    }
    if (tfr <= 0.0)
      throw ParseError("line " + std::to_string(line_no) + ": non-positive tfr for " + id +
                       " in " + std::to_string(year));

    auto [name_it, inserted] = names.emplace(id, std::string(fields[1]));
    if (!inserted && name_it->second != fields[1])
      throw ParseError("line " + std::to_string(line_no) + ": conflicting country_name for " +
                       id);
    rows[id].push_back({year, tfr, line_no});
  }
  if (rows.empty()) throw ParseError("no data rows");

  int max_year = 0;
  for (auto& [id, country_rows] : rows) {
    std::sort(country_rows.begin(), country_rows.end(),
              [](const Row& a, const Row& b) { return a.year < b.year; });
    TfrSeries series;
    series.country_id = id;
    series.country_name = names[id];
    series.mode = mode;
    series.observations.reserve(country_rows.size());
    for (std::size_t i = 0; i < country_rows.size(); ++i) {
      if (i > 0) {
        const int gap = country_rows[i].year - country_rows[i - 1].year;
        if (gap == 0)
          throw ParseError("duplicate (country, period) for " + id + " at year " +
                           std::to_string(country_rows[i].year));
        if (gap != len)
          throw ParseError("gap in periods for " + id + ": " +
                           std::to_string(country_rows[i - 1].year) + " -> " +
                           std::to_string(country_rows[i].year) + " (expected spacing " +
                           std::to_string(len) + ")");
      }
      series.observations.push_back({country_rows[i].year, len, country_rows[i].tfr});
      max_year = std::max(max_year, country_rows[i].year);
    }
    store.series.emplace(id, std::move(series));
  }
  store.metadata.vintage_year = max_year;
  return store;
}

DataStore load_tfr_csv(const std::filesystem::path& path, SeriesMode mode) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file: " + path.string());
  return parse_tfr_csv(in, mode, path.filename().string());
}

std::string serialize_tfr_csv(const DataStore& store) {
  std::string out(kHeader);
  out.push_back('\n');
  for (const auto& [id, series] : store.series) {
    for (const Observation& obs : series.observations) {
      out += id;
      out.push_back(',');
      out += series.country_name;
      out.push_back(',');
      out += std::to_string(obs.period_start);
      out.push_back(',');
      out += format_double(obs.tfr);
      out.push_back('\n');
    }
  }
  return out;
}

TfrSeries five_year_average(const TfrSeries& annual) {
  if (annual.mode != SeriesMode::Annual)
    throw std::invalid_argument("five_year_average: series is not annual");
  if (annual.observations.size() < 5)
    throw std::invalid_argument("five_year_average: series shorter than 5 annual observations (" +
                                annual.country_id + ")");
  TfrSeries out;
  out.country_id = annual.country_id;
  out.country_name = annual.country_name;
  out.mode = SeriesMode::FiveYear;
  const std::size_t blocks = annual.observations.size() / 5;
  out.observations.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 5; ++j) sum += annual.observations[5 * b + j].tfr;
    out.observations.push_back({annual.observations[5 * b].period_start, 5, sum / 5.0});
  }
  return out;
}

namespace {

// Trough index of the first run of two consecutive strict increases with all
// three values below the threshold, at or after `from`.
std::optional<std::size_t> find_phase3_start(const std::vector<Observation>& obs,
                                             std::size_t from, double threshold) {
  if (obs.size() < 3) return std::nullopt;
  for (std::size_t m = from; m + 2 < obs.size(); ++m) {
    const double v0 = obs[m].tfr, v1 = obs[m + 1].tfr, v2 = obs[m + 2].tfr;
    if (v0 < threshold && v1 < threshold && v2 < threshold && v0 < v1 && v1 < v2) return m;
  }
  return std::nullopt;
}

}  // namespace

PhaseSegmentation classify_phases(const TfrSeries& series, double threshold) {
  if (series.observations.empty())
    throw std::invalid_argument("classify_phases: empty series (" + series.country_id + ")");

  PhaseSegmentation seg;
  seg.threshold = threshold;

  const auto& obs = series.observations;
  seg.phase2_start = static_cast<std::size_t>(
      std::max_element(obs.begin(), obs.end(),
                       [](const Observation& a, const Observation& b) { return a.tfr < b.tfr; }) -
      obs.begin());

  if (series.mode == SeriesMode::FiveYear) {
    seg.phase3_start = find_phase3_start(obs, seg.phase2_start, threshold);
    return seg;
  }

  // Annual: decide the trough on five-year block means, then map the trough
  // block back to its first annual year.
  if (obs.size() >= 5) {
    const TfrSeries averaged = five_year_average(series);
    const PhaseSegmentation block_seg = classify_phases(averaged, threshold);
    if (block_seg.phase3_start) {
      const std::size_t annual_index = *block_seg.phase3_start * 5;
      if (annual_index >= seg.phase2_start) seg.phase3_start = annual_index;
    }
  }
  return seg;
}

std::map<std::string, PhaseSegmentation> classify_all(const DataStore& store, double threshold) {
  std::map<std::string, PhaseSegmentation> out;
  for (const auto& [id, series] : store.series) out.emplace(id, classify_phases(series, threshold));
  return out;
}

CountrySet select_pool(const DataStore& store, const PoolCriterion& criterion) {
  CountrySet set;
  set.criterion = criterion;
  for (const auto& [id, series] : store.series) {
    if (criterion.kind == PoolCriterion::Kind::All) {
      set.ids.push_back(id);
      continue;
    }
    double value = 0.0;
    if (criterion.reference_period_start) {
      const auto idx = series.index_of_period(*criterion.reference_period_start);
      if (!idx) continue;  // country lacks the reference period: excluded, not an error
      value = series.observations[*idx].tfr;
    } else {
      value = series.last_tfr();
    }
    if (value <= criterion.threshold) set.ids.push_back(id);
  }
  if (set.ids.empty()) throw std::runtime_error("select_pool: empty pool");
  return set;
}

DataStore truncate_store(const DataStore& store, int cutoff_year) {
  DataStore out;
  out.metadata = store.metadata;
  int max_year = 0;
  for (const auto& [id, series] : store.series) {
    TfrSeries cut = series;
    cut.observations.clear();
    for (const Observation& obs : series.observations) {
      if (obs.period_start + obs.period_length <= cutoff_year) {
        cut.observations.push_back(obs);
        max_year = std::max(max_year, obs.period_start);
      }
    }
    if (!cut.observations.empty()) out.series.emplace(id, std::move(cut));
  }
  out.metadata.vintage_year = max_year;
  return out;
}

}  // namespace tfr
