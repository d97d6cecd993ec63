#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tfr {

/// One observed TFR value covering [period_start, period_start + period_length).
struct Observation {
  int period_start = 0;
  int period_length = 5;
  double tfr = 0.0;
};

enum class SeriesMode { Annual, FiveYear };

int period_length_of(SeriesMode mode);
std::string to_string(SeriesMode mode);
SeriesMode series_mode_from_string(std::string_view text);

/// A single country's observed TFR history. Observations are strictly
/// increasing in period_start, gap-free, and share one period length.
struct TfrSeries {
  std::string country_id;
  std::string country_name;
  SeriesMode mode = SeriesMode::FiveYear;
  std::vector<Observation> observations;

  double last_tfr() const;
  int last_period_start() const;
  std::optional<std::size_t> index_of_period(int period_start) const;
};

/// Segmentation of a series into fertility-transition phases.
/// phase2_start is the index of the global maximum (earliest on ties).
/// phase3_start, when present, is the trough preceding two consecutive
/// increases that all stay below `threshold`.
struct PhaseSegmentation {
  std::size_t phase2_start = 0;
  std::optional<std::size_t> phase3_start;
  double threshold = 2.1;
};

struct StoreMetadata {
  std::string source_label;
  int vintage_year = 0;
};

struct DataStore {
  std::map<std::string, TfrSeries> series;
  StoreMetadata metadata;
};

struct PoolCriterion {
  enum class Kind { All, LowFertility };
  Kind kind = Kind::All;
  double threshold = 1.5;
  /// Period whose TFR is compared against the threshold. Unset means the
  /// last observed period of each series.
  std::optional<int> reference_period_start;

  static PoolCriterion all() { return {}; }
  static PoolCriterion low_fertility(double threshold,
                                     std::optional<int> reference_period_start = {}) {
    return {Kind::LowFertility, threshold, reference_period_start};
  }
};

struct CountrySet {
  std::vector<std::string> ids;  // sorted, unique
  PoolCriterion criterion;

  bool contains(std::string_view id) const;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse the documented CSV format (header `country_id,country_name,year,tfr`).
/// Rows may arrive in any order; observations are sorted per country and the
/// spacing is validated against the declared mode.
DataStore parse_tfr_csv(std::istream& in, SeriesMode mode, std::string source_label = {});
DataStore load_tfr_csv(const std::filesystem::path& path, SeriesMode mode);

/// Canonical serialization: rows sorted by (country_id, year), shortest
/// round-trip number formatting. parse -> serialize is byte-stable for files
/// already in canonical form.
std::string serialize_tfr_csv(const DataStore& store);

/// Collapse an annual series into non-overlapping five-year block means.
/// A trailing partial block is dropped.
TfrSeries five_year_average(const TfrSeries& annual);

/// Classify a series into phases. Annual series are averaged into five-year
/// blocks to locate the Phase III trough; the trough block maps back to its
/// first annual year.
PhaseSegmentation classify_phases(const TfrSeries& series, double threshold = 2.1);

std::map<std::string, PhaseSegmentation> classify_all(const DataStore& store,
                                                      double threshold = 2.1);

/// Select the hierarchical pool. Throws std::runtime_error on an empty result.
CountrySet select_pool(const DataStore& store, const PoolCriterion& criterion);

/// Drop every observation whose period ends after `cutoff_year`; countries
/// left without observations are removed.
DataStore truncate_store(const DataStore& store, int cutoff_year);

}  // namespace tfr
