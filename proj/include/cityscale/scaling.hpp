#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cityscale/event.hpp"
#include "cityscale/geo.hpp"
#include "cityscale/home.hpp"

namespace cityscale {

struct AttractivenessRow {
  std::string region_id;
  double population = 0.0;  // persons, >= 1
  double activity = 0.0;    // foreign-visitor events (or raw synthetic activity)
  double share = 0.0;       // A: activity / table total

  friend bool operator==(const AttractivenessRow&, const AttractivenessRow&) = default;
};

struct AttractivenessTable {
  std::string dataset_tag;
  std::string layer;
  std::vector<AttractivenessRow> rows;  // layer order
  double total_activity = 0.0;
  // Regions dropped because the layer carries no population for them.
  std::vector<std::string> missing_population;

  friend bool operator==(const AttractivenessTable&, const AttractivenessTable&) = default;
};

// Builds rows from raw activity; throws EmptyTableError when the total is 0.
AttractivenessTable make_table(std::string dataset_tag, std::string layer,
                               std::vector<AttractivenessRow> rows);

// Event tallies behind an attractiveness table.
struct ForeignCounts {
  std::int64_t foreign_in_regions = 0;
  std::int64_t foreign_outside_regions = 0;
  std::int64_t foreign_unpopulated = 0;
  std::int64_t resident = 0;
  std::int64_t undetermined = 0;
};

using EventFilter = std::function<bool(const EventRecord&)>;

// Counts events whose resolved origin (declared, else the owner's inferred
// home) is known and differs from target_country, per populated region, and
// normalizes to shares. `region_of` is aligned with `events`.
AttractivenessTable compute_attractiveness(std::span<const EventRecord> events,
                                           std::span<const std::optional<std::size_t>> region_of,
                                           const OriginMap& origins,
                                           const std::string& target_country,
                                           const RegionLayer& layer,
                                           const std::string& dataset_tag,
                                           const EventFilter& filter = {},
                                           ForeignCounts* counts = nullptr);

struct ScalingFit {
  double log_a = 0.0;  // log10 intercept
  double b = 0.0;      // scaling exponent
  double r2 = 0.0;
  double p_value = 1.0;
  double stderr_b = 0.0;
  std::size_t n = 0;
  std::size_t excluded_zero = 0;  // rows with A == 0 left out of the fit

  double predict_log10(double population) const;
};

// OLS of log10(A) on log10(p) over rows with A > 0. Slope significance is a
// two-sided t-test with n - 2 degrees of freedom.
ScalingFit fit_power_law(const AttractivenessTable& table);
ScalingFit fit_power_law(std::span<const double> population, std::span<const double> share);

struct TrendBin {
  double lo_log10_p = 0.0;
  double hi_log10_p = 0.0;
  double p_center = 0.0;  // 10^((lo + hi) / 2)
  double mean_share = 0.0;
  std::size_t member_count = 0;
};

struct BinnedTrend {
  std::vector<TrendBin> bins;  // ordered by p_center, empty bins omitted
  std::size_t k = 0;
};

// k bins equally spaced in log10(p) between the smallest and largest
// population among rows with A > 0; the last bin is closed on the right.
BinnedTrend log_bin(const AttractivenessTable& table, std::size_t k = 5);

// Unweighted fit through the non-empty bins (p_center, mean A).
ScalingFit fit_binned(const BinnedTrend& trend);

struct ResidualScore {
  std::string region_id;
  double res = 0.0;
};

// log10(A) - b log10(p) - log_a for each row with A > 0, sorted by res
// descending (ties by region id).
std::vector<ResidualScore> residuals(const AttractivenessTable& table, const ScalingFit& fit);

double pearson(std::span<const double> xs, std::span<const double> ys);

struct ResidualCorrelation {
  double r = 0.0;
  std::size_t common = 0;
  std::size_t only_in_a = 0;
  std::size_t only_in_b = 0;
};

// Pearson over the region ids present in both lists.
ResidualCorrelation correlate_residuals(std::span<const ResidualScore> a,
                                        std::span<const ResidualScore> b);

// Rounds to the 12 significant digits used by every text output.
double round12(double value);

void write_table_csv(std::ostream& out, const AttractivenessTable& table);
AttractivenessTable read_table_csv(std::istream& in, std::string dataset_tag = {},
                                   std::string layer = {});
std::string fit_to_json(const ScalingFit& fit, const std::string& dataset, const std::string& layer);
void write_binned_csv(std::ostream& out, const BinnedTrend& trend);
void write_residuals_csv(std::ostream& out, std::span<const ResidualScore> scores);
std::vector<ResidualScore> read_residuals_csv(std::istream& in);
// Fitted-line and binned-trend points in log10 space, one row per city and
// per bin.
void write_scatter_csv(std::ostream& out, const AttractivenessTable& table, const ScalingFit& fit,
                       const BinnedTrend& trend);

}  // namespace cityscale
