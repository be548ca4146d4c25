#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cityscale/scaling.hpp"

namespace cityscale {

struct SeasonWindow {
  unsigned center_month = 1;      // 1..12
  std::array<unsigned, 3> months{};  // previous, center, next (wrapping)
  std::optional<ScalingFit> fit;  // nullopt: insufficient data in the window
  std::string failure;            // why the window was not fitted
  double normalized = 0.0;        // b / mean b over fitted windows; NaN if unfitted
};

struct WindowedExponents {
  std::vector<SeasonWindow> windows;  // exactly 12, by center month
  double mean_b = 0.0;
  std::size_t insufficient = 0;
};

// Three consecutive calendar months (UTC) centred on `center_month`,
// wrapping across the year boundary.
std::array<unsigned, 3> season_months(unsigned center_month);
unsigned utc_month(Timestamp ts);

// Fits the scaling law on each of the 12 month-by-month shifted seasons and
// normalizes the exponents by their mean. Windows run concurrently up to
// `threads`; results are independent of the thread count.
WindowedExponents window_exponents(std::span<const EventRecord> events,
                                   std::span<const std::optional<std::size_t>> region_of,
                                   const OriginMap& origins, const RegionLayer& layer,
                                   const std::string& target_country,
                                   const std::string& dataset_tag = {}, unsigned threads = 1);

void write_temporal_csv(std::ostream& out, const WindowedExponents& series);
std::string temporal_to_json(const WindowedExponents& series, const std::string& dataset,
                             const std::string& layer);

}  // namespace cityscale
