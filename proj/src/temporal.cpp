#include "cityscale/temporal.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "cityscale/error.hpp"
#include "cityscale/numfmt.hpp"
#include "cityscale/parallel.hpp"

namespace cityscale {

std::array<unsigned, 3> season_months(unsigned center_month) {
  if (center_month < 1 || center_month > 12) throw InvalidArgument("month must be in 1..12");
  return {(center_month + 10) % 12 + 1, center_month, center_month % 12 + 1};
}

unsigned utc_month(Timestamp ts) {
  std::chrono::year_month_day date{std::chrono::floor<std::chrono::days>(ts)};
  return static_cast<unsigned>(date.month());
}

WindowedExponents window_exponents(std::span<const EventRecord> events,
                                   std::span<const std::optional<std::size_t>> region_of,
                                   const OriginMap& origins, const RegionLayer& layer,
                                   const std::string& target_country,
                                   const std::string& dataset_tag, unsigned threads) {
  WindowedExponents out;
  out.windows.resize(12);
  for_each_shard(12, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t w = begin; w < end; ++w) {
      SeasonWindow& window = out.windows[w];
      window.center_month = static_cast<unsigned>(w + 1);
      window.months = season_months(window.center_month);
      const auto months = window.months;
      auto in_window = [months](const EventRecord& e) {
        const unsigned m = utc_month(e.timestamp);
        return m == months[0] || m == months[1] || m == months[2];
      };
      try {
        auto table = compute_attractiveness(events, region_of, origins, target_country, layer,
                                            dataset_tag, in_window);
        window.fit = fit_power_law(table);
      } catch (const EmptyTableError& e) {
        window.failure = e.what();
      } catch (const InsufficientDataError& e) {
        window.failure = e.what();
      } catch (const DegenerateAbscissaError& e) {
        window.failure = e.what();
      }
    }
  });
  double sum = 0.0;
  std::size_t fitted = 0;
  for (const auto& window : out.windows) {
    if (!window.fit) continue;
    sum += window.fit->b;
    ++fitted;
  }
  out.insufficient = 12 - fitted;
  if (fitted == 0) throw InsufficientDataError("no season window has enough data to fit");
  out.mean_b = sum / static_cast<double>(fitted);
  for (auto& window : out.windows) {
    window.normalized =
        window.fit ? window.fit->b / out.mean_b : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

void write_temporal_csv(std::ostream& out, const WindowedExponents& series) {
  out << "center_month,b,b_normalized,n,r2,p_value\n";
  for (const auto& w : series.windows) {
    out << w.center_month << ',';
    if (w.fit) {
      out << format_number(w.fit->b) << ',' << format_number(w.normalized) << ',' << w.fit->n
          << ',' << format_number(w.fit->r2) << ',' << format_number(w.fit->p_value) << '\n';
    } else {
      out << "NA,NA,0,NA,NA\n";
    }
  }
}

std::string temporal_to_json(const WindowedExponents& series, const std::string& dataset,
                             const std::string& layer) {
  using json = nlohmann::json;
  json windows = json::array();
  unsigned min_month = 0;
  double min_value = std::numeric_limits<double>::infinity();
  for (const auto& w : series.windows) {
    json entry = {{"center_month", w.center_month},
                  {"months", {w.months[0], w.months[1], w.months[2]}}};
    if (w.fit) {
      entry["b"] = round12(w.fit->b);
      entry["b_normalized"] = round12(w.normalized);
      entry["stderr_b"] = round12(w.fit->stderr_b);
      entry["n"] = w.fit->n;
      if (w.normalized < min_value) {
        min_value = w.normalized;
        min_month = w.center_month;
      }
    } else {
      entry["insufficient"] = w.failure;
    }
    windows.push_back(std::move(entry));
  }
  json out = {{"dataset", dataset},
              {"layer", layer},
              {"mean_b", round12(series.mean_b)},
              {"windows_insufficient", series.insufficient},
              {"min_center_month", min_month},
              {"windows", windows}};
  return out.dump(2);
}

}  // namespace cityscale
