#include "cityscale/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "cityscale/error.hpp"
#include "cityscale/numfmt.hpp"
#include "cityscale/tdist.hpp"

namespace cityscale {

namespace {

using json = nlohmann::json;

json number_json(double value) {
  if (!std::isfinite(value)) return nullptr;
  return round12(value);
}

}  // namespace

double round12(double value) {
  if (!std::isfinite(value)) return value;
  return *parse_number(format_number(value));
}

AttractivenessTable make_table(std::string dataset_tag, std::string layer,
                               std::vector<AttractivenessRow> rows) {
  AttractivenessTable table;
  table.dataset_tag = std::move(dataset_tag);
  table.layer = std::move(layer);
  for (const auto& row : rows) {
    if (!(row.population >= 1.0)) {
      throw InvalidArgument("region " + row.region_id + ": population must be >= 1");
    }
    if (!(row.activity >= 0.0)) {
      throw InvalidArgument("region " + row.region_id + ": negative activity");
    }
    table.total_activity += row.activity;
  }
  if (!(table.total_activity > 0.0)) {
    throw EmptyTableError("no foreign-visitor activity in any populated region");
  }
  for (auto& row : rows) row.share = row.activity / table.total_activity;
  table.rows = std::move(rows);
  return table;
}

AttractivenessTable compute_attractiveness(std::span<const EventRecord> events,
                                           std::span<const std::optional<std::size_t>> region_of,
                                           const OriginMap& origins,
                                           const std::string& target_country,
                                           const RegionLayer& layer,
                                           const std::string& dataset_tag,
                                           const EventFilter& filter, ForeignCounts* counts) {
  if (region_of.size() != events.size()) {
    throw InvalidArgument("region assignment does not match the event sequence");
  }
  ForeignCounts tally;
  std::vector<std::int64_t> per_region(layer.size(), 0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const EventRecord& e = events[i];
    if (filter && !filter(e)) continue;
    std::optional<std::string> origin;
    if (e.origin_country) {
      origin = e.origin_country;
    } else {
      auto it = origins.find(e.user_id);
      if (it == origins.end()) {
        throw InvalidArgument("user '" + e.user_id + "' has no origin entry");
      }
      origin = it->second;
    }
    if (!origin) {
      ++tally.undetermined;
      continue;
    }
    if (*origin == target_country) {
      ++tally.resident;
      continue;
    }
    if (!region_of[i]) {
      ++tally.foreign_outside_regions;
      continue;
    }
    if (!layer[*region_of[i]].population()) {
      ++tally.foreign_unpopulated;
      continue;
    }
    ++per_region[*region_of[i]];
    ++tally.foreign_in_regions;
  }
  if (counts) *counts = tally;

  std::vector<AttractivenessRow> rows;
  std::vector<std::string> missing;
  for (std::size_t r = 0; r < layer.size(); ++r) {
    const Region& region = layer[r];
    if (!region.population()) {
      missing.push_back(region.id());
      continue;
    }
    rows.push_back({region.id(), static_cast<double>(*region.population()),
                    static_cast<double>(per_region[r]), 0.0});
  }
  AttractivenessTable table = make_table(dataset_tag, layer.label(), std::move(rows));
  table.missing_population = std::move(missing);
  return table;
}

double ScalingFit::predict_log10(double population) const {
  return log_a + b * std::log10(population);
}

ScalingFit fit_power_law(std::span<const double> population, std::span<const double> share) {
  if (population.size() != share.size()) {
    throw InvalidArgument("population and attractiveness lengths differ");
  }
  ScalingFit fit;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < share.size(); ++i) {
    if (!(population[i] > 0.0)) throw InvalidArgument("population must be positive");
    if (share[i] < 0.0) throw InvalidArgument("attractiveness must be non-negative");
    if (share[i] == 0.0) {
      ++fit.excluded_zero;
      continue;
    }
    xs.push_back(std::log10(population[i]));
    ys.push_back(std::log10(share[i]));
  }
  const std::size_t n = xs.size();
  if (n < 3) {
    throw InsufficientDataError("power-law fit needs at least 3 points with A > 0, got " +
                                std::to_string(n));
  }
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) {
    throw DegenerateAbscissaError("all populations are identical");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  fit.n = n;
  fit.b = sxy / sxx;
  fit.log_a = my - fit.b * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (ys[i] - my) - fit.b * (xs[i] - mx);
    ss_res += e * e;
  }
  fit.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  fit.stderr_b = std::sqrt(ss_res / static_cast<double>(n - 2) / sxx);
  if (fit.stderr_b > 0.0) {
    fit.p_value = student_t_two_sided_p(fit.b / fit.stderr_b, static_cast<double>(n - 2));
  } else {
    fit.p_value = fit.b == 0.0 ? 1.0 : 0.0;
  }
  return fit;
}

ScalingFit fit_power_law(const AttractivenessTable& table) {
  std::vector<double> p, a;
  p.reserve(table.rows.size());
  a.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    p.push_back(row.population);
    a.push_back(row.share);
  }
  return fit_power_law(p, a);
}

BinnedTrend log_bin(const AttractivenessTable& table, std::size_t k) {
  if (k < 1) throw InvalidArgument("bin count must be at least 1");
  std::vector<std::pair<double, double>> points;  // (log10 p, A)
  for (const auto& row : table.rows) {
    if (row.share > 0.0) points.emplace_back(std::log10(row.population), row.share);
  }
  if (points.empty()) throw InsufficientDataError("log binning needs a row with A > 0");
  BinnedTrend trend;
  trend.k = k;
  auto [lo_it, hi_it] = std::minmax_element(
      points.begin(), points.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
  const double lo = lo_it->first;
  const double hi = hi_it->first;
  if (lo == hi) {
    double sum = 0.0;
    for (const auto& pt : points) sum += pt.second;
    trend.bins.push_back({lo, hi, std::pow(10.0, lo), sum / static_cast<double>(points.size()),
                          points.size()});
    return trend;
  }
  std::vector<double> edges(k + 1);
  for (std::size_t i = 0; i <= k; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k);
  }
  edges[k] = hi;
  std::vector<double> sums(k, 0.0);
  std::vector<std::size_t> members(k, 0);
  for (const auto& [x, a] : points) {
    // Left-closed bins; the top edge belongs to the last bin.
    auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
    std::size_t bin = static_cast<std::size_t>(it - (edges.begin() + 1));
    sums[bin] += a;
    ++members[bin];
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (members[i] == 0) continue;
    trend.bins.push_back({edges[i], edges[i + 1], std::pow(10.0, 0.5 * (edges[i] + edges[i + 1])),
                          sums[i] / static_cast<double>(members[i]), members[i]});
  }
  return trend;
}

ScalingFit fit_binned(const BinnedTrend& trend) {
  std::vector<double> p, a;
  for (const auto& bin : trend.bins) {
    p.push_back(bin.p_center);
    a.push_back(bin.mean_share);
  }
  return fit_power_law(p, a);
}

std::vector<ResidualScore> residuals(const AttractivenessTable& table, const ScalingFit& fit) {
  std::vector<ResidualScore> out;
  for (const auto& row : table.rows) {
    if (row.share <= 0.0) continue;
    out.push_back({row.region_id,
                   std::log10(row.share) - fit.b * std::log10(row.population) - fit.log_a});
  }
  std::sort(out.begin(), out.end(), [](const ResidualScore& l, const ResidualScore& r) {
    if (l.res != r.res) return l.res > r.res;
    return l.region_id < r.region_id;
  });
  return out;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("pearson: lengths differ");
  if (xs.size() < 2) throw InsufficientDataError("pearson: need at least 2 pairs");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelationError("pearson: zero variance");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ResidualCorrelation correlate_residuals(std::span<const ResidualScore> a,
                                        std::span<const ResidualScore> b) {
  std::map<std::string, double> left;
  for (const auto& s : a) left.emplace(s.region_id, s.res);
  std::map<std::string, double> right;
  for (const auto& s : b) right.emplace(s.region_id, s.res);
  ResidualCorrelation out;
  std::vector<double> xs, ys;
  for (const auto& [id, res] : left) {
    auto it = right.find(id);
    if (it == right.end()) {
      ++out.only_in_a;
      continue;
    }
    xs.push_back(res);
    ys.push_back(it->second);
  }
  out.common = xs.size();
  out.only_in_b = right.size() - out.common;
  if (out.common < 2) {
    throw InsufficientDataError("residual lists share " + std::to_string(out.common) +
                                " region(s); need at least 2");
  }
  out.r = pearson(xs, ys);
  return out;
}

void write_table_csv(std::ostream& out, const AttractivenessTable& table) {
  out << "region_id,population,activity,A\n";
  for (const auto& row : table.rows) {
    out << row.region_id << ',' << format_number(row.population) << ','
        << format_number(row.activity) << ',' << format_number(row.share) << '\n';
  }
}

AttractivenessTable read_table_csv(std::istream& in, std::string dataset_tag, std::string layer) {
  std::string line;
  if (!std::getline(in, line) || chomp(line) != "region_id,population,activity,A") {
    throw ParseError(1, "unexpected attractiveness table header");
  }
  std::vector<AttractivenessRow> rows;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    auto text = chomp(line);
    if (text.empty()) continue;
    auto fields = split_csv(text);
    if (fields.size() != 4) throw ParseError(row_no, "field count mismatch");
    auto p = parse_number(fields[1]);
    auto act = parse_number(fields[2]);
    if (!p || !act) throw ParseError(row_no, "bad number");
    rows.push_back({std::string(fields[0]), *p, *act, 0.0});
  }
  // Shares are recomputed from activity so the table sums to one.
  return make_table(std::move(dataset_tag), std::move(layer), std::move(rows));
}

std::string fit_to_json(const ScalingFit& fit, const std::string& dataset, const std::string& layer) {
  json out = {{"dataset", dataset},
              {"layer", layer},
              {"b", number_json(fit.b)},
              {"log_a", number_json(fit.log_a)},
              {"r2", number_json(fit.r2)},
              {"p_value", number_json(fit.p_value)},
              {"stderr_b", number_json(fit.stderr_b)},
              {"n", fit.n},
              {"excluded_zero_A", fit.excluded_zero}};
  return out.dump(2);
}

void write_binned_csv(std::ostream& out, const BinnedTrend& trend) {
  out << "p_center,mean_A,member_count\n";
  for (const auto& bin : trend.bins) {
    out << format_number(bin.p_center) << ',' << format_number(bin.mean_share) << ','
        << bin.member_count << '\n';
  }
}

void write_residuals_csv(std::ostream& out, std::span<const ResidualScore> scores) {
  out << "region_id,res\n";
  for (const auto& s : scores) out << s.region_id << ',' << format_number(s.res) << '\n';
}

std::vector<ResidualScore> read_residuals_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || chomp(line) != "region_id,res") {
    throw ParseError(1, "unexpected residuals header");
  }
  std::vector<ResidualScore> out;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    auto text = chomp(line);
    if (text.empty()) continue;
    auto fields = split_csv(text);
    if (fields.size() != 2) throw ParseError(row_no, "field count mismatch");
    auto res = parse_number(fields[1]);
    if (!res) throw ParseError(row_no, "bad residual");
    out.push_back({std::string(fields[0]), *res});
  }
  return out;
}

void write_scatter_csv(std::ostream& out, const AttractivenessTable& table, const ScalingFit& fit,
                       const BinnedTrend& trend) {
  out << "kind,label,log10_p,log10_A,log10_A_fit\n";
  for (const auto& row : table.rows) {
    if (row.share <= 0.0) continue;
    out << "city," << row.region_id << ',' << format_number(std::log10(row.population)) << ','
        << format_number(std::log10(row.share)) << ','
        << format_number(fit.predict_log10(row.population)) << '\n';
  }
  for (std::size_t i = 0; i < trend.bins.size(); ++i) {
    const auto& bin = trend.bins[i];
    out << "bin,bin" << i << ',' << format_number(std::log10(bin.p_center)) << ','
        << format_number(std::log10(bin.mean_share)) << ','
        << format_number(fit.predict_log10(bin.p_center)) << '\n';
  }
}

}  // namespace cityscale
