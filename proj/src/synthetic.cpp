#include "cityscale/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "cityscale/error.hpp"
#include "cityscale/parallel.hpp"
#include "cityscale/rng.hpp"

namespace cityscale {

namespace {

using json = nlohmann::json;

// Substream ids under the spec seed.
constexpr std::uint64_t kTableStream = 1;
constexpr std::uint64_t kVisitStream = 2;
constexpr std::uint64_t kResidentStream = 3;
constexpr std::uint64_t kHomeStream = 4;

// Average number of city events per synthetic user.
constexpr std::int64_t kEventsPerUser = 25;

// City squares sit on a grid inside the target-country box.
constexpr double kCitySide = 0.1;
constexpr double kCityStep = 0.2;
constexpr double kGridLat = 37.0;
constexpr double kGridLon = -7.5;
constexpr std::size_t kMaxRegions = 1000;

constexpr BBox kTargetBox{35.5, -10.0, 44.0, 4.5};

struct Homeland {
  const char* code;
  BBox box;
};

// Disjoint from each other and from kTargetBox.
constexpr std::array<Homeland, 6> kHomelands = {{
    {"DE", {50.5, 6.0, 54.5, 14.0}},
    {"FR", {44.5, -4.0, 50.0, 8.0}},
    {"GB", {51.0, -8.0, 58.0, -0.5}},
    {"IT", {38.0, 9.0, 46.0, 18.0}},
    {"NL", {51.0, 3.5, 53.4, 5.5}},
    {"US", {30.0, -120.0, 45.0, -75.0}},
}};

std::string padded(char prefix, std::uint64_t value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06llu", prefix, static_cast<unsigned long long>(value));
  return buf;
}

BBox city_box(std::size_t index, std::size_t columns) {
  const double lat0 = kGridLat + kCityStep * static_cast<double>(index / columns);
  const double lon0 = kGridLon + kCityStep * static_cast<double>(index % columns);
  return {lat0, lon0, lat0 + kCitySide, lon0 + kCitySide};
}

std::size_t grid_columns(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
}

LatLon point_in_box(CounterRng& rng, const BBox& box) {
  const double lat = box.min_lat + rng.uniform() * (box.max_lat - box.min_lat);
  const double lon = box.min_lon + rng.uniform() * (box.max_lon - box.min_lon);
  return {lat, lon};
}

BBox shrink(const BBox& box, double fraction) {
  const double dlat = (box.max_lat - box.min_lat) * fraction;
  const double dlon = (box.max_lon - box.min_lon) * fraction;
  return {box.min_lat + dlat, box.min_lon + dlon, box.max_lat - dlat, box.max_lon - dlon};
}

Timestamp time_in_month(CounterRng& rng, int year, unsigned month) {
  using namespace std::chrono;
  const sys_days start{std::chrono::year{year} / std::chrono::month{month} / 1};
  const sys_days next = month == 12 ? sys_days{std::chrono::year{year + 1} / January / 1}
                                    : sys_days{std::chrono::year{year} / std::chrono::month{month + 1} / 1};
  const auto span = static_cast<std::uint64_t>(duration_cast<seconds>(next - start).count());
  return Timestamp{duration_cast<seconds>(start.time_since_epoch())} +
         seconds{static_cast<std::int64_t>(rng.below(span))};
}

Timestamp time_in_year(CounterRng& rng, int year) {
  using namespace std::chrono;
  const sys_days start{std::chrono::year{year} / January / 1};
  const sys_days end{std::chrono::year{year + 1} / January / 1};
  const auto span = static_cast<std::uint64_t>(duration_cast<seconds>(end - start).count());
  return Timestamp{duration_cast<seconds>(start.time_since_epoch())} +
         seconds{static_cast<std::int64_t>(rng.below(span))};
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_regions < 3) throw InvalidArgument("synthetic spec: n_regions must be >= 3");
  if (n_regions > kMaxRegions) throw InvalidArgument("synthetic spec: at most 1000 regions");
  if (!(p_min >= 1.0)) throw InvalidArgument("synthetic spec: p_min must be >= 1");
  if (!(p_min < p_max)) throw InvalidArgument("synthetic spec: p_min must be < p_max");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("synthetic spec: noise_sigma must be >= 0");
  if (!std::isfinite(b_true)) throw InvalidArgument("synthetic spec: b_true must be finite");
  if (seasonal_b) {
    for (double b : *seasonal_b) {
      if (!std::isfinite(b)) throw InvalidArgument("synthetic spec: seasonal_b must be finite");
    }
  }
  if (total_events < 0) throw InvalidArgument("synthetic spec: total_events must be >= 0");
  if (!(resident_share >= 0.0 && resident_share < 1.0)) {
    throw InvalidArgument("synthetic spec: resident_share must be in [0, 1)");
  }
  if (!is_country_code(target_country)) {
    throw InvalidArgument("synthetic spec: target_country must be an ISO alpha-2 code");
  }
  for (const auto& h : kHomelands) {
    if (target_country == h.code) {
      throw InvalidArgument("synthetic spec: target_country collides with a visitor homeland");
    }
  }
  if (year < 1971 || year > 9998) throw InvalidArgument("synthetic spec: year out of range");
}

double SyntheticSpec::exponent_for_month(unsigned month) const {
  return seasonal_b ? (*seasonal_b)[month - 1] : b_true;
}

SyntheticSpec spec_from_json(const std::string& text) {
  json doc = json::parse(text);
  SyntheticSpec spec;
  spec.n_regions = doc.value("n_regions", spec.n_regions);
  spec.p_min = doc.value("p_min", spec.p_min);
  spec.p_max = doc.value("p_max", spec.p_max);
  spec.b_true = doc.value("b_true", spec.b_true);
  spec.noise_sigma = doc.value("noise_sigma", spec.noise_sigma);
  if (doc.contains("seasonal_b") && !doc["seasonal_b"].is_null()) {
    auto values = doc["seasonal_b"].get<std::vector<double>>();
    if (values.size() != 12) throw InvalidArgument("seasonal_b must have 12 entries");
    std::array<double, 12> months{};
    std::copy(values.begin(), values.end(), months.begin());
    spec.seasonal_b = months;
  }
  spec.total_events = doc.value("total_events", spec.total_events);
  spec.resident_share = doc.value("resident_share", spec.resident_share);
  spec.target_country = doc.value("target_country", spec.target_country);
  std::string mode = doc.value("origin_mode", std::string("inferred"));
  if (mode == "inferred") {
    spec.origin_mode = OriginMode::inferred;
  } else if (mode == "declared") {
    spec.origin_mode = OriginMode::declared;
  } else {
    throw InvalidArgument("origin_mode must be 'inferred' or 'declared'");
  }
  spec.dataset_tag = doc.value("dataset_tag", spec.dataset_tag);
  spec.year = doc.value("year", spec.year);
  spec.seed = doc.value("seed", spec.seed);
  spec.validate();
  return spec;
}

std::string spec_to_json(const SyntheticSpec& spec) {
  json doc = {{"n_regions", spec.n_regions},
              {"p_min", spec.p_min},
              {"p_max", spec.p_max},
              {"b_true", spec.b_true},
              {"noise_sigma", spec.noise_sigma},
              {"total_events", spec.total_events},
              {"resident_share", spec.resident_share},
              {"target_country", spec.target_country},
              {"origin_mode", spec.origin_mode == OriginMode::inferred ? "inferred" : "declared"},
              {"dataset_tag", spec.dataset_tag},
              {"year", spec.year},
              {"seed", spec.seed}};
  doc["seasonal_b"] = spec.seasonal_b ? json(std::vector<double>(spec.seasonal_b->begin(),
                                                                 spec.seasonal_b->end()))
                                      : json(nullptr);
  return doc.dump(2);
}

SyntheticTable generate_table(const SyntheticSpec& spec) {
  spec.validate();
  const CounterRng root = CounterRng(spec.seed).split(kTableStream);
  const double log_lo = std::log10(spec.p_min);
  const double log_hi = std::log10(spec.p_max);
  SyntheticTable out;
  out.b_true = spec.b_true;
  std::vector<AttractivenessRow> rows;
  const int width = spec.n_regions > 999 ? 4 : 3;
  for (std::size_t r = 0; r < spec.n_regions; ++r) {
    CounterRng rng = root.split(r);
    const double population = std::max(
        1.0, std::round(std::pow(10.0, log_lo + rng.uniform() * (log_hi - log_lo))));
    const double epsilon = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0;
    char id[16];
    std::snprintf(id, sizeof id, "C%0*zu", width, r + 1);
    out.regions.push_back({id, static_cast<std::int64_t>(population), epsilon});
    rows.push_back({id, population, std::pow(population, spec.b_true) * std::pow(10.0, epsilon), 0.0});
  }
  out.table = make_table(spec.dataset_tag, "SYN", std::move(rows));
  out.log_a_true = -std::log10(out.table.total_activity);
  return out;
}

const std::vector<std::string>& synthetic_visitor_countries() {
  static const std::vector<std::string> codes = [] {
    std::vector<std::string> out;
    for (const auto& h : kHomelands) out.emplace_back(h.code);
    return out;
  }();
  return codes;
}

SyntheticWorld generate_world(const SyntheticSpec& spec) {
  SyntheticWorld world;
  world.truth = generate_table(spec);
  const std::size_t columns = grid_columns(spec.n_regions);
  std::vector<Region> cities;
  for (std::size_t r = 0; r < spec.n_regions; ++r) {
    const auto& truth = world.truth.regions[r];
    cities.push_back(make_box_region(truth.id, "SYN", truth.population, city_box(r, columns)));
  }
  world.cities = RegionLayer("SYN", std::move(cities));
  std::vector<Region> countries;
  countries.push_back(make_box_region(spec.target_country, "country", std::nullopt, kTargetBox));
  for (const auto& h : kHomelands) {
    countries.push_back(make_box_region(h.code, "country", std::nullopt, h.box));
  }
  world.countries = RegionLayer("country", std::move(countries));
  return world;
}

std::vector<std::int64_t> largest_remainder(const std::vector<double>& expected,
                                            std::int64_t total, std::size_t tie_start) {
  std::vector<std::int64_t> out(expected.size(), 0);
  if (expected.empty()) return out;
  std::vector<double> fraction(expected.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double value = std::max(0.0, expected[i]);
    out[i] = static_cast<std::int64_t>(std::floor(value));
    fraction[i] = value - static_cast<double>(out[i]);
    assigned += out[i];
  }
  const std::size_t n = expected.size();
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = (tie_start + k) % n;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return fraction[l] > fraction[r]; });
  std::int64_t remaining = total - assigned;
  // Flooring can only undershoot; an overshoot comes from rounding in the
  // inputs and is taken back from the smallest fractions.
  for (std::size_t k = 0; remaining > 0; k = (k + 1) % order.size(), --remaining) {
    ++out[order[k]];
  }
  for (std::size_t k = order.size(); remaining < 0;) {
    k = (k == 0 ? order.size() : k) - 1;
    if (out[order[k]] > 0) {
      --out[order[k]];
      ++remaining;
    }
  }
  return out;
}

std::vector<std::array<double, 12>> expected_foreign_counts(const SyntheticSpec& spec,
                                                            const SyntheticTable& truth) {
  const std::int64_t foreign = static_cast<std::int64_t>(
      std::llround(static_cast<double>(spec.total_events) * (1.0 - spec.resident_share)));
  const std::size_t n = truth.regions.size();
  std::vector<std::array<double, 12>> expected(n);
  for (unsigned m = 1; m <= 12; ++m) {
    const double b = spec.exponent_for_month(m);
    // Weights relative to the smallest-population city keep the powers finite.
    std::vector<double> weights(n);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& region = truth.regions[r];
      weights[r] = std::pow(static_cast<double>(region.population) / spec.p_min, b) *
                   std::pow(10.0, region.epsilon);
      total += weights[r];
    }
    for (std::size_t r = 0; r < n; ++r) {
      expected[r][m - 1] = static_cast<double>(foreign) / 12.0 * weights[r] / total;
    }
  }
  return expected;
}

SyntheticEvents generate_events(const SyntheticSpec& spec, const SyntheticWorld& world,
                                unsigned threads) {
  spec.validate();
  const std::size_t n = world.truth.regions.size();
  if (world.cities.size() != n) throw InvalidArgument("synthetic world does not match spec");
  SyntheticEvents out;
  out.foreign_events = static_cast<std::int64_t>(
      std::llround(static_cast<double>(spec.total_events) * (1.0 - spec.resident_share)));
  out.resident_events = spec.total_events - out.foreign_events;

  // Visitor counts: annual totals per region first, then months within each region.
  const auto expected = expected_foreign_counts(spec, world.truth);
  std::vector<double> annual_expected(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    annual_expected[r] = std::accumulate(expected[r].begin(), expected[r].end(), 0.0);
  }
  const auto annual = largest_remainder(annual_expected, out.foreign_events);
  out.foreign_counts.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> months(12, 0.0);
    if (annual_expected[r] > 0.0) {
      for (std::size_t m = 0; m < 12; ++m) {
        months[m] = expected[r][m] * static_cast<double>(annual[r]) / annual_expected[r];
      }
    }
    const auto split = largest_remainder(months, annual[r], r);
    std::copy(split.begin(), split.end(), out.foreign_counts[r].begin());
  }

  // Residents: spread by population, evenly across months.
  std::vector<double> resident_expected(n);
  double population_total = 0.0;
  for (const auto& region : world.truth.regions) population_total += static_cast<double>(region.population);
  for (std::size_t r = 0; r < n; ++r) {
    resident_expected[r] = static_cast<double>(out.resident_events) *
                           static_cast<double>(world.truth.regions[r].population) / population_total;
  }
  const auto residents = largest_remainder(resident_expected, out.resident_events);

  const std::uint64_t visitor_pool =
      static_cast<std::uint64_t>(std::max<std::int64_t>(1, out.foreign_events / kEventsPerUser));
  const std::uint64_t resident_pool =
      static_cast<std::uint64_t>(std::max<std::int64_t>(1, out.resident_events / kEventsPerUser));
  const auto& homelands = kHomelands;
  auto visitor_country = [&](std::uint64_t user) { return std::string(homelands[user % homelands.size()].code); };

  const CounterRng root(spec.seed);
  const CounterRng visit_root = root.split(kVisitStream);
  const CounterRng resident_root = root.split(kResidentStream);
  const CounterRng home_root = root.split(kHomeStream);

  std::vector<std::vector<EventRecord>> per_region(n);
  std::vector<std::vector<std::uint64_t>> visitors_seen(n);
  for_each_shard(n, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const BBox& box = world.cities[r].bbox();
      auto& bucket = per_region[r];
      CounterRng rng = visit_root.split(r);
      for (unsigned m = 1; m <= 12; ++m) {
        for (std::int64_t k = 0; k < out.foreign_counts[r][m - 1]; ++k) {
          const std::uint64_t user = rng.below(visitor_pool);
          visitors_seen[r].push_back(user);
          EventRecord e;
          e.user_id = padded('v', user);
          e.timestamp = time_in_month(rng, spec.year, m);
          const LatLon at = point_in_box(rng, box);
          e.lat = at.lat;
          e.lon = at.lon;
          if (spec.origin_mode == OriginMode::declared) e.origin_country = visitor_country(user);
          e.dataset_tag = spec.dataset_tag;
          bucket.push_back(std::move(e));
        }
      }
      CounterRng res_rng = resident_root.split(r);
      const std::vector<double> even(12, static_cast<double>(residents[r]) / 12.0);
      const auto resident_months = largest_remainder(even, residents[r], r);
      for (unsigned m = 1; m <= 12; ++m) {
        for (std::int64_t k = 0; k < resident_months[m - 1]; ++k) {
          EventRecord e;
          e.user_id = padded('r', res_rng.below(resident_pool));
          e.timestamp = time_in_month(res_rng, spec.year, m);
          const LatLon at = point_in_box(res_rng, box);
          e.lat = at.lat;
          e.lon = at.lon;
          e.dataset_tag = spec.dataset_tag;
          bucket.push_back(std::move(e));
        }
      }
    }
  });

  std::vector<std::int64_t> visits_per_user(visitor_pool, 0);
  for (const auto& seen : visitors_seen) {
    for (auto user : seen) ++visits_per_user[user];
  }
  std::vector<std::vector<EventRecord>> home_events(visitor_pool);
  if (spec.origin_mode == OriginMode::inferred) {
    // One more event at home than abroad makes the homeland the residence.
    for_each_shard(visitor_pool, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t u = begin; u < end; ++u) {
        if (visits_per_user[u] == 0) continue;
        CounterRng rng = home_root.split(u);
        const BBox box = shrink(homelands[u % homelands.size()].box, 0.1);
        for (std::int64_t k = 0; k <= visits_per_user[u]; ++k) {
          EventRecord e;
          e.user_id = padded('v', u);
          e.timestamp = time_in_year(rng, spec.year);
          const LatLon at = point_in_box(rng, box);
          e.lat = at.lat;
          e.lon = at.lon;
          e.dataset_tag = spec.dataset_tag;
          home_events[u].push_back(std::move(e));
        }
      }
    });
  }

  std::size_t total = 0;
  for (const auto& bucket : per_region) total += bucket.size();
  for (const auto& bucket : home_events) total += bucket.size();
  out.events.reserve(total);
  for (auto& bucket : per_region) {
    std::move(bucket.begin(), bucket.end(), std::back_inserter(out.events));
  }
  for (auto& bucket : home_events) {
    out.home_events += static_cast<std::int64_t>(bucket.size());
    std::move(bucket.begin(), bucket.end(), std::back_inserter(out.events));
  }
  return out;
}

std::string truth_to_json(const SyntheticSpec& spec, const SyntheticWorld& world,
                          const SyntheticEvents* events) {
  json regions = json::array();
  for (std::size_t r = 0; r < world.truth.regions.size(); ++r) {
    const auto& region = world.truth.regions[r];
    json entry = {{"id", region.id},
                  {"population", region.population},
                  {"epsilon", round12(region.epsilon)},
                  {"A", round12(world.truth.table.rows[r].share)}};
    if (events) {
      entry["foreign_events"] = std::accumulate(events->foreign_counts[r].begin(),
                                                events->foreign_counts[r].end(), std::int64_t{0});
      entry["foreign_by_month"] = events->foreign_counts[r];
    }
    regions.push_back(std::move(entry));
  }
  json doc = {{"spec", json::parse(spec_to_json(spec))},
              {"b_true", spec.b_true},
              {"log_a_true", round12(world.truth.log_a_true)},
              {"regions", regions}};
  if (events) {
    doc["foreign_events"] = events->foreign_events;
    doc["resident_events"] = events->resident_events;
    doc["home_events"] = events->home_events;
    doc["total_events"] = events->events.size();
  }
  return doc.dump(2);
}

}  // namespace cityscale
