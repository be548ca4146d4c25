#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cityscale/event.hpp"
#include "cityscale/geo.hpp"
#include "cityscale/scaling.hpp"

namespace cityscale {

enum class OriginMode {
  inferred,  // visitors carry no origin; home events abroad make inference resolve them
  declared,  // visitors' events declare the issuing country, as card transactions do
};

struct SyntheticSpec {
  std::size_t n_regions = 30;
  double p_min = 5e4;
  double p_max = 5e6;
  double b_true = 1.5;
  double noise_sigma = 0.0;  // log10 units
  std::optional<std::array<double, 12>> seasonal_b;  // exponent per calendar month
  std::int64_t total_events = 200000;  // visits to city regions, residents included
  double resident_share = 0.3;
  std::string target_country = "ES";
  OriginMode origin_mode = OriginMode::inferred;
  std::string dataset_tag = "photo";
  int year = 2012;
  std::uint64_t seed = 42;

  // Throws InvalidArgument when a field is out of range.
  void validate() const;
  double exponent_for_month(unsigned month) const;
};

SyntheticSpec spec_from_json(const std::string& text);
std::string spec_to_json(const SyntheticSpec& spec);

struct SyntheticRegionTruth {
  std::string id;
  std::int64_t population = 0;
  double epsilon = 0.0;  // log10 noise applied to this region
};

// Region populations and noise, plus the noise-free table they imply.
struct SyntheticTable {
  AttractivenessTable table;
  std::vector<SyntheticRegionTruth> regions;
  double b_true = 0.0;
  double log_a_true = 0.0;  // intercept of the normalized noise-free law
};

// Populations log-uniform on [p_min, p_max] (rounded to whole persons), raw
// activity p^b_true * 10^eps with eps ~ N(0, noise_sigma), normalized to
// shares. Region r draws from substream r of the seed.
SyntheticTable generate_table(const SyntheticSpec& spec);

struct SyntheticWorld {
  SyntheticTable truth;
  RegionLayer cities;     // disjoint squares, populations attached
  RegionLayer countries;  // target country box containing every city, plus visitor homelands
};

SyntheticWorld generate_world(const SyntheticSpec& spec);

// ISO codes synthetic visitors come from.
const std::vector<std::string>& synthetic_visitor_countries();

struct SyntheticEvents {
  std::vector<EventRecord> events;
  // foreign_counts[r][m]: visitor events in city r during month m+1.
  std::vector<std::array<std::int64_t, 12>> foreign_counts;
  std::int64_t foreign_events = 0;
  std::int64_t resident_events = 0;
  std::int64_t home_events = 0;  // visitors' events in their own country
};

// Visitor events per region and month proportional to p^b_month * 10^eps
// with largest-remainder rounding (grand total and per-region annual totals
// exact), placed uniformly inside the city square within the month. Output is
// identical for every thread count.
SyntheticEvents generate_events(const SyntheticSpec& spec, const SyntheticWorld& world,
                                unsigned threads = 1);

// Expected (unrounded) visitor events per region and month.
std::vector<std::array<double, 12>> expected_foreign_counts(const SyntheticSpec& spec,
                                                            const SyntheticTable& truth);

// Floors `expected` and hands the remaining units to the largest fractional
// parts. Equal fractions go in index order starting at `tie_start`
// (wrapping). Sum equals `total`.
std::vector<std::int64_t> largest_remainder(const std::vector<double>& expected,
                                            std::int64_t total, std::size_t tie_start = 0);

std::string truth_to_json(const SyntheticSpec& spec, const SyntheticWorld& world,
                          const SyntheticEvents* events);

}  // namespace cityscale
