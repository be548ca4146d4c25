#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cityscale/event.hpp"

namespace cityscale {

// Maps a location to the ISO code of the containing country, if any.
using CountryLookup = std::function<std::optional<std::string>(double lat, double lon)>;

struct CountryEvidence {
  std::int64_t event_count = 0;
  Timestamp first_ts{};
  Timestamp last_ts{};

  std::int64_t timespan_seconds() const { return (last_ts - first_ts).count(); }
  void absorb(Timestamp ts);
  void merge(const CountryEvidence& other);

  friend bool operator==(const CountryEvidence&, const CountryEvidence&) = default;
};

struct UserCountryStats {
  std::string user_id;
  std::map<std::string, CountryEvidence> countries;

  std::int64_t total_events() const;
  friend bool operator==(const UserCountryStats&, const UserCountryStats&) = default;
};

struct CountryStats {
  // Keyed by user id; holds only users with at least one resolvable event.
  std::map<std::string, UserCountryStats> users;
  // Events whose location fell in no country.
  std::size_t unresolved_events = 0;

  void merge(const CountryStats& other);
  friend bool operator==(const CountryStats&, const CountryStats&) = default;
};

// Per-user, per-country event counts and first/last timestamps. Shards merge
// by summing counts and taking min/max timestamps, so the result is the same
// for any thread count or input order.
CountryStats accumulate_stats(std::span<const EventRecord> events, const CountryLookup& country_of,
                              unsigned threads = 1);

struct HomeAssignment {
  std::string user_id;
  std::optional<std::string> country;  // nullopt is UNDETERMINED
  std::int64_t event_count = 0;
  std::int64_t timespan_seconds = 0;

  bool determined() const { return country.has_value(); }
  friend bool operator==(const HomeAssignment&, const HomeAssignment&) = default;
};

inline constexpr const char* kUndetermined = "UNDETERMINED";

// Residence is the country with the most events; a tie goes to the longer
// first-to-last timespan, then to the alphabetically smaller code.
// UNDETERMINED when the user's total resolvable events fall below min_events.
HomeAssignment infer_home(const UserCountryStats& stats, std::int64_t min_events = 1);

// Declared origin (card-issuing country) takes precedence over inference.
std::optional<std::string> resolve_origin(const HomeAssignment& owner,
                                          const std::optional<std::string>& declared);

// One assignment per distinct user in `events`, sorted by user id. Users
// without resolvable events come back UNDETERMINED.
std::vector<HomeAssignment> infer_homes(std::span<const EventRecord> events,
                                        const CountryLookup& country_of,
                                        std::int64_t min_events = 1, unsigned threads = 1);

// user_id -> resolved home (nullopt for UNDETERMINED).
using OriginMap = std::map<std::string, std::optional<std::string>>;
OriginMap to_origin_map(const std::vector<HomeAssignment>& homes);

void write_homes_csv(std::ostream& out, const std::vector<HomeAssignment>& homes);
// Reads the CSV written by write_homes_csv.
std::vector<HomeAssignment> read_homes_csv(std::istream& in);

}  // namespace cityscale
