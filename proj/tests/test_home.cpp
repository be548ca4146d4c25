#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "cityscale/geo.hpp"
#include "cityscale/home.hpp"

using namespace cityscale;

namespace {

constexpr std::int64_t kDay = 86400;

Timestamp day(std::int64_t d) { return Timestamp{std::chrono::seconds{1'300'000'000 + d * kDay}}; }

// ES: lat [0,10), FR: lat [20,30); anything else is unresolvable.
std::optional<std::string> toy_countries(double lat, double) {
  if (lat >= 0 && lat < 10) return "ES";
  if (lat >= 20 && lat < 30) return "FR";
  return std::nullopt;
}

EventRecord at(const std::string& user, double lat, Timestamp ts) {
  EventRecord e;
  e.user_id = user;
  e.lat = lat;
  e.lon = 0.0;
  e.timestamp = ts;
  e.dataset_tag = "photo";
  return e;
}

UserCountryStats stats_of(std::initializer_list<std::tuple<const char*, std::int64_t, std::int64_t>> rows) {
  UserCountryStats s;
  s.user_id = "u";
  for (auto [code, count, span_days] : rows) {
    CountryEvidence ev;
    ev.event_count = count;
    ev.first_ts = day(0);
    ev.last_ts = day(span_days);
    s.countries[code] = ev;
  }
  return s;
}

}  // namespace

TEST_CASE("single event yields count 1 and zero timespan") {
  std::vector<EventRecord> events = {at("u1", 5, day(3))};
  auto stats = accumulate_stats(events, toy_countries);
  REQUIRE(stats.users.size() == 1);
  const auto& es = stats.users.at("u1").countries.at("ES");
  CHECK(es.event_count == 1);
  CHECK(es.timespan_seconds() == 0);
}

TEST_CASE("counts and timespans per country") {
  std::vector<EventRecord> events = {at("u1", 5, day(0)),  at("u1", 25, day(1)), at("u1", 5, day(5)),
                                     at("u1", 25, day(2)), at("u1", 5, day(10)), at("u1", 50, day(4))};
  auto stats = accumulate_stats(events, toy_countries);
  const auto& user = stats.users.at("u1");
  CHECK(user.countries.at("ES").event_count == 3);
  CHECK(user.countries.at("ES").timespan_seconds() == 10 * kDay);
  CHECK(user.countries.at("FR").event_count == 2);
  CHECK(user.countries.at("FR").timespan_seconds() == 1 * kDay);
  CHECK(user.total_events() == 5);
  CHECK(stats.unresolved_events == 1);
}

TEST_CASE("infer_home: count dominates, timespan breaks count ties, code breaks full ties") {
  CHECK(infer_home(stats_of({{"ES", 10, 5}, {"FR", 3, 300}})).country == std::optional<std::string>("ES"));
  CHECK(infer_home(stats_of({{"ES", 5, 10}, {"FR", 5, 30}})).country == std::optional<std::string>("FR"));
  CHECK(infer_home(stats_of({{"ES", 5, 10}, {"FR", 5, 10}})).country == std::optional<std::string>("ES"));
  auto h = infer_home(stats_of({{"ES", 5, 10}, {"FR", 5, 30}}));
  CHECK(h.event_count == 5);
  CHECK(h.timespan_seconds == 30 * kDay);
}

TEST_CASE("infer_home: below min_events is UNDETERMINED") {
  auto s = stats_of({{"ES", 2, 1}, {"FR", 1, 0}});
  CHECK(infer_home(s, 3).determined());
  CHECK_FALSE(infer_home(s, 4).determined());
  CHECK_FALSE(infer_home(UserCountryStats{"empty", {}}).determined());
}

TEST_CASE("resolve_origin prefers the declared country") {
  HomeAssignment es{"u", "ES", 3, 0};
  HomeAssignment none{"u", std::nullopt, 0, 0};
  CHECK(resolve_origin(es, std::string("FR")) == std::optional<std::string>("FR"));
  CHECK(resolve_origin(es, std::nullopt) == std::optional<std::string>("ES"));
  CHECK_FALSE(resolve_origin(none, std::nullopt).has_value());
}

TEST_CASE("users without resolvable events are UNDETERMINED and still listed") {
  std::vector<EventRecord> events = {at("a", 5, day(0)), at("b", 50, day(0)), at("c", 25, day(1))};
  auto homes = infer_homes(events, toy_countries);
  REQUIRE(homes.size() == 3);
  CHECK(homes[0].country == std::optional<std::string>("ES"));
  CHECK_FALSE(homes[1].determined());
  CHECK(homes[2].country == std::optional<std::string>("FR"));
}

TEST_CASE("property: permutation invariance, shard invariance and coverage accounting") {
  std::mt19937_64 gen(7);
  std::vector<EventRecord> events;
  for (int i = 0; i < 600; ++i) {
    const double lat = static_cast<double>(gen() % 40);
    events.push_back(at("u" + std::to_string(gen() % 40), lat, day(static_cast<std::int64_t>(gen() % 365))));
  }
  const auto reference_stats = accumulate_stats(events, toy_countries);
  const auto reference = infer_homes(events, toy_countries);
  std::set<std::string> users;
  for (const auto& e : events) users.insert(e.user_id);
  CHECK(reference.size() == users.size());
  for (int round = 0; round < 25; ++round) {
    std::shuffle(events.begin(), events.end(), gen);
    const unsigned threads = 1 + static_cast<unsigned>(round % 5);
    CHECK(accumulate_stats(events, toy_countries, threads) == reference_stats);
    CHECK(infer_homes(events, toy_countries, 1, threads) == reference);
  }
}

TEST_CASE("property: one more event in the assigned country keeps the assignment") {
  std::mt19937_64 gen(99);
  for (int round = 0; round < 200; ++round) {
    UserCountryStats s;
    s.user_id = "u";
    for (const char* code : {"DE", "ES", "FR", "IT"}) {
      if (gen() % 3 == 0) continue;
      CountryEvidence ev;
      ev.event_count = 1 + static_cast<std::int64_t>(gen() % 4);
      ev.first_ts = day(static_cast<std::int64_t>(gen() % 10));
      ev.last_ts = ev.first_ts + std::chrono::seconds{static_cast<std::int64_t>(gen() % 20) * kDay};
      s.countries[code] = ev;
    }
    if (s.countries.empty()) continue;
    auto before = infer_home(s);
    REQUIRE(before.country);
    auto& ev = s.countries.at(*before.country);
    ev.absorb(ev.first_ts + std::chrono::seconds{static_cast<std::int64_t>(gen() % 40) * kDay});
    CHECK(infer_home(s).country == before.country);
  }
}

TEST_CASE("homes CSV round-trips with UNDETERMINED spelled out") {
  std::vector<HomeAssignment> homes = {{"a", "ES", 3, 86400}, {"b", std::nullopt, 0, 0}};
  std::ostringstream out;
  write_homes_csv(out, homes);
  CHECK(out.str() == "user_id,country,event_count,timespan_seconds\na,ES,3,86400\nb,UNDETERMINED,0,0\n");
  std::istringstream in(out.str());
  CHECK(read_homes_csv(in) == homes);
}

TEST_CASE("country locator resolves through a region layer") {
  RegionLayer layer("country", {make_box_region("ES", "country", std::nullopt, {36, -10, 44, 4}),
                                make_box_region("FR", "country", std::nullopt, {44.5, -4, 50, 8})});
  CountryLocator locate_country(layer);
  CHECK(locate_country(40.4, -3.7) == std::optional<std::string>("ES"));
  CHECK(locate_country(48.8, 2.3) == std::optional<std::string>("FR"));
  CHECK_FALSE(locate_country(0, 0).has_value());
  RegionLayer bad("country", {make_box_region("Spain", "country", std::nullopt, {0, 0, 1, 1})});
  CHECK_THROWS(CountryLocator{bad});
}
