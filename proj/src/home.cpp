#include "cityscale/home.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include "cityscale/error.hpp"
#include "cityscale/numfmt.hpp"
#include "cityscale/parallel.hpp"

namespace cityscale {

void CountryEvidence::absorb(Timestamp ts) {
  if (event_count == 0) {
    first_ts = last_ts = ts;
  } else {
    first_ts = std::min(first_ts, ts);
    last_ts = std::max(last_ts, ts);
  }
  ++event_count;
}

void CountryEvidence::merge(const CountryEvidence& other) {
  if (other.event_count == 0) return;
  if (event_count == 0) {
    *this = other;
    return;
  }
  event_count += other.event_count;
  first_ts = std::min(first_ts, other.first_ts);
  last_ts = std::max(last_ts, other.last_ts);
}

std::int64_t UserCountryStats::total_events() const {
  std::int64_t total = 0;
  for (const auto& [code, ev] : countries) total += ev.event_count;
  return total;
}

void CountryStats::merge(const CountryStats& other) {
  for (const auto& [user, stats] : other.users) {
    auto& mine = users[user];
    mine.user_id = user;
    for (const auto& [code, ev] : stats.countries) mine.countries[code].merge(ev);
  }
  unresolved_events += other.unresolved_events;
}

CountryStats accumulate_stats(std::span<const EventRecord> events, const CountryLookup& country_of,
                              unsigned threads) {
  std::vector<CountryStats> partial(shard_count(events.size(), threads));
  for_each_shard(events.size(), threads, [&](std::size_t shard, std::size_t begin, std::size_t end) {
    CountryStats& acc = partial[shard];
    for (std::size_t i = begin; i < end; ++i) {
      const EventRecord& e = events[i];
      auto code = country_of(e.lat, e.lon);
      if (!code) {
        ++acc.unresolved_events;
        continue;
      }
      auto& user = acc.users[e.user_id];
      user.user_id = e.user_id;
      user.countries[*code].absorb(e.timestamp);
    }
  });
  CountryStats out = std::move(partial.front());
  for (std::size_t s = 1; s < partial.size(); ++s) out.merge(partial[s]);
  return out;
}

HomeAssignment infer_home(const UserCountryStats& stats, std::int64_t min_events) {
  if (min_events < 1) throw InvalidArgument("min_events must be positive");
  HomeAssignment out;
  out.user_id = stats.user_id;
  if (stats.countries.empty() || stats.total_events() < min_events) {
    out.event_count = stats.total_events();
    return out;
  }
  // std::map iterates codes in ascending order, so a strict comparison keeps
  // the smaller code on a full tie.
  const std::string* best_code = nullptr;
  const CountryEvidence* best = nullptr;
  for (const auto& [code, ev] : stats.countries) {
    if (!best || std::make_tuple(ev.event_count, ev.timespan_seconds()) >
                     std::make_tuple(best->event_count, best->timespan_seconds())) {
      best_code = &code;
      best = &ev;
    }
  }
  out.country = *best_code;
  out.event_count = best->event_count;
  out.timespan_seconds = best->timespan_seconds();
  return out;
}

std::optional<std::string> resolve_origin(const HomeAssignment& owner,
                                          const std::optional<std::string>& declared) {
  if (declared) return declared;
  return owner.country;
}

std::vector<HomeAssignment> infer_homes(std::span<const EventRecord> events,
                                        const CountryLookup& country_of, std::int64_t min_events,
                                        unsigned threads) {
  CountryStats stats = accumulate_stats(events, country_of, threads);
  std::set<std::string> all_users;
  for (const auto& e : events) all_users.insert(e.user_id);
  std::vector<HomeAssignment> out;
  out.reserve(all_users.size());
  for (const auto& user : all_users) {
    auto it = stats.users.find(user);
    if (it == stats.users.end()) {
      HomeAssignment none;
      none.user_id = user;
      out.push_back(std::move(none));
    } else {
      out.push_back(infer_home(it->second, min_events));
    }
  }
  return out;
}

OriginMap to_origin_map(const std::vector<HomeAssignment>& homes) {
  OriginMap out;
  for (const auto& h : homes) out[h.user_id] = h.country;
  return out;
}

void write_homes_csv(std::ostream& out, const std::vector<HomeAssignment>& homes) {
  out << "user_id,country,event_count,timespan_seconds\n";
  for (const auto& h : homes) {
    out << h.user_id << ',' << h.country.value_or(kUndetermined) << ',' << h.event_count << ','
        << h.timespan_seconds << '\n';
  }
}

std::vector<HomeAssignment> read_homes_csv(std::istream& in) {
  std::vector<HomeAssignment> out;
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  ++row;
  if (chomp(line) != "user_id,country,event_count,timespan_seconds") {
    throw ParseError(1, "unexpected homes header");
  }
  auto to_int = [&](std::string_view text, std::int64_t& value) {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw ParseError(row, "bad integer");
  };
  while (std::getline(in, line)) {
    ++row;
    auto text = chomp(line);
    if (text.empty()) continue;
    auto fields = split_csv(text);
    if (fields.size() != 4) throw ParseError(row, "field count mismatch");
    HomeAssignment h;
    h.user_id = std::string(fields[0]);
    if (fields[1] != kUndetermined) {
      if (!is_country_code(fields[1])) throw ParseError(row, "bad country");
      h.country = std::string(fields[1]);
    }
    to_int(fields[2], h.event_count);
    to_int(fields[3], h.timespan_seconds);
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace cityscale
