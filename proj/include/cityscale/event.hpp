#pragma once

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cityscale {

using Timestamp = std::chrono::sys_seconds;

// Two uppercase ASCII letters (ISO-3166-1 alpha-2).
bool is_country_code(std::string_view code);

// Parses `YYYY-MM-DDTHH:MM:SSZ`. Coarser UTC forms `YYYY-MM-DDTHH:MMZ` and
// `YYYY-MM-DD` are accepted and read as the start of the truncated period.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

// One geotagged activity: a photo, a tweet or a card transaction.
struct EventRecord {
  std::string user_id;
  Timestamp timestamp{};
  double lat = 0.0;
  double lon = 0.0;
  std::optional<std::string> origin_country;
  std::string dataset_tag;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct IngestReport {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::map<std::string, std::size_t> rejection_reasons;

  std::size_t total() const { return accepted + rejected; }
  std::string to_json() const;

  friend bool operator==(const IngestReport&, const IngestReport&) = default;
};

enum class EventFormat { csv, jsonl };

// Throws InvalidArgument for anything other than "csv" or "jsonl".
EventFormat parse_event_format(std::string_view label);

struct ParsedEvents {
  std::vector<EventRecord> records;
  IngestReport report;
};

// Streams `source` into records. Non-strict mode skips and tallies bad rows;
// strict mode throws ParseError at the first one. A CSV header missing a
// required column is always fatal.
ParsedEvents parse_events(std::istream& source, EventFormat format, bool strict = false);

inline constexpr std::string_view kEventCsvHeader =
    "user_id,timestamp,lat,lon,origin_country,dataset_tag";

// Canonical CSV; coordinates use the shortest representation that reads back
// to the same double.
void write_events_csv(std::ostream& out, const std::vector<EventRecord>& events);

}  // namespace cityscale
