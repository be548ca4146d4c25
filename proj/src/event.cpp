#include "cityscale/event.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "cityscale/error.hpp"
#include "cityscale/numfmt.hpp"

namespace cityscale {

namespace {

using json = nlohmann::json;

bool parse_digits(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  std::from_chars(text.data() + pos, text.data() + pos + len, out);
  return true;
}

// A row-level validation failure; carries the reason tallied in the report.
struct RowRejected {
  std::string reason;
};

bool valid_token(std::string_view token) {
  if (token.empty()) return false;
  for (char c : token) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r' || c == ' ' || c == '\t') return false;
  }
  return true;
}

EventRecord build_record(std::string_view user, std::string_view ts,
                         std::optional<double> lat, std::optional<double> lon,
                         std::string_view origin, std::string_view tag) {
  EventRecord rec;
  if (!valid_token(user)) throw RowRejected{"bad user_id"};
  rec.user_id = std::string(user);
  auto parsed_ts = parse_timestamp(ts);
  if (!parsed_ts) throw RowRejected{"bad timestamp"};
  rec.timestamp = *parsed_ts;
  if (!lat) throw RowRejected{"bad lat"};
  if (!lon) throw RowRejected{"bad lon"};
  if (*lat < -90.0 || *lat > 90.0) throw RowRejected{"lat out of range"};
  if (*lon < -180.0 || *lon > 180.0) throw RowRejected{"lon out of range"};
  rec.lat = *lat;
  rec.lon = *lon;
  if (!origin.empty()) {
    if (!is_country_code(origin)) throw RowRejected{"bad origin_country"};
    rec.origin_country = std::string(origin);
  }
  if (!valid_token(tag)) throw RowRejected{"bad dataset_tag"};
  rec.dataset_tag = std::string(tag);
  return rec;
}

constexpr std::array<std::string_view, 6> kColumns = {
    "user_id", "timestamp", "lat", "lon", "origin_country", "dataset_tag"};

struct CsvLayout {
  std::array<int, 6> index{};  // column position per kColumns entry, -1 if absent
  std::size_t width = 0;
};

CsvLayout read_header(std::string_view header) {
  CsvLayout layout;
  layout.index.fill(-1);
  auto names = split_csv(header);
  layout.width = names.size();
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      if (names[i] == kColumns[c]) {
        if (layout.index[c] != -1) {
          throw ParseError(1, "duplicate column " + std::string(kColumns[c]));
        }
        layout.index[c] = static_cast<int>(i);
      }
    }
  }
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    // origin_country may be omitted entirely.
    if (layout.index[c] == -1 && kColumns[c] != "origin_country") {
      throw ParseError(1, "missing column " + std::string(kColumns[c]));
    }
  }
  return layout;
}

EventRecord parse_csv_row(std::string_view line, const CsvLayout& layout) {
  auto fields = split_csv(line);
  if (fields.size() != layout.width) throw RowRejected{"field count mismatch"};
  auto field = [&](std::size_t c) -> std::string_view {
    return layout.index[c] < 0 ? std::string_view{} : fields[layout.index[c]];
  };
  return build_record(field(0), field(1), parse_number(field(2)), parse_number(field(3)),
                      field(4), field(5));
}

EventRecord parse_json_row(std::string_view line) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) throw RowRejected{"malformed json"};
  auto text = [&](const char* key) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (!it->is_string()) throw RowRejected{std::string("bad ") + key};
    return it->get<std::string>();
  };
  auto number = [&](const char* key) -> std::optional<double> {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number()) return std::nullopt;
    return it->get<double>();
  };
  std::string user = text("user_id");
  std::string ts = text("timestamp");
  std::string origin = text("origin_country");
  std::string tag = text("dataset_tag");
  return build_record(user, ts, number("lat"), number("lon"), origin, tag);
}

}  // namespace

bool is_country_code(std::string_view code) {
  return code.size() == 2 && code[0] >= 'A' && code[0] <= 'Z' && code[1] >= 'A' && code[1] <= 'Z';
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (text.size() < 10 || !parse_digits(text, 0, 4, y) || text[4] != '-' ||
      !parse_digits(text, 5, 2, mo) || text[7] != '-' || !parse_digits(text, 8, 2, d)) {
    return std::nullopt;
  }
  if (text.size() == 10) {
    // date only
  } else if (text.size() == 17 && text[10] == 'T' && parse_digits(text, 11, 2, h) &&
             text[13] == ':' && parse_digits(text, 14, 2, mi) && text[16] == 'Z') {
  } else if (text.size() == 20 && text[10] == 'T' && parse_digits(text, 11, 2, h) &&
             text[13] == ':' && parse_digits(text, 14, 2, mi) && text[16] == ':' &&
             parse_digits(text, 17, 2, s) && text[19] == 'Z') {
  } else {
    return std::nullopt;
  }
  year_month_day date{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!date.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
  return sys_days{date} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  auto day_point = floor<days>(ts);
  year_month_day date{day_point};
  hh_mm_ss tod{ts - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

std::string IngestReport::to_json() const {
  json reasons = json::object();
  for (const auto& [reason, count] : rejection_reasons) reasons[reason] = count;
  json out = {{"accepted", accepted}, {"rejected", rejected}, {"rejection_reasons", reasons}};
  return out.dump(2);
}

EventFormat parse_event_format(std::string_view label) {
  if (label == "csv") return EventFormat::csv;
  if (label == "jsonl") return EventFormat::jsonl;
  throw InvalidArgument("unknown event format '" + std::string(label) + "'");
}

ParsedEvents parse_events(std::istream& source, EventFormat format, bool strict) {
  ParsedEvents out;
  std::string line;
  std::size_t line_no = 0;
  CsvLayout layout;
  if (format == EventFormat::csv) {
    if (!std::getline(source, line)) throw ParseError(1, "missing header");
    line_no = 1;
    std::string_view header = chomp(line);
    // Tolerate a UTF-8 byte order mark.
    if (header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
    layout = read_header(header);
  }
  while (std::getline(source, line)) {
    ++line_no;
    std::string_view row = chomp(line);
    if (row.empty()) continue;
    try {
      out.records.push_back(format == EventFormat::csv ? parse_csv_row(row, layout)
                                                       : parse_json_row(row));
      ++out.report.accepted;
    } catch (const RowRejected& bad) {
      if (strict) throw ParseError(line_no, bad.reason);
      ++out.report.rejected;
      ++out.report.rejection_reasons[bad.reason];
    }
  }
  return out;
}

void write_events_csv(std::ostream& out, const std::vector<EventRecord>& events) {
  out << kEventCsvHeader << '\n';
  for (const auto& e : events) {
    out << e.user_id << ',' << format_timestamp(e.timestamp) << ',' << format_shortest(e.lat)
        << ',' << format_shortest(e.lon) << ',' << e.origin_country.value_or("") << ','
        << e.dataset_tag << '\n';
  }
}

}  // namespace cityscale
