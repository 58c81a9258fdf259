#include "logsparse/data/series.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <unordered_set>

#include "logsparse/common/error.hpp"

namespace logsparse::data {

std::size_t TimeSeriesSet::length() const noexcept {
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.values.size());
  return n;
}

std::int64_t TimeSeriesSet::sample_period() const {
  if (series.empty()) return 0;
  const std::int64_t period = series.front().period;
  for (const auto& s : series) {
    if (s.period != period) {
      throw DataError("series " + s.id + " has period " + std::to_string(s.period) + ", expected " +
                      std::to_string(period));
    }
  }
  return period;
}

std::size_t TimeSeriesSet::find(std::string_view id) const {
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].id == id) return i;
  }
  return series.size();
}

void TimeSeriesSet::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& s : series) {
    if (!seen.insert(s.id).second) throw DataError("duplicate series id " + s.id);
    if (s.period <= 0) throw DataError("series " + s.id + " has non-positive period");
  }
}

namespace {

bool read_int(std::string_view text, std::size_t& pos, std::size_t digits, int& out) {
  if (pos + digits > text.size()) return false;
  const char* first = text.data() + pos;
  const auto [end, ec] = std::from_chars(first, first + digits, out);
  if (ec != std::errc{} || end != first + digits) return false;
  pos += digits;
  return true;
}

bool expect(std::string_view text, std::size_t& pos, char c) {
  if (pos >= text.size() || text[pos] != c) return false;
  ++pos;
  return true;
}

}  // namespace

std::int64_t parse_iso8601(std::string_view text) {
  const auto fail = [&]() -> DataError {
    return DataError("malformed ISO-8601 timestamp '" + std::string(text) + "'");
  };
  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!read_int(text, pos, 4, y) || !expect(text, pos, '-') || !read_int(text, pos, 2, mo) ||
      !expect(text, pos, '-') || !read_int(text, pos, 2, d)) {
    throw fail();
  }
  if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
    ++pos;
    if (!read_int(text, pos, 2, h) || !expect(text, pos, ':') || !read_int(text, pos, 2, mi)) {
      throw fail();
    }
    if (pos < text.size() && text[pos] == ':' && !(++pos, read_int(text, pos, 2, s))) throw fail();
  }
  if (pos < text.size() && text[pos] == 'Z') ++pos;
  if (pos != text.size()) throw fail();

  using namespace std::chrono;
  const year_month_day date{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!date.ok() || h > 23 || mi > 59 || s > 59) throw fail();
  const auto days = sys_days{date}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t seconds) {
  using namespace std::chrono;
  std::int64_t days = seconds / 86400;
  std::int64_t rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day date{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60),
                static_cast<int>(rem % 60));
  return buf;
}

}  // namespace logsparse::data
