#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace logsparse::data {

/// Integer ticks, or seconds since 1970-01-01T00:00:00 UTC.
enum class TimeKind { Ticks, Seconds };

/// Regularly sampled series: value i is observed at start + i * period.
struct Series {
  std::string id;
  std::vector<double> values;
  std::int64_t start = 0;
  std::int64_t period = 1;

  std::int64_t timestamp(std::size_t i) const {
    return start + static_cast<std::int64_t>(i) * period;
  }
};

struct TimeSeriesSet {
  TimeKind kind = TimeKind::Ticks;
  std::vector<Series> series;

  /// M
  std::size_t count() const noexcept { return series.size(); }
  /// T, the longest series.
  std::size_t length() const noexcept;
  /// S, the common sampling period; 0 for an empty set. Throws DataError
  /// when series disagree.
  std::int64_t sample_period() const;

  /// Index of the series with this id, or count() when absent.
  std::size_t find(std::string_view id) const;

  /// Throws DataError on duplicate ids or non-positive periods.
  void validate() const;
};

/// "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS]" (also with a space separator and an
/// optional trailing Z) as UTC seconds. Throws DataError on malformed text.
std::int64_t parse_iso8601(std::string_view text);

/// "YYYY-MM-DDTHH:MM:SS".
std::string format_iso8601(std::int64_t seconds);

}  // namespace logsparse::data
