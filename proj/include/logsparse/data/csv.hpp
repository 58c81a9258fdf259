#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "logsparse/data/series.hpp"

namespace logsparse::data {

struct CsvSchema {
  std::string id_column = "series_id";
  std::string timestamp_column = "timestamp";
  std::string value_column = "value";
};

/// Reads a headed CSV. Rows of one series must appear with strictly
/// increasing, evenly spaced timestamps; series may interleave. Timestamps
/// are all integer ticks or all ISO-8601. Malformed rows raise ParseError
/// with the 1-based line number; ordering and spacing violations raise
/// DataError.
TimeSeriesSet read_csv(std::istream& in, const CsvSchema& schema = {});
TimeSeriesSet load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes `series_id,timestamp,value` with round-trip precision.
void write_csv(const TimeSeriesSet& set, std::ostream& out);
void save_csv(const TimeSeriesSet& set, const std::filesystem::path& path);

enum class AggregateMode { Sum, Mean };

/// Combines every `factor` consecutive points into one; an incomplete tail
/// is dropped. The period is multiplied by `factor`.
TimeSeriesSet aggregate(const TimeSeriesSet& set, std::size_t factor, AggregateMode mode);

}  // namespace logsparse::data
