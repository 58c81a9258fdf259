#include "logsparse/data/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <unordered_map>

#include "logsparse/common/error.hpp"

namespace logsparse::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t begin = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(trim(line.substr(begin, i - begin)));
      begin = i + 1;
    }
  }
  return fields;
}

std::optional<std::int64_t> parse_ticks(std::string_view s) {
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::size_t column_index(const std::vector<std::string_view>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("missing column '" + name + "'", 1);
  return static_cast<std::size_t>(it - header.begin());
}

struct Pending {
  std::vector<std::int64_t> times;
  std::vector<double> values;
};

}  // namespace

TimeSeriesSet read_csv(std::istream& in, const CsvSchema& schema) {
  TimeSeriesSet set;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header_store;
  std::size_t id_col = 0, ts_col = 0, value_col = 0, width = 0;
  bool have_header = false;
  std::optional<TimeKind> kind;
  std::vector<std::string> order;
  std::unordered_map<std::string, Pending> pending;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (!have_header) {
      id_col = column_index(fields, schema.id_column);
      ts_col = column_index(fields, schema.timestamp_column);
      value_col = column_index(fields, schema.value_column);
      width = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    const std::string id(fields[id_col]);
    if (id.empty()) throw ParseError("empty series id", line_no);

    const auto ts_text = fields[ts_col];
    std::int64_t ts = 0;
    TimeKind row_kind = TimeKind::Ticks;
    if (const auto ticks = parse_ticks(ts_text)) {
      ts = *ticks;
    } else {
      try {
        ts = parse_iso8601(ts_text);
      } catch (const DataError& e) {
        throw ParseError(e.what(), line_no);
      }
      row_kind = TimeKind::Seconds;
    }
    if (kind && *kind != row_kind) throw ParseError("mixes integer and ISO-8601 timestamps", line_no);
    kind = row_kind;

    const auto vtext = fields[value_col];
    double value = 0.0;
    const auto [end, ec] = std::from_chars(vtext.data(), vtext.data() + vtext.size(), value);
    if (ec != std::errc{} || end != vtext.data() + vtext.size() || vtext.empty() || !std::isfinite(value)) {
      throw ParseError("bad value '" + std::string(vtext) + "'", line_no);
    }

    auto [it, inserted] = pending.try_emplace(id);
    if (inserted) order.push_back(id);
    Pending& p = it->second;
    if (!p.times.empty()) {
      if (ts <= p.times.back()) {
        throw DataError("line " + std::to_string(line_no) + ": timestamps of series " + id +
                        " are not strictly increasing");
      }
      if (p.times.size() >= 2 && ts - p.times.back() != p.times[1] - p.times[0]) {
        throw DataError("line " + std::to_string(line_no) + ": series " + id + " is not evenly spaced");
      }
    }
    p.times.push_back(ts);
    p.values.push_back(value);
  }

  set.kind = kind.value_or(TimeKind::Ticks);
  std::int64_t common_period = 0;
  for (const auto& id : order) {
    const Pending& p = pending.at(id);
    if (p.times.size() >= 2) common_period = p.times[1] - p.times[0];
  }
  for (const auto& id : order) {
    Pending& p = pending.at(id);
    Series s;
    s.id = id;
    s.start = p.times.front();
    s.period = p.times.size() >= 2 ? p.times[1] - p.times[0] : (common_period > 0 ? common_period : 1);
    s.values = std::move(p.values);
    set.series.push_back(std::move(s));
  }
  return set;
}

TimeSeriesSet load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in, schema);
}

void write_csv(const TimeSeriesSet& set, std::ostream& out) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "series_id,timestamp,value\n";
  for (const auto& s : set.series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << s.id << ',';
      if (set.kind == TimeKind::Seconds) {
        out << format_iso8601(s.timestamp(i));
      } else {
        out << s.timestamp(i);
      }
      out << ',' << s.values[i] << '\n';
    }
  }
  out.precision(old);
}

void save_csv(const TimeSeriesSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(set, out);
  if (!out) throw IoError("write failed for " + path.string());
}

TimeSeriesSet aggregate(const TimeSeriesSet& set, std::size_t factor, AggregateMode mode) {
  if (factor < 1) throw ArgumentError("aggregate: factor must be >= 1");
  TimeSeriesSet out;
  out.kind = set.kind;
  for (const auto& s : set.series) {
    Series a;
    a.id = s.id;
    a.start = s.start;
    a.period = s.period * static_cast<std::int64_t>(factor);
    for (std::size_t i = 0; i + factor <= s.values.size(); i += factor) {
      double total = 0.0;
      for (std::size_t j = 0; j < factor; ++j) total += s.values[i + j];
      a.values.push_back(mode == AggregateMode::Sum ? total : total / static_cast<double>(factor));
    }
    out.series.push_back(std::move(a));
  }
  return out;
}

}  // namespace logsparse::data
