#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "earlyid/features.hpp"

namespace earlyid {

namespace {

constexpr std::array<std::string_view, 5> kTrailingColumns = {"label", "meta_flow", "meta_trace",
                                                              "meta_appdata", "meta_d"};

std::string quote_if_needed(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw SchemaMismatch("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line_no, std::string_view column) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw SchemaMismatch("line " + std::to_string(line_no) + ": bad value '" + text +
                         "' in column " + std::string(column));
  }
  return value;
}

}  // namespace

std::string format_feature(std::size_t index, double value) {
  if (is_integer_feature(index) && std::nearbyint(value) == value && std::fabs(value) < 9e15) {
    return std::to_string(static_cast<long long>(value));
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

void write_feature_csv(std::ostream& out, std::span<const LabeledInstance> rows) {
  std::string line;
  for (std::string_view name : feature_names()) {
    line += name;
    line += ',';
  }
  for (std::size_t i = 0; i < kTrailingColumns.size(); ++i) {
    line += kTrailingColumns[i];
    line += i + 1 < kTrailingColumns.size() ? ',' : '\n';
  }
  out << line;
  for (const LabeledInstance& row : rows) {
    line.clear();
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      line += format_feature(i, row.features[i]);
      line += ',';
    }
    line += quote_if_needed(row.label);
    line += ',';
    line += quote_if_needed(row.meta.flow);
    line += ',';
    line += quote_if_needed(row.meta.trace);
    line += ',';
    line += std::to_string(row.meta.appdata_available);
    line += ',';
    line += std::to_string(row.meta.d);
    line += '\n';
    out << line;
  }
}

std::vector<LabeledInstance> read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("empty feature file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line, 1);
  const std::size_t expected = kFeatureCount + kTrailingColumns.size();
  if (header.size() != expected) {
    throw SchemaMismatch("expected " + std::to_string(expected) + " columns, found " +
                         std::to_string(header.size()));
  }
  for (std::size_t i = 0; i < expected; ++i) {
    std::string_view want =
        i < kFeatureCount ? feature_names()[i] : kTrailingColumns[i - kFeatureCount];
    if (header[i] != want) {
      throw SchemaMismatch("column " + std::to_string(i + 1) + " is '" + header[i] +
                           "', expected '" + std::string(want) + "'");
    }
  }

  std::vector<LabeledInstance> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != expected) {
      throw SchemaMismatch("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(expected) + " fields, found " +
                           std::to_string(fields.size()));
    }
    LabeledInstance row;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      double v = parse_number<double>(fields[i], line_no, feature_names()[i]);
      if (!std::isfinite(v) || v < 0) {
        throw SchemaMismatch("line " + std::to_string(line_no) + ": feature " +
                             std::string(feature_names()[i]) + " must be finite and >= 0");
      }
      row.features[i] = v;
    }
    row.label = fields[kFeatureCount];
    if (row.label.empty()) {
      throw SchemaMismatch("line " + std::to_string(line_no) + ": empty label");
    }
    row.meta.flow = fields[kFeatureCount + 1];
    row.meta.trace = fields[kFeatureCount + 2];
    row.meta.appdata_available =
        parse_number<std::uint32_t>(fields[kFeatureCount + 3], line_no, "meta_appdata");
    row.meta.d = parse_number<std::uint32_t>(fields[kFeatureCount + 4], line_no, "meta_d");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace earlyid
