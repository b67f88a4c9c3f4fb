#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ethnocode/error.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

/// A header plus string rows; the in-memory form of every tabular file.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require_column(std::string_view name) const {
    auto c = column(name);
    if (!c) throw Error(ErrorKind::SchemaError, "missing column \"" + std::string(name) + "\"");
    return *c;
  }

  bool operator==(const Table&) const = default;
};

namespace csv {

/// RFC 4180 parsing: quoted fields may hold delimiters, doubled quotes and
/// line breaks. Unquoted CRLF or CR ends a record.
inline std::vector<std::vector<std::string>> parse_records(std::string_view text, char delim = ',') {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorKind::FormatError, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline bool needs_quotes(std::string_view f, char delim) {
  for (char c : f)
    if (c == delim || c == '"' || c == '\n' || c == '\r') return true;
  return false;
}

inline void append_field(std::string& out, std::string_view f, char delim) {
  if (!needs_quotes(f, delim)) {
    out += f;
    return;
  }
  out += '"';
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

inline std::string write_records(const std::vector<std::vector<std::string>>& records, char delim = ',') {
  std::string out;
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += delim;
      append_field(out, r[i], delim);
    }
    // a lone empty field would otherwise read back as a blank line
    if (r.size() == 1 && r[0].empty()) out += "\"\"";
    out += "\r\n";
  }
  return out;
}

inline Table parse_table(std::string_view text, char delim = ',') {
  auto records = parse_records(text, delim);
  Table t;
  if (records.empty()) return t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    // tolerate blank lines
    if (rec.size() == 1 && rec[0].empty() && t.header.size() != 1) continue;
    if (rec.size() != t.header.size())
      throw Error(ErrorKind::FormatError, "row " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) +
                                              " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(rec));
  }
  return t;
}

inline std::string write_table(const Table& t, char delim = ',') {
  std::vector<std::vector<std::string>> records;
  records.reserve(t.rows.size() + 1);
  records.push_back(t.header);
  for (const auto& r : t.rows) records.push_back(r);
  return write_records(records, delim);
}

/// Tab for .tsv/.tab files, comma otherwise.
inline char delimiter_for(const std::filesystem::path& path) {
  const auto ext = util::to_lower_ascii(path.extension().string());
  return (ext == ".tsv" || ext == ".tab") ? '\t' : ',';
}

inline Table read_table_file(const std::filesystem::path& path) {
  return parse_table(util::read_file(path), delimiter_for(path));
}

inline void write_table_file(const std::filesystem::path& path, const Table& t) {
  util::write_file(path, write_table(t, delimiter_for(path)));
}

}  // namespace csv
}  // namespace ethnocode
