#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ethnocode/csv.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  auto operator<=>(const Date&) const = default;

  std::string to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
  }
};

inline bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

/// Parses YYYYMMDD.
inline std::optional<Date> parse_compact_date(std::string_view s) {
  if (s.size() != 8) return std::nullopt;
  for (char c : s)
    if (c < '0' || c > '9') return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + (s[i] - '0');
    return v;
  };
  Date d{num(0, 4), num(4, 2), num(6, 2)};
  static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (d.month < 1 || d.month > 12 || d.day < 1) return std::nullopt;
  int max_day = days[d.month - 1] + ((d.month == 2 && is_leap_year(d.year)) ? 1 : 0);
  if (d.day > max_day) return std::nullopt;
  return d;
}

enum class SourceKind { interview, fieldnote, other };

constexpr std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::interview: return "interview";
    case SourceKind::fieldnote: return "fieldnote";
    case SourceKind::other: return "other";
  }
  return "other";
}

struct DocumentMeta {
  std::string participant_id;
  /// Absent only for documents whose id does not follow the file naming
  /// convention (e.g. imported from a QDA spreadsheet export).
  std::optional<Date> collection_date;
  std::string collector;
  SourceKind source_kind = SourceKind::other;

  bool operator==(const DocumentMeta&) const = default;
};

/// `<participant>_<YYYYMMDD>_<collector>[_<kind>].<ext>`
inline DocumentMeta parse_filename(std::string_view name) {
  std::filesystem::path p{std::string(name)};
  const std::string stem = p.stem().string();
  auto parts = util::split(stem, "_");
  if (parts.size() < 3 || parts[0].empty() || parts[2].empty())
    throw Error(ErrorKind::MalformedFilename,
                "\"" + std::string(name) + "\" is not <id>_<YYYYMMDD>_<collector>");
  auto date = parse_compact_date(parts[1]);
  if (!date) throw Error(ErrorKind::InvalidDate, "\"" + parts[1] + "\" in \"" + std::string(name) + "\"");
  DocumentMeta meta{parts[0], date, parts[2], SourceKind::other};
  if (parts.size() >= 4) {
    const auto kind = util::to_lower_ascii(parts[3]);
    if (kind == "interview") meta.source_kind = SourceKind::interview;
    else if (kind == "fieldnote" || kind == "fieldnotes") meta.source_kind = SourceKind::fieldnote;
  }
  return meta;
}

/// Document metadata for an id that may or may not follow the naming
/// convention.
inline DocumentMeta meta_for_document_id(const std::string& doc_id) {
  try {
    return parse_filename(doc_id + ".txt");
  } catch (const Error&) {
    return DocumentMeta{doc_id, std::nullopt, "", SourceKind::other};
  }
}

struct UnitKey {
  std::string doc_id;
  std::size_t reference = 0;

  auto operator<=>(const UnitKey&) const = default;
  bool operator==(const UnitKey&) const = default;

  std::string to_string() const { return doc_id + "#" + std::to_string(reference); }

  static std::optional<UnitKey> parse(std::string_view s) {
    const auto pos = s.rfind('#');
    if (pos == std::string_view::npos || pos == 0) return std::nullopt;
    auto ref = util::parse_int(s.substr(pos + 1));
    if (!ref || *ref < 0) return std::nullopt;
    return UnitKey{std::string(s.substr(0, pos)), static_cast<std::size_t>(*ref)};
  }
};

struct Unit {
  std::string doc_id;
  std::size_t reference = 0;
  std::optional<std::string> speaker;
  std::optional<std::string> section;
  std::string text;
  std::set<std::string> codes;
  std::map<std::string, std::string> extra_metadata;

  UnitKey key() const { return {doc_id, reference}; }
  bool operator==(const Unit&) const = default;
};

enum class CodeOrigin { human, machine, review };

constexpr std::string_view to_string(CodeOrigin o) {
  switch (o) {
    case CodeOrigin::human: return "human";
    case CodeOrigin::machine: return "machine";
    case CodeOrigin::review: return "review";
  }
  return "human";
}

/// A code decision on a unit. Negative assignments are explicit "does not
/// apply" records produced by second-pass review.
struct CodeAssignment {
  UnitKey unit;
  std::string code;
  CodeOrigin origin = CodeOrigin::human;
  bool positive = true;

  bool operator==(const CodeAssignment&) const = default;
};

/// Ordered paragraph-level units. Immutable once built; the constructor
/// sorts units by (document, reference) and checks the invariants.
class Corpus {
 public:
  Corpus() = default;

  Corpus(std::vector<Unit> units, std::map<std::string, DocumentMeta> documents,
         std::set<std::string> codebook = {}, std::vector<CodeAssignment> assignments = {})
      : units_(std::move(units)), documents_(std::move(documents)), codebook_(std::move(codebook)) {
    for (auto& u : units_) {
      if (u.speaker && u.speaker->empty()) u.speaker.reset();
      if (u.section && u.section->empty()) u.section.reset();
    }
    std::sort(units_.begin(), units_.end(),
              [](const Unit& a, const Unit& b) { return a.key() < b.key(); });
    for (std::size_t i = 0; i < units_.size(); ++i) {
      const auto& u = units_[i];
      if (i > 0 && units_[i - 1].key() == u.key())
        throw Error(ErrorKind::DuplicateUnit, u.key().to_string());
      const bool first_of_doc = i == 0 || units_[i - 1].doc_id != u.doc_id;
      const std::size_t expected = first_of_doc ? 0 : units_[i - 1].reference + 1;
      if (u.reference != expected)
        throw Error(ErrorKind::InvalidArgument, "references of " + u.doc_id + " are not contiguous from 0");
      if (u.text.empty()) throw Error(ErrorKind::InvalidArgument, "empty text in " + u.key().to_string());
      if (!documents_.count(u.doc_id)) documents_.emplace(u.doc_id, meta_for_document_id(u.doc_id));
      codebook_.insert(u.codes.begin(), u.codes.end());
      if (first_of_doc) doc_ranges_[u.doc_id] = {i, i};
      doc_ranges_[u.doc_id].second = i + 1;
    }
    for (auto& a : assignments) {
      if (!find(a.unit)) throw Error(ErrorKind::NotFound, "assignment for unknown unit " + a.unit.to_string());
      codebook_.insert(a.code);
      assignments_[{a.unit, a.code}] = std::move(a);
    }
  }

  const std::vector<Unit>& units() const { return units_; }
  const std::map<std::string, DocumentMeta>& documents() const { return documents_; }
  const std::set<std::string>& codebook() const { return codebook_; }
  std::size_t size() const { return units_.size(); }
  bool empty() const { return units_.empty(); }

  std::vector<CodeAssignment> assignments() const {
    std::vector<CodeAssignment> out;
    out.reserve(assignments_.size());
    for (const auto& [k, a] : assignments_) out.push_back(a);
    return out;
  }

  /// The recorded assignment for (unit, code); a code on a unit with no
  /// record is human-origin.
  std::optional<CodeAssignment> assignment(const UnitKey& key, const std::string& code) const {
    auto it = assignments_.find({key, code});
    if (it != assignments_.end()) return it->second;
    const Unit* u = find(key);
    if (u && u->codes.count(code)) return CodeAssignment{key, code, CodeOrigin::human, true};
    return std::nullopt;
  }

  const Unit* find(const UnitKey& key) const {
    auto it = doc_ranges_.find(key.doc_id);
    if (it == doc_ranges_.end()) return nullptr;
    const auto [b, e] = it->second;
    if (key.reference >= e - b) return nullptr;
    return &units_[b + key.reference];
  }

  const Unit& at(const UnitKey& key) const {
    const Unit* u = find(key);
    if (!u) throw Error(ErrorKind::NotFound, "unit " + key.to_string());
    return *u;
  }

  /// Units of one document in reference order (empty for documents with
  /// no units).
  std::span<const Unit> document_units(const std::string& doc_id) const {
    if (!documents_.count(doc_id)) throw Error(ErrorKind::NotFound, "document " + doc_id);
    auto it = doc_ranges_.find(doc_id);
    if (it == doc_ranges_.end()) return {};
    return std::span<const Unit>(units_).subspan(it->second.first, it->second.second - it->second.first);
  }

  bool operator==(const Corpus& o) const {
    return units_ == o.units_ && documents_ == o.documents_ && codebook_ == o.codebook_ &&
           assignments_ == o.assignments_;
  }

 private:
  std::vector<Unit> units_;
  std::map<std::string, DocumentMeta> documents_;
  std::set<std::string> codebook_;
  std::map<std::pair<UnitKey, std::string>, CodeAssignment> assignments_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> doc_ranges_;
};

// ---------------------------------------------------------------- ingest

enum class Granularity { paragraph, document };

/// Paragraphs are separated by one or more blank (whitespace-only) lines.
/// Input newlines are normalized to LF and each paragraph loses trailing
/// whitespace.
inline std::vector<std::string> split_paragraphs(std::string_view text) {
  const std::string norm = util::normalize_newlines(text);
  std::vector<std::string> paragraphs;
  std::string current;
  for (const auto& line : util::split(norm, "\n")) {
    if (util::trim(line).empty()) {
      if (!current.empty()) paragraphs.emplace_back(util::trim_right(current));
      current.clear();
      continue;
    }
    if (!current.empty()) current += '\n';
    current += line;
  }
  if (!current.empty()) paragraphs.emplace_back(util::trim_right(current));
  return paragraphs;
}

inline std::vector<Unit> units_from_text(const std::string& doc_id, std::string_view text, Granularity g) {
  std::vector<Unit> units;
  std::vector<std::string> pieces;
  if (g == Granularity::paragraph) {
    pieces = split_paragraphs(text);
  } else {
    std::string whole(util::trim_right(util::normalize_newlines(text)));
    if (!util::trim(whole).empty()) pieces.push_back(std::move(whole));
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    Unit u;
    u.doc_id = doc_id;
    u.reference = i;
    u.text = std::move(pieces[i]);
    units.push_back(std::move(u));
  }
  return units;
}

/// Reads every `*.txt` file of `dir` (sorted by name). Each file is one
/// document keyed by its file stem.
inline Corpus ingest_directory(const std::filesystem::path& dir, Granularity granularity) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::IoError, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && util::to_lower_ascii(entry.path().extension().string()) == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<Unit> units;
  std::map<std::string, DocumentMeta> documents;
  for (const auto& f : files) {
    DocumentMeta meta = parse_filename(f.filename().string());
    std::string text = util::read_file(f);
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
    if (!util::is_valid_utf8(text)) throw Error(ErrorKind::EncodingError, f.filename().string() + " is not valid UTF-8");
    const std::string doc_id = f.stem().string();
    documents.emplace(doc_id, std::move(meta));
    auto doc_units = units_from_text(doc_id, text, granularity);
    std::move(doc_units.begin(), doc_units.end(), std::back_inserter(units));
  }
  return Corpus(std::move(units), std::move(documents));
}

inline std::string reconstruct_document(const Corpus& corpus, const std::string& doc_id) {
  std::string out;
  bool first = true;
  for (const auto& u : corpus.document_units(doc_id)) {
    if (!first) out += "\n\n";
    out += u.text;
    first = false;
  }
  return out;
}

inline std::vector<Unit> context_window(const Corpus& corpus, const std::string& doc_id, std::size_t reference,
                                        std::size_t radius) {
  const auto& center = corpus.at({doc_id, reference});
  (void)center;
  auto doc = corpus.document_units(doc_id);
  const std::size_t lo = reference >= radius ? reference - radius : 0;
  const std::size_t hi = std::min(doc.size() - 1, reference + radius);
  return {doc.begin() + static_cast<std::ptrdiff_t>(lo), doc.begin() + static_cast<std::ptrdiff_t>(hi) + 1};
}

// ---------------------------------------------------------------- tables

enum class CodeSeparator { newline_in_cell, comma, colon };

constexpr std::string_view separator_string(CodeSeparator s) {
  switch (s) {
    case CodeSeparator::newline_in_cell: return "\n";
    case CodeSeparator::comma: return ",";
    case CodeSeparator::colon: return ":";
  }
  return "\n";
}

/// Column names of the one-paragraph-per-line table.
struct TableSchema {
  std::string document = "Document";
  std::string reference = "Reference";
  std::string speaker = "Speaker";
  std::string section = "Section";
  std::string codes = "Codes";
  std::string text = "Quotation Content";

  bool is_core(const std::string& name) const {
    return name == document || name == reference || name == speaker || name == section || name == codes ||
           name == text;
  }
};

inline Table export_table(const Corpus& corpus, CodeSeparator sep, const TableSchema& schema = {}) {
  const auto sep_str = separator_string(sep);
  for (const auto& code : corpus.codebook()) {
    const bool collides = code.find(sep_str) != std::string::npos ||
                          (sep == CodeSeparator::newline_in_cell && code.find('\r') != std::string::npos);
    if (collides) throw Error(ErrorKind::SeparatorCollision, "code \"" + code + "\" contains the separator");
  }
  std::set<std::string> extra_keys;
  for (const auto& u : corpus.units())
    for (const auto& [k, v] : u.extra_metadata) extra_keys.insert(k);
  for (const auto& k : extra_keys)
    if (schema.is_core(k)) throw Error(ErrorKind::SchemaError, "metadata key \"" + k + "\" shadows a core column");

  Table t;
  t.header = {schema.document, schema.reference, schema.speaker, schema.section, schema.codes, schema.text};
  t.header.insert(t.header.end(), extra_keys.begin(), extra_keys.end());
  for (const auto& u : corpus.units()) {
    std::vector<std::string> row{u.doc_id,
                                 std::to_string(u.reference),
                                 u.speaker.value_or(""),
                                 u.section.value_or(""),
                                 util::join(u.codes, sep_str),
                                 u.text};
    for (const auto& k : extra_keys) {
      auto it = u.extra_metadata.find(k);
      row.push_back(it == u.extra_metadata.end() ? "" : it->second);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::set<std::string> parse_codes_cell(std::string_view cell, CodeSeparator sep) {
  std::set<std::string> codes;
  std::string normalized = sep == CodeSeparator::newline_in_cell ? util::normalize_newlines(cell) : std::string(cell);
  for (const auto& part : util::split(normalized, separator_string(sep))) {
    auto c = util::trim(part);
    if (!c.empty()) codes.emplace(c);
  }
  return codes;
}

/// Inverse of export_table. References are renumbered to a contiguous
/// 0-based ordinal per document (in source order); a source reference that
/// differs from its ordinal is kept in extra_metadata["source_reference"].
/// Columns other than the six core ones become extra_metadata; empty cells
/// are omitted.
inline Corpus import_table(const Table& table, CodeSeparator sep, const TableSchema& schema = {}) {
  const std::size_t c_text = table.require_column(schema.text);
  const std::size_t c_doc = table.require_column(schema.document);
  const std::size_t c_ref = table.require_column(schema.reference);
  const auto c_speaker = table.column(schema.speaker);
  const auto c_section = table.column(schema.section);
  const auto c_codes = table.column(schema.codes);

  struct Row {
    long long source_ref;
    Unit unit;
  };
  std::map<std::string, std::vector<Row>> by_doc;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto ref = util::parse_int(row[c_ref]);
    if (!ref)
      throw Error(ErrorKind::SchemaError,
                  "row " + std::to_string(r + 2) + ": reference \"" + row[c_ref] + "\" is not an integer");
    if (row[c_doc].empty()) throw Error(ErrorKind::SchemaError, "row " + std::to_string(r + 2) + ": empty document id");
    if (row[c_text].empty()) throw Error(ErrorKind::SchemaError, "row " + std::to_string(r + 2) + ": empty text");
    Unit u;
    u.doc_id = row[c_doc];
    u.text = row[c_text];
    if (c_speaker && !row[*c_speaker].empty()) u.speaker = row[*c_speaker];
    if (c_section && !row[*c_section].empty()) u.section = row[*c_section];
    if (c_codes) u.codes = parse_codes_cell(row[*c_codes], sep);
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (schema.is_core(table.header[c]) || row[c].empty()) continue;
      u.extra_metadata[table.header[c]] = row[c];
    }
    by_doc[u.doc_id].push_back({*ref, std::move(u)});
  }

  std::vector<Unit> units;
  for (auto& [doc, rows] : by_doc) {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.source_ref < b.source_ref; });
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0 && rows[i].source_ref == rows[i - 1].source_ref)
        throw Error(ErrorKind::DuplicateUnit, doc + "#" + std::to_string(rows[i].source_ref));
      auto& u = rows[i].unit;
      u.reference = i;
      if (rows[i].source_ref != static_cast<long long>(i) && !u.extra_metadata.count("source_reference"))
        u.extra_metadata["source_reference"] = std::to_string(rows[i].source_ref);
      units.push_back(std::move(u));
    }
  }
  return Corpus(std::move(units), {});
}

inline Corpus read_corpus_table(const std::filesystem::path& path, CodeSeparator sep = CodeSeparator::newline_in_cell,
                                const TableSchema& schema = {}) {
  return import_table(csv::read_table_file(path), sep, schema);
}

inline void write_corpus_table(const std::filesystem::path& path, const Corpus& corpus,
                               CodeSeparator sep = CodeSeparator::newline_in_cell, const TableSchema& schema = {}) {
  csv::write_table_file(path, export_table(corpus, sep, schema));
}

}  // namespace ethnocode
