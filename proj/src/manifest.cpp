#include "mpcnn/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mpcnn/errors.hpp"

namespace mpcnn {

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const {
  if (auto c = find_column(name)) return *c;
  fail(ErrorKind::Decode, "missing CSV column '" + std::string(name) + "'");
}

std::size_t CsvTable::add_column(const std::string& name, const std::string& fill) {
  if (auto c = find_column(name)) return *c;
  header.push_back(name);
  for (auto& r : rows) r.push_back(fill);
  return header.size() - 1;
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  bool quoted = false, at_line_start = true, skip_line = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (skip_line) {
      if (ch == '\n') {
        skip_line = false;
        at_line_start = true;
      }
      continue;
    }
    if (at_line_start && records.empty() && ch == '#') {
      skip_line = true;
      continue;
    }
    at_line_start = false;
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      record.push_back(std::move(cell));
      cell.clear();
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(std::move(cell));
      cell.clear();
      if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
      record.clear();
      at_line_start = true;
    } else {
      cell += ch;
    }
  }
  if (quoted) fail(ErrorKind::Decode, "unterminated quoted CSV field");
  if (!cell.empty() || !record.empty()) {
    record.push_back(std::move(cell));
    records.push_back(std::move(record));
  }
  CsvTable t;
  if (records.empty()) return t;
  t.header = std::move(records.front());
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != t.header.size())
      fail(ErrorKind::Decode, "CSV row " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                                  " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[i]));
  }
  return t;
}

namespace {

void append_cell(std::string& out, const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) {
    out += cell;
    return;
  }
  out += '"';
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void append_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    append_cell(out, row[i]);
  }
  out += '\n';
}

}  // namespace

std::string format_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& r : table.rows) append_row(out, r);
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void write_csv(const std::filesystem::path& path, const CsvTable& table, std::string_view preamble) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp);
    out << preamble << format_csv(table);
    if (!out) fail(ErrorKind::Io, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot move " + tmp + " to " + path.string() + ": " + ec.message());
}

namespace {

int parse_int(const std::string& s, const std::string& what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::Decode, "bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

std::vector<ManifestEntry> Manifest::select(std::string_view split, int group) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split && (group == 0 || e.group == group)) out.push_back(e);
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  Manifest m{path, read_csv(path), {}};
  const auto base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  const auto c_path = m.table.column("path");
  const auto c_label = m.table.column("label");
  const auto c_split = m.table.column("split");
  const auto c_group = m.table.find_column("group");
  const auto c_bilateral = m.table.find_column("bilateral_path");
  for (std::size_t i = 0; i < m.table.rows.size(); ++i) {
    const auto& r = m.table.rows[i];
    ManifestEntry e;
    e.row = i;
    e.path = resolve(r[c_path]);
    e.label = parse_int(r[c_label], "label");
    if (e.label < 0) fail(ErrorKind::InvalidLabel, "negative label in " + path.string());
    e.split = r[c_split];
    if (e.split != "train" && e.split != "val")
      fail(ErrorKind::Decode, "split must be 'train' or 'val', got '" + e.split + "'");
    if (c_group && !r[*c_group].empty()) e.group = parse_int(r[*c_group], "group");
    if (c_bilateral && !r[*c_bilateral].empty()) e.bilateral_path = resolve(r[*c_bilateral]);
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace mpcnn
