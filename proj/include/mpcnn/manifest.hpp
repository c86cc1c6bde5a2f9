#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpcnn {

/// Minimal RFC 4180 table: a header row plus string cells. Lines starting
/// with '#' before the header are treated as comments.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find_column(std::string_view name) const;
  std::size_t column(std::string_view name) const;  // throws if missing
  std::size_t add_column(const std::string& name, const std::string& fill = "");
};

CsvTable parse_csv(std::string_view text);
std::string format_csv(const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);
/// Writes atomically (temporary file + rename).
void write_csv(const std::filesystem::path& path, const CsvTable& table, std::string_view preamble = {});

/// One image record of a dataset manifest (`path,label,split` plus optional
/// `group` and `bilateral_path` columns). Paths are resolved against the
/// manifest's directory.
struct ManifestEntry {
  std::filesystem::path path;
  int label = 0;
  std::string split;  // "train" or "val"
  int group = 0;      // 0 when the manifest has no group column
  std::filesystem::path bilateral_path;
  std::size_t row = 0;  // index into the source table
};

struct Manifest {
  std::filesystem::path source;
  CsvTable table;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> select(std::string_view split, int group = 0) const;
};

Manifest load_manifest(const std::filesystem::path& path);

}  // namespace mpcnn
