#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mpcnn::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

/// The `mpcnn` command line. `args[0]` is the program name.
/// Subcommands: score, split, bilateral, train, eval, gradcheck, featmaps, filters.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// The `mpcnn-synth` demo-data generator: shape images plus a manifest.
int run_synth(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads a key=value config file into `--key=value` arguments. Blank lines
/// and lines starting with '#' are skipped.
std::vector<std::string> config_file_args(const std::string& path);

}  // namespace mpcnn::cli
