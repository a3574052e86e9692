#pragma once

#include <map>
#include <string>
#include <vector>

namespace kovae::manifest {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

/// Run manifest written before any work starts: the resolved configuration,
/// content hashes of every input file, and the declared outputs. A re-run
/// whose manifest matches and whose outputs exist is skipped unless forced.
struct Manifest {
  std::string command;
  std::string resolved_config;                  // canonical key=value text
  std::map<std::string, std::string> inputs;    // path -> sha256
  std::vector<std::string> outputs;             // paths relative to out dir

  std::string to_json() const;
  static Manifest from_json(const std::string& text);

  /// Identity hash over command + config + input hashes.
  std::string fingerprint() const;
};

void write_manifest(const Manifest& m, const std::string& out_dir);
/// True when an identical manifest exists in out_dir and every declared
/// output is present.
bool up_to_date(const Manifest& m, const std::string& out_dir);

}  // namespace kovae::manifest
