#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace kovae::cfg {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat "[section]\nkey = value" text. Keys are addressed as "section.key";
/// keys before any section header have no prefix. '#' and ';' start comments.
class KeyValues {
 public:
  static KeyValues parse_file(const std::string& path);
  static KeyValues parse_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  /// "key=value" override, as given on the command line.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& items() const { return kv_; }
  /// Canonical serialized form (sorted keys), used for manifests and logs.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace kovae::cfg
