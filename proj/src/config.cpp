#include "kovae/config.hpp"

#include <fstream>
#include <sstream>

namespace kovae::cfg {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

KeyValues KeyValues::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str());
}

KeyValues KeyValues::parse_text(const std::string& text) {
  KeyValues out;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: bad section header at line " +
                          std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " +
                        std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: empty key at line " + std::to_string(lineno));
    out.kv_[section.empty() ? key : section + "." + key] = val;
  }
  return out;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

void KeyValues::apply_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key=value: " + assignment);
  std::string key = trim(assignment.substr(0, eq));
  std::string val = trim(assignment.substr(eq + 1));
  if (key.empty()) throw ConfigError("override with empty key");
  kv_[key] = val;
}

bool KeyValues::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KeyValues::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

std::string KeyValues::get_or(const std::string& key,
                              const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw ConfigError("config: '" + key + "' is not a number: " + it->second);
  }
}

int KeyValues::get_int(const std::string& key, int fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (...) {
    throw ConfigError("config: '" + key + "' is not an integer: " + it->second);
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' is not a boolean: " + v);
}

std::vector<double> KeyValues::get_list(
    const std::string& key, const std::vector<double>& fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (...) {
      throw ConfigError("config: '" + key + "' has a bad list entry: " + tok);
    }
  }
  return out;
}

std::string KeyValues::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace kovae::cfg
