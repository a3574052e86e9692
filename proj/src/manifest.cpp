#include "kovae/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace kovae::manifest {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("manifest: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

std::string Manifest::to_json() const {
  json j;
  j["command"] = command;
  j["resolved_config"] = resolved_config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["fingerprint"] = fingerprint();
  return j.dump(2);
}

Manifest Manifest::from_json(const std::string& text) {
  json j = json::parse(text);
  Manifest m;
  m.command = j.at("command");
  m.resolved_config = j.at("resolved_config");
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  return m;
}

std::string Manifest::fingerprint() const {
  std::ostringstream os;
  os << command << "\n" << resolved_config << "\n";
  for (const auto& [path, sha] : inputs) os << path << "=" << sha << "\n";
  return sha256_hex(os.str());
}

void write_manifest(const Manifest& m, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream os(out_dir + "/manifest.json", std::ios::trunc);
  os << m.to_json() << "\n";
}

bool up_to_date(const Manifest& m, const std::string& out_dir) {
  std::ifstream is(out_dir + "/manifest.json");
  if (!is) return false;
  std::stringstream ss;
  ss << is.rdbuf();
  Manifest existing;
  try {
    existing = Manifest::from_json(ss.str());
  } catch (...) {
    return false;
  }
  if (existing.fingerprint() != m.fingerprint()) return false;
  for (const auto& out : m.outputs)
    if (!fs::exists(fs::path(out_dir) / out)) return false;
  return true;
}

}  // namespace kovae::manifest
