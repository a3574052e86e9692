#include "kovae/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace kovae {

namespace {
const char kMagic[6] = {'K', 'V', 'A', 'R', '1', '\n'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("archive: truncated file");
  return v;
}
}  // namespace

size_t Archive::Entry::element_count() const {
  size_t n = 1;
  for (auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

void Archive::put_f64(const std::string& key, const std::vector<double>& data,
                      std::vector<uint32_t> dims) {
  Entry e;
  e.dtype = 0;
  e.dims = std::move(dims);
  e.f64 = data;
  if (e.element_count() != data.size())
    throw std::invalid_argument("archive: dims do not match data size");
  entries_[key] = std::move(e);
}

void Archive::put_u8(const std::string& key, const std::vector<uint8_t>& data,
                     std::vector<uint32_t> dims) {
  Entry e;
  e.dtype = 1;
  e.dims = std::move(dims);
  e.u8 = data;
  if (e.element_count() != data.size())
    throw std::invalid_argument("archive: dims do not match data size");
  entries_[key] = std::move(e);
}

void Archive::put_text(const std::string& key, const std::string& text) {
  Entry e;
  e.dtype = 2;
  e.dims = {static_cast<uint32_t>(text.size())};
  e.u8.assign(text.begin(), text.end());
  entries_[key] = std::move(e);
}

bool Archive::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

const Archive::Entry& Archive::at(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw std::out_of_range("archive: missing key '" + key + "'");
  return it->second;
}

std::string Archive::text(const std::string& key) const {
  const Entry& e = at(key);
  return std::string(e.u8.begin(), e.u8.end());
}

std::vector<std::string> Archive::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void Archive::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("archive: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, static_cast<uint32_t>(entries_.size()));
  for (const auto& [key, e] : entries_) {
    write_pod<uint16_t>(os, static_cast<uint16_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
    write_pod<uint8_t>(os, static_cast<uint8_t>(e.dtype));
    write_pod<uint8_t>(os, static_cast<uint8_t>(e.dims.size()));
    for (auto d : e.dims) write_pod<uint32_t>(os, d);
    if (e.dtype == 0) {
      os.write(reinterpret_cast<const char*>(e.f64.data()),
               static_cast<std::streamsize>(e.f64.size() * sizeof(double)));
    } else {
      os.write(reinterpret_cast<const char*>(e.u8.data()),
               static_cast<std::streamsize>(e.u8.size()));
    }
  }
  if (!os) throw std::runtime_error("archive: write failed for " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("archive: cannot open " + path);
  char magic[6];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("archive: bad magic in " + path);
  Archive a;
  uint32_t count = read_pod<uint32_t>(is);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t klen = read_pod<uint16_t>(is);
    std::string key(klen, '\0');
    is.read(key.data(), klen);
    Entry e;
    e.dtype = read_pod<uint8_t>(is);
    uint8_t ndim = read_pod<uint8_t>(is);
    for (uint8_t d = 0; d < ndim; ++d)
      e.dims.push_back(read_pod<uint32_t>(is));
    size_t n = e.element_count();
    if (e.dtype == 0) {
      e.f64.resize(n);
      is.read(reinterpret_cast<char*>(e.f64.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    } else {
      e.u8.resize(n);
      is.read(reinterpret_cast<char*>(e.u8.data()),
              static_cast<std::streamsize>(n));
    }
    if (!is) throw std::runtime_error("archive: truncated entry in " + path);
    a.entries_[key] = std::move(e);
  }
  return a;
}

}  // namespace kovae
