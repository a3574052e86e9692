#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kovae {

/// Single-file container of named arrays. Layout:
///   magic "KVAR1\n", u32 entry count, then per entry:
///   u16 name length, name bytes, u8 dtype (0=f64, 1=u8, 2=bytes),
///   u8 ndim, u32 dims[ndim], raw little-endian payload.
/// Doubles round-trip bit-exactly, which the checkpoint contract relies on.
class Archive {
 public:
  struct Entry {
    int dtype = 0;  // 0 f64, 1 u8, 2 opaque bytes
    std::vector<uint32_t> dims;
    std::vector<double> f64;
    std::vector<uint8_t> u8;
    size_t element_count() const;
  };

  void put_f64(const std::string& key, const std::vector<double>& data,
               std::vector<uint32_t> dims);
  void put_u8(const std::string& key, const std::vector<uint8_t>& data,
              std::vector<uint32_t> dims);
  void put_text(const std::string& key, const std::string& text);

  bool has(const std::string& key) const;
  const Entry& at(const std::string& key) const;
  std::string text(const std::string& key) const;
  std::vector<std::string> keys() const;

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace kovae
