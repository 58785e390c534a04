#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deepirl/error.hpp"

namespace deepirl::io {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed endianness is not supported");

namespace detail {

template <class T>
T byteswap_if_needed(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
}

}  // namespace detail

// Little-endian float32 / int32 blobs.

inline void append_f32(std::string& out, double value) {
  const float f = detail::byteswap_if_needed(static_cast<float>(value));
  char buf[4];
  std::memcpy(buf, &f, 4);
  out.append(buf, 4);
}

inline void append_i32(std::string& out, std::int32_t value) {
  const std::int32_t v = detail::byteswap_if_needed(value);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

class BlobReader {
public:
  explicit BlobReader(std::string bytes) : bytes_(std::move(bytes)) {}

  float f32() {
    float f;
    std::memcpy(&f, take(4), 4);
    return detail::byteswap_if_needed(f);
  }
  std::int32_t i32() {
    std::int32_t v;
    std::memcpy(&v, take(4), 4);
    return detail::byteswap_if_needed(v);
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("blob truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

/// Ordered `key value` text records. Keys may repeat; insertion order is
/// preserved so manifests serialize byte-identically.
class Manifest {
public:
  void set(const std::string& key, const std::string& value) {
    entries_.emplace_back(key, value);
  }
  template <class T>
  void set(const std::string& key, const T& value) {
    std::ostringstream ss;
    ss.precision(17);
    ss << value;
    set(key, ss.str());
  }

  bool has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    throw DataError("manifest missing key '" + key + "'");
  }
  double get_double(const std::string& key) const { return parse_double(get(key), key); }
  long long get_int(const std::string& key) const { return parse_int(get(key), key); }

  std::vector<std::string> get_all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k == key) out.push_back(v);
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " " + v + "\n";
    return out;
  }

  static Manifest parse(const std::string& text) {
    Manifest m;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto sp = line.find(' ');
      if (sp == std::string::npos)
        m.set(line, std::string{});
      else
        m.set(line.substr(0, sp), line.substr(sp + 1));
    }
    return m;
  }

  void save(const std::filesystem::path& path) const { write_file(path, str()); }
  static Manifest load(const std::filesystem::path& path) { return parse(read_file(path)); }

  static double parse_double(const std::string& s, const std::string& what) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw DataError("bad number for '" + what + "': " + s);
    }
  }
  static long long parse_int(const std::string& s, const std::string& what) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw DataError("bad integer for '" + what + "': " + s);
    }
  }

private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace deepirl::io
