#pragma once

// 8-bit binary PGM export of per-cell maps. Values are min-max normalised;
// the bounds go to a sidecar text file so the values can be recovered to
// within one grey level.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deepirl/error.hpp"
#include "deepirl/io.hpp"

namespace deepirl {

struct GrayImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // row-major, row 0 first
};

/// Grey levels for `values`: 0 at the minimum, 255 at the maximum, and 128
/// everywhere when the range is degenerate.
inline std::vector<std::uint8_t> normalize_to_gray(std::span<const double> values, double& lo, double& hi) {
  if (values.empty()) throw std::invalid_argument("cannot export an empty map");
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); }))
    throw NumericalError("map contains non-finite values");
  lo = *std::min_element(values.begin(), values.end());
  hi = *std::max_element(values.begin(), values.end());
  std::vector<std::uint8_t> out(values.size(), 128);
  if (hi > lo)
    for (std::size_t i = 0; i < values.size(); ++i)
      out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - lo) / (hi - lo)));
  return out;
}

inline std::filesystem::path pgm_sidecar_path(const std::filesystem::path& pgm) {
  auto p = pgm;
  p += ".bounds.txt";
  return p;
}

/// Writes `path` (P5) and `path.bounds.txt` holding the normalisation bounds.
inline void export_pgm(std::span<const double> values, int rows, int cols, const std::filesystem::path& path) {
  if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("map size does not match the image shape");
  double lo = 0.0, hi = 0.0;
  const auto gray = normalize_to_gray(values, lo, hi);
  std::string bytes = "P5 " + std::to_string(cols) + " " + std::to_string(rows) + " 255\n";
  bytes.append(gray.begin(), gray.end());
  io::write_file(path, bytes);
  io::Manifest m;
  m.set("min", lo);
  m.set("max", hi);
  m.set("rows", rows);
  m.set("cols", cols);
  m.save(pgm_sidecar_path(path));
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  int cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (!in || magic != "P5" || maxval != 255 || rows < 1 || cols < 1) throw DataError("not an 8-bit P5 image: " + path.string());
  const auto offset = static_cast<std::size_t>(in.tellg()) + 1;  // single whitespace after maxval
  const auto n = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != offset + n) throw DataError("truncated or oversized PGM: " + path.string());
  GrayImage img{rows, cols, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end())};
  return img;
}

/// Approximate original values from an exported image and its sidecar.
inline std::vector<double> decode_pgm(const std::filesystem::path& path) {
  const auto img = read_pgm(path);
  const auto m = io::Manifest::load(pgm_sidecar_path(path));
  const double lo = m.get_double("min"), hi = m.get_double("max");
  std::vector<double> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = hi > lo ? lo + (hi - lo) * img.pixels[i] / 255.0 : lo;
  return out;
}

}  // namespace deepirl
