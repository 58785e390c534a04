#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepirl::nn {

/// Dense NCHW tensor of doubles.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw std::invalid_argument("negative tensor dimension");
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t offset(int in, int ic, int y, int x) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x;
  }
  double& operator()(int in, int ic, int y, int x) { return data[offset(in, ic, y, x)]; }
  double operator()(int in, int ic, int y, int x) const { return data[offset(in, ic, y, x)]; }

  double* plane_ptr(int in, int ic) { return data.data() + offset(in, ic, 0, 0); }
  const double* plane_ptr(int in, int ic) const { return data.data() + offset(in, ic, 0, 0); }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace deepirl::nn
