#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "calib/error.hpp"

namespace calib {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// y = W x + b
inline void affine(const Mat& w, const Vec& x, const Vec& b, Vec& y) {
  require(x.size() == w.cols, "affine: input dimension ", x.size(),
          " does not match weight columns ", w.cols);
  y.assign(w.rows, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double acc = b[i];
    const double* row = &w.data[i * w.cols];
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

// y = W^T g  (backprop of affine through the input)
inline void affine_t(const Mat& w, const Vec& g, Vec& y) {
  y.assign(w.cols, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double gi = g[i];
    const double* row = &w.data[i * w.cols];
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += row[j] * gi;
  }
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double linf_norm(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace calib
