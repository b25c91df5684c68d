// SPDX-License-Identifier: Apache-2.0

#include "avoid/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "avoid/common.hpp"

namespace avoid::kernels {

namespace {

void check_matvec_shape(std::size_t w_size, std::size_t x_size, std::size_t out_size) {
  if (w_size != x_size * out_size) {
    throw ConfigError("matvec: weight size " + std::to_string(w_size) + " != " +
                      std::to_string(out_size) + " x " + std::to_string(x_size));
  }
}

template <typename T>
double squared_norm(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

template <typename T>
// sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb): when a == b the dot product
// equals aa bit for bit and sqrt(aa * aa) rounds back to aa, so cos(a, a) is
// exactly 1.
double cosine_with_norm(std::span<const T> a, double aa, std::span<const T> b) {
  double d = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    bb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (bb == 0.0) throw ConfigError("cosine: zero vector");
  return std::clamp(d / std::sqrt(aa * bb), -1.0, 1.0);
}

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw ConfigError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ConfigError("cosine: empty vectors");
  const double an = squared_norm(a);
  if (an == 0.0) throw ConfigError("cosine: zero vector");
  return cosine_with_norm(a, an, b);
}

std::size_t rows_of(std::span<const float> query, std::span<const float> rows) {
  if (query.empty()) throw ConfigError("max_cosine: empty query");
  if (rows.empty()) throw ConfigError("max_cosine: empty negative set");
  if (rows.size() % query.size() != 0) throw ConfigError("max_cosine: ragged rows");
  return rows.size() / query.size();
}

}  // namespace

float dot(std::span<const float> a, std::span<const float> b) {
  float s = 0.0F;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }

double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

namespace serial {

void matvec(std::span<const float> w, std::span<const float> x, std::span<float> out) {
  check_matvec_shape(w.size(), x.size(), out.size());
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(w.subspan(r * cols, cols), x);
}

void matvec_bias(std::span<const float> w, std::span<const float> x,
                 std::span<const float> bias, std::span<float> out) {
  check_matvec_shape(w.size(), x.size(), out.size());
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = dot(w.subspan(r * cols, cols), x) + bias[r];
  }
}

double max_cosine(std::span<const float> query, std::span<const float> rows) {
  const std::size_t n = rows_of(query, rows);
  const std::size_t dim = query.size();
  const double qn = squared_norm(query);
  if (qn == 0.0) throw ConfigError("cosine: zero vector");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < n; ++r) {
    best = std::max(best, cosine_with_norm(query, qn, rows.subspan(r * dim, dim)));
  }
  return best;
}

std::vector<double> pairwise(std::size_t n,
                             const std::function<double(std::size_t, std::size_t)>& score) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) m[i * n + j] = score(i, j);
    }
  }
  return m;
}

}  // namespace serial

void matvec(std::span<const float> w, std::span<const float> x, std::span<float> out) {
  check_matvec_shape(w.size(), x.size(), out.size());
  const std::size_t cols = x.size();
  const auto rows = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static) if (w.size() >= kParallelThreshold)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    out[ur] = dot(w.subspan(ur * cols, cols), x);
  }
}

void matvec_bias(std::span<const float> w, std::span<const float> x,
                 std::span<const float> bias, std::span<float> out) {
  check_matvec_shape(w.size(), x.size(), out.size());
  const std::size_t cols = x.size();
  const auto rows = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static) if (w.size() >= kParallelThreshold)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    out[ur] = dot(w.subspan(ur * cols, cols), x) + bias[ur];
  }
}

double max_cosine(std::span<const float> query, std::span<const float> rows) {
  const std::size_t n = rows_of(query, rows);
  const std::size_t dim = query.size();
  const double qn = squared_norm(query);
  if (qn == 0.0) throw ConfigError("cosine: zero vector");
  double best = -std::numeric_limits<double>::infinity();
  // A zero row throws inside the region; OpenMP cannot propagate that, so rows
  // are screened here first.
  bool has_zero_row = false;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) reduction(max : best) reduction(|| : has_zero_row) \
    if (rows.size() >= kParallelThreshold)
  for (std::ptrdiff_t r = 0; r < count; ++r) {
    const auto row = rows.subspan(static_cast<std::size_t>(r) * dim, dim);
    if (squared_norm(row) == 0.0) {
      has_zero_row = true;
      continue;
    }
    best = std::max(best, cosine_with_norm(query, qn, row));
  }
  if (has_zero_row) throw ConfigError("cosine: zero vector");
  return best;
}

std::vector<double> pairwise(std::size_t n,
                             const std::function<double(std::size_t, std::size_t)>& score) {
  std::vector<double> m(n * n, 0.0);
  const auto cells = static_cast<std::ptrdiff_t>(n * n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const auto i = static_cast<std::size_t>(c) / n;
    const auto j = static_cast<std::size_t>(c) % n;
    if (i != j) m[static_cast<std::size_t>(c)] = score(i, j);
  }
  return m;
}

}  // namespace avoid::kernels
