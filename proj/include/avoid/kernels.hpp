// SPDX-License-Identifier: Apache-2.0
//
// Numeric kernels used by the toy transformer, the penalty scorer and the
// pairwise metric reports. Every kernel has a serial reference in
// avoid::kernels::serial and an OpenMP version in avoid::kernels. Each output
// element is produced by one thread with a fixed sequential accumulation
// order, so both versions return bit-identical results for any thread count.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace avoid::kernels {

/// Work (rows * cols) below which the OpenMP kernels stay on one thread.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 15;

/// Sequential dot product in float, left to right.
float dot(std::span<const float> a, std::span<const float> b);

/// out[r] = sum_c w[r * cols + c] * x[c]  (row-major, rows = out.size()).
void matvec(std::span<const float> w, std::span<const float> x, std::span<float> out);

/// Like matvec but adds bias[r] after the accumulation.
void matvec_bias(std::span<const float> w, std::span<const float> x,
                 std::span<const float> bias, std::span<float> out);

/// Cosine similarity in double precision, clamped to [-1, 1]. Throws
/// ConfigError on mismatched dimensions or a zero vector.
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(std::span<const double> a, std::span<const double> b);

/// Maximum cosine between `query` and each row of the row-major `rows` matrix.
/// Throws ConfigError when `rows` is empty.
double max_cosine(std::span<const float> query, std::span<const float> rows);

/// Fills an n x n matrix (row-major) with score(i, j) for all i != j.
/// The diagonal is left at zero.
std::vector<double> pairwise(std::size_t n,
                             const std::function<double(std::size_t, std::size_t)>& score);

namespace serial {

void matvec(std::span<const float> w, std::span<const float> x, std::span<float> out);
void matvec_bias(std::span<const float> w, std::span<const float> x,
                 std::span<const float> bias, std::span<float> out);
double max_cosine(std::span<const float> query, std::span<const float> rows);
std::vector<double> pairwise(std::size_t n,
                             const std::function<double(std::size_t, std::size_t)>& score);

}  // namespace serial

}  // namespace avoid::kernels
