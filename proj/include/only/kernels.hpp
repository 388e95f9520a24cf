#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace only {

// Dense row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  float& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  float at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

namespace kernels {

// y += x * W, with W of shape [x.size() x y.size()].
inline void matvec_accumulate(std::span<const float> x, const Matrix& w, std::span<float> y) {
  assert(x.size() == w.rows && y.size() == w.cols);
  const std::size_t cols = w.cols;
  float* __restrict out = y.data();
  for (std::size_t i = 0; i < w.rows; ++i) {
    const float xi = x[i];
    const float* __restrict wr = w.data.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += xi * wr[j];
  }
}

inline std::vector<float> matvec(std::span<const float> x, const Matrix& w) {
  std::vector<float> y(w.cols, 0.0f);
  matvec_accumulate(x, w, y);
  return y;
}

inline void add_inplace(std::span<float> acc, std::span<const float> x) {
  assert(acc.size() == x.size());
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

inline std::vector<float> add(std::span<const float> a, std::span<const float> b) {
  std::vector<float> out(a.begin(), a.end());
  add_inplace(out, b);
  return out;
}

constexpr float kRmsEps = 1e-5f;

inline std::vector<float> rms_norm(std::span<const float> x, std::span<const float> gain) {
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  const float inv = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kRmsEps));
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
  return out;
}

// tanh approximation
inline float gelu(float x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

// Numerically stable softmax, evaluated in double.
inline std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw. Unlike
// std::uniform_real_distribution this is identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace kernels
}  // namespace only
