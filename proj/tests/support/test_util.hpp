#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "only/config.hpp"
#include "only/kernels.hpp"
#include "only/model.hpp"

namespace only::test {

// L <= 4, H <= 4, d_model <= 32.
inline ModelConfig random_small_config(std::mt19937_64& rng, std::size_t max_seq = 16) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  ModelConfig c;
  c.n_layers = pick(1, 4);
  c.n_heads = pick(1, 4);
  c.d_model = c.n_heads * pick(1, 32 / c.n_heads);
  c.d_mlp = pick(4, 48);
  c.vocab_size = pick(4, 40);
  c.max_seq_len = max_seq;
  c.te_layer = pick(0, c.n_layers - 1);
  return c;
}

inline ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 3;
  c.n_heads = 4;
  c.d_model = 32;
  c.d_mlp = 48;
  c.vocab_size = 40;
  c.max_seq_len = 64;
  return c;
}

inline std::vector<std::vector<float>> random_embeddings(std::size_t n, std::size_t d, std::mt19937_64& rng,
                                                         double scale = 0.5) {
  std::vector<std::vector<float>> e(n, std::vector<float>(d));
  for (auto& r : e)
    for (float& v : r) v = static_cast<float>(scale * (2.0 * kernels::uniform01(rng) - 1.0));
  return e;
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 3.0) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(scale * (2.0 * kernels::uniform01(rng) - 1.0));
  return v;
}

inline std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (double& x : p) s += (x = e(rng));
  for (double& x : p) x /= s;
  return p;
}

inline double max_abs_diff(std::span<const float> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace only::test
