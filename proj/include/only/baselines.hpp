#pragma once

// Two-pass contrastive baselines: a visually distorted counterpart (VCD style)
// and a visual-free counterpart (M3ID style).

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "only/errors.hpp"
#include "only/layout.hpp"

namespace only {

namespace baseline {
struct Regular {};
struct Vcd {
  double alpha = 1.0;
  double noise_std = 0.1;  // total std of the cumulative embedding noise
  int noise_steps = 500;
};
struct M3id {
  double lambda = 0.02;
};
}  // namespace baseline

using BaselineKind = std::variant<baseline::Regular, baseline::Vcd, baseline::M3id>;

// (1 + alpha) f - alpha f'
inline std::vector<float> vcd_fuse(std::span<const float> original, std::span<const float> distorted, double alpha) {
  if (original.size() != distorted.size()) throw ConfigError("vcd_fuse: length mismatch");
  const auto a = static_cast<float>(alpha);
  std::vector<float> out(original.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0f + a) * original[i] - a * distorted[i];
  return out;
}

// (1 - e^{-lambda t}) / e^{-lambda t}, i.e. e^{lambda t} - 1.
inline double m3id_coefficient(double lambda, std::size_t t) {
  return std::expm1(lambda * static_cast<double>(t));
}

inline std::vector<float> m3id_fuse(std::span<const float> conditioned, std::span<const float> unconditioned,
                                    double lambda, std::size_t t) {
  if (conditioned.size() != unconditioned.size()) throw ConfigError("m3id_fuse: length mismatch");
  const auto c = static_cast<float>(m3id_coefficient(lambda, t));
  std::vector<float> out(conditioned.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = conditioned[i] + c * (conditioned[i] - unconditioned[i]);
  return out;
}

// Adds `steps` rounds of Gaussian noise with std noise_std / sqrt(steps) to
// each visual embedding, so the accumulated variance is noise_std^2. Textual
// rows are returned untouched.
inline std::vector<std::vector<float>> distort_visual(std::span<const std::vector<float>> embeddings,
                                                      const TokenLayout& layout, double noise_std, int steps,
                                                      std::mt19937_64& rng) {
  if (steps < 1) throw ConfigError("distort_visual: steps must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("distort_visual: noise_std must be non-negative");
  std::vector<std::vector<float>> out(embeddings.begin(), embeddings.end());
  if (noise_std == 0.0) return out;
  std::normal_distribution<double> step_noise(0.0, noise_std / std::sqrt(static_cast<double>(steps)));
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (!layout.is_visual(p)) continue;
    std::vector<double> acc(out[p].begin(), out[p].end());
    for (int s = 0; s < steps; ++s)
      for (double& v : acc) v += step_noise(rng);
    for (std::size_t j = 0; j < acc.size(); ++j) out[p][j] = static_cast<float>(acc[j]);
  }
  return out;
}

}  // namespace only
