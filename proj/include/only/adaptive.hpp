#pragma once

// Distance-gated fusion of original and textual-enhanced logits, followed by
// the adaptive plausibility constraint and sampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "only/errors.hpp"
#include "only/kernels.hpp"
#include "only/te_branch.hpp"

namespace only {

enum class SamplingMode { Sample, Greedy };

struct DecodeParams {
  double alpha1 = 3.0;  // collaborative weight
  double alpha2 = 1.0;  // contrastive weight
  double gamma = 0.2;   // distance threshold, in [0, 2]
  double beta = 0.1;    // plausibility truncation, in [0, 1]
  double temperature = 1.0;
  SamplingMode sampling = SamplingMode::Sample;
  std::uint64_t rng_seed = 0;

  // Threshold used for InstructBLIP / Qwen-VL style backbones.
  static DecodeParams instructblip_style() {
    DecodeParams p;
    p.gamma = 0.4;
    return p;
  }

  void validate() const {
    if (!(alpha1 >= 0.0)) throw ConfigError("alpha1 must be non-negative");
    if (!(alpha2 >= 0.0)) throw ConfigError("alpha2 must be non-negative");
    if (!(gamma >= 0.0 && gamma <= 2.0)) throw ConfigError("gamma must lie in [0, 2]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  }
};

// Stand-in for -inf: softmax maps it to exactly zero without NaNs.
inline constexpr float kMaskedLogit = std::numeric_limits<float>::lowest();

inline double manhattan_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("manhattan_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return d;
}

enum class Branch { Collaborative, Contrastive };

inline const char* branch_name(Branch b) { return b == Branch::Collaborative ? "collaborative" : "contrastive"; }

struct FusedLogits {
  std::vector<float> logits;
  Branch branch = Branch::Collaborative;
  double distance = 0.0;  // d_t
};

inline Branch select_branch(double distance, double gamma) {
  return distance < gamma ? Branch::Collaborative : Branch::Contrastive;
}

inline FusedLogits fuse_logits(const LogitsPair& pair, const DecodeParams& params) {
  if (pair.original.size() != pair.enhanced.size()) throw ConfigError("fuse_logits: length mismatch");
  FusedLogits f;
  f.distance = manhattan_distance(kernels::softmax(pair.original), kernels::softmax(pair.enhanced));
  f.branch = select_branch(f.distance, params.gamma);
  f.logits.resize(pair.original.size());
  if (f.branch == Branch::Collaborative) {
    const auto a = static_cast<float>(params.alpha1);
    for (std::size_t i = 0; i < f.logits.size(); ++i) f.logits[i] = pair.original[i] + a * pair.enhanced[i];
  } else {
    const auto a = static_cast<float>(params.alpha2);
    for (std::size_t i = 0; i < f.logits.size(); ++i)
      f.logits[i] = (1.0f + a) * pair.original[i] - a * pair.enhanced[i];
  }
  return f;
}

// Tokens whose reference probability is below beta * max keep no mass.
inline std::vector<float> plausibility_mask(std::span<const float> fused, std::span<const double> reference,
                                            double beta) {
  if (fused.size() != reference.size()) throw ConfigError("plausibility_mask: length mismatch");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  const double threshold = beta * *std::max_element(reference.begin(), reference.end());
  std::vector<float> out(fused.begin(), fused.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (reference[i] < threshold) out[i] = kMaskedLogit;
  return out;
}

inline std::size_t count_masked(std::span<const float> logits) {
  return static_cast<std::size_t>(std::count(logits.begin(), logits.end(), kMaskedLogit));
}

// Greedy returns the lowest-index argmax. Sampling draws one uniform from `rng`
// and inverts the CDF of softmax(logits / temperature).
inline int sample_token(std::span<const float> logits, const DecodeParams& params, std::mt19937_64& rng) {
  if (logits.empty() || count_masked(logits) == logits.size())
    throw DomainError("every token is masked; nothing to sample");
  if (params.sampling == SamplingMode::Greedy)
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());

  const double inv_t = 1.0 / params.temperature;
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = logits[i] == kMaskedLogit ? 0.0 : std::exp((static_cast<double>(logits[i]) - mx) * inv_t);
    sum += w[i];
  }
  const double u = kernels::uniform01(rng) * sum;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    last = i;
    acc += w[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(last);
}

}  // namespace only
