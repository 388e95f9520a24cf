#pragma once

// Text-to-visual entropy ratio (TVER) head selection.
//
// For each head at the intervention layer the current token's attention row is
// split into textual and visual positions. Each subset is turned into a
// distribution, its entropy taken, and TVER = H(textual) / H(visual). Heads
// whose TVER is at least the layer mean keep their attention; the others are
// zeroed before the value product.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "only/errors.hpp"
#include "only/kernels.hpp"
#include "only/layout.hpp"
#include "only/model.hpp"

namespace only {

using HeadRows = std::vector<std::vector<float>>;

enum class EntropyMode {
  Resoftmax,    // softmax over the subset's probability values
  Renormalize,  // divide the subset by its sum
};

struct AttentionSlices {
  std::vector<float> textual;
  std::vector<float> visual;
};

inline AttentionSlices slice_attention(std::span<const float> row, const TokenLayout& layout) {
  if (row.size() > layout.size())
    throw LayoutError("attention row has " + std::to_string(row.size()) + " positions but layout covers " +
                      std::to_string(layout.size()));
  AttentionSlices s;
  for (std::size_t p = 0; p < row.size(); ++p) (layout.is_visual(p) ? s.visual : s.textual).push_back(row[p]);
  return s;
}

// Entropy in nats of the distribution derived from `values`. Values are sorted
// first so the result is exactly invariant to their order.
inline double subset_entropy(std::span<const float> input, EntropyMode mode = EntropyMode::Resoftmax) {
  if (input.empty()) throw DomainError("entropy of an empty attention subset is undefined");
  std::vector<float> values(input.begin(), input.end());
  std::sort(values.begin(), values.end());
  std::vector<double> p;
  if (mode == EntropyMode::Resoftmax) {
    p = kernels::softmax(values);
  } else {
    double sum = 0.0;
    for (float v : values) {
      if (v < 0.0f) throw DomainError("renormalized entropy needs non-negative values");
      sum += v;
    }
    if (sum <= 0.0) throw DomainError("renormalized entropy of a zero-mass subset is undefined");
    p.reserve(values.size());
    for (float v : values) p.push_back(v / sum);
  }
  double h = 0.0;
  for (double pk : p)
    if (pk > 0.0) h -= pk * std::log(pk);
  return std::max(h, 0.0);
}

struct TverReport {
  std::vector<double> textual_entropy;
  std::vector<double> visual_entropy;
  std::vector<double> tver;
  double layer_average = 0.0;
  std::vector<bool> keep_mask;
};

struct HeadSelection {
  std::vector<bool> keep;
  double average = 0.0;
};

// keep[i] = scores[i] >= mean(scores). The mean is clamped into [min, max] so
// rounding in the sum can never leave every head below it.
inline HeadSelection select_at_or_above_mean(std::span<const double> scores) {
  if (scores.empty()) throw DomainError("head selection over zero heads");
  const double sum = std::accumulate(scores.begin(), scores.end(), 0.0);
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  HeadSelection s;
  s.average = std::clamp(sum / static_cast<double>(scores.size()), *lo, *hi);
  s.keep.reserve(scores.size());
  for (double v : scores) s.keep.push_back(v >= s.average);
  return s;
}

inline TverReport compute_tver(const HeadRows& rows, const TokenLayout& layout,
                               EntropyMode mode = EntropyMode::Resoftmax) {
  TverReport r;
  for (std::size_t h = 0; h < rows.size(); ++h) {
    const auto s = slice_attention(rows[h], layout);
    if (s.textual.empty()) throw DomainError("head " + std::to_string(h) + ": no visible textual positions");
    if (s.visual.empty()) throw DomainError("head " + std::to_string(h) + ": no visible visual positions");
    const double ht = subset_entropy(s.textual, mode);
    const double hv = subset_entropy(s.visual, mode);
    if (hv == 0.0) throw DomainError("head " + std::to_string(h) + ": visual entropy is zero, TVER undefined");
    r.textual_entropy.push_back(ht);
    r.visual_entropy.push_back(hv);
    r.tver.push_back(ht / hv);
  }
  auto sel = select_at_or_above_mean(r.tver);
  r.layer_average = sel.average;
  r.keep_mask = std::move(sel.keep);
  return r;
}

inline TverReport compute_tver(const AttentionSnapshot& snap, std::size_t layer, const TokenLayout& layout,
                               EntropyMode mode = EntropyMode::Resoftmax) {
  return compute_tver(snap.rows_at(layer), layout, mode);
}

// Sum of textual attention over sum of visual attention, per head.
inline std::vector<double> attention_mass_ratios(const HeadRows& rows, const TokenLayout& layout) {
  std::vector<double> ratios;
  for (std::size_t h = 0; h < rows.size(); ++h) {
    const auto s = slice_attention(rows[h], layout);
    const double num = std::accumulate(s.textual.begin(), s.textual.end(), 0.0);
    const double den = std::accumulate(s.visual.begin(), s.visual.end(), 0.0);
    if (den <= 0.0) throw DomainError("head " + std::to_string(h) + ": zero visual attention mass");
    ratios.push_back(num / den);
  }
  return ratios;
}

// -----------------------------------------------------------------------------
// Enhancement strategies

namespace strategy {
struct TverMask {};
struct ZeroVisual {};
struct NoiseVisual {
  double sigma = 0.1;
};
struct DoubleTextual {};
struct SumRatioMask {};
}  // namespace strategy

using EnhancementStrategy = std::variant<strategy::TverMask, strategy::ZeroVisual, strategy::NoiseVisual,
                                         strategy::DoubleTextual, strategy::SumRatioMask>;

inline bool needs_tver_report(const EnhancementStrategy& s) {
  return std::holds_alternative<strategy::TverMask>(s);
}

inline const char* strategy_name(const EnhancementStrategy& s) {
  constexpr const char* names[] = {"tver", "zero-visual", "noise-visual", "double-textual", "sum-ratio"};
  return names[s.index()];
}

inline HeadRows mask_heads(const HeadRows& rows, const std::vector<bool>& keep) {
  HeadRows out = rows;
  for (std::size_t h = 0; h < out.size(); ++h)
    if (!keep[h]) std::fill(out[h].begin(), out[h].end(), 0.0f);
  return out;
}

// Returns the modified attention rows. Rows are not re-normalized. `report`
// must be non-null for TverMask.
inline HeadRows apply_strategy(const EnhancementStrategy& strat, const HeadRows& rows, const TokenLayout& layout,
                               const TverReport* report, std::mt19937_64& rng) {
  return std::visit(
      [&](const auto& s) -> HeadRows {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, strategy::TverMask>) {
          if (report == nullptr || report->keep_mask.size() != rows.size())
            throw ConfigError("TverMask requires a TverReport with one entry per head");
          return mask_heads(rows, report->keep_mask);
        } else if constexpr (std::is_same_v<S, strategy::SumRatioMask>) {
          const auto ratios = attention_mass_ratios(rows, layout);
          return mask_heads(rows, select_at_or_above_mean(ratios).keep);
        } else if constexpr (std::is_same_v<S, strategy::NoiseVisual>) {
          if (!(s.sigma > 0.0)) throw ConfigError("NoiseVisual sigma must be positive");
          std::normal_distribution<double> noise(0.0, s.sigma);
          HeadRows out = rows;
          for (auto& r : out)
            for (std::size_t p = 0; p < r.size(); ++p)
              if (layout.is_visual(p)) r[p] = std::max(0.0f, static_cast<float>(r[p] + noise(rng)));
          return out;
        } else {
          HeadRows out = rows;
          for (auto& r : out)
            for (std::size_t p = 0; p < r.size(); ++p) {
              if constexpr (std::is_same_v<S, strategy::ZeroVisual>) {
                if (layout.is_visual(p)) r[p] = 0.0f;
              } else {
                if (!layout.is_visual(p)) r[p] *= 2.0f;
              }
            }
          return out;
        }
      },
      strat);
}

}  // namespace only
