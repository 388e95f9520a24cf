#pragma once

// Noise-vs-entropy exploration: distort the visual block at increasing noise
// levels and record mean textual entropy, visual entropy and TVER at the
// intervention layer for the last prompt position.

#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "only/baselines.hpp"
#include "only/model.hpp"
#include "only/prompt.hpp"
#include "only/tver.hpp"

namespace only {

struct SweepOptions {
  std::vector<double> noise_levels = {0.0, 0.25, 0.5, 1.0, 2.0};
  std::size_t samples = 1;
  std::uint64_t seed = 0;
  std::optional<std::size_t> te_layer;
  EntropyMode entropy_mode = EntropyMode::Resoftmax;
  int noise_steps = 500;
};

struct SweepRow {
  double noise = 0.0;
  double textual_entropy = 0.0;
  double visual_entropy = 0.0;
  double tver = 0.0;
};

inline std::vector<SweepRow> run_entropy_sweep(const ModelWeights& w, const Prompt& prompt, const SweepOptions& opt) {
  if (opt.samples < 1) throw ConfigError("entropy sweep needs at least one sample");
  const std::size_t layer = opt.te_layer.value_or(w.config.te_layer);
  PrefillOptions popt;
  popt.te_layer = layer;

  std::vector<SweepRow> rows;
  for (double level : opt.noise_levels) {
    SweepRow row;
    row.noise = level;
    for (std::size_t k = 0; k < opt.samples; ++k) {
      std::mt19937_64 rng(opt.seed + k);
      const auto emb = distort_visual(prompt.embeddings, prompt.layout, level, opt.noise_steps, rng);
      const auto pre = prefill(w, emb, prompt.layout, popt);
      const auto rep = compute_tver(pre.last.attention, layer, prompt.layout, opt.entropy_mode);
      for (std::size_t h = 0; h < rep.tver.size(); ++h) {
        row.textual_entropy += rep.textual_entropy[h];
        row.visual_entropy += rep.visual_entropy[h];
        row.tver += rep.tver[h];
      }
    }
    const double n = static_cast<double>(opt.samples * w.config.n_heads);
    row.textual_entropy /= n;
    row.visual_entropy /= n;
    row.tver /= n;
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "noise,textual_entropy,visual_entropy,tver\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%.12g,%.12g,%.12g\n", r.noise, r.textual_entropy, r.visual_entropy, r.tver);
    out += buf;
  }
  return out;
}

// Human-readable note on whether the trained-model trend (textual entropy up,
// visual entropy down as noise grows) shows up. Random weights are not
// expected to reproduce it.
inline std::string describe_trend(const std::vector<SweepRow>& rows) {
  bool text_up = true, vis_down = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    text_up = text_up && rows[i].textual_entropy >= rows[i - 1].textual_entropy;
    vis_down = vis_down && rows[i].visual_entropy <= rows[i - 1].visual_entropy;
  }
  std::string s = "textual entropy ";
  s += text_up ? "non-decreasing" : "not monotone";
  s += ", visual entropy ";
  s += vis_down ? "non-increasing" : "not monotone";
  s += " across noise levels. Exploratory only: the trend reported for trained vision-language models is not "
       "asserted, since attention statistics of randomly initialized weights need not reproduce it.";
  return s;
}

}  // namespace only
