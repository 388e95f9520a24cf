#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "only/errors.hpp"

namespace only {

enum class Modality : unsigned char { Textual, Visual };

// Partition of sequence positions into textual and visual tokens.
// Positions appended during generation are always textual.
class TokenLayout {
 public:
  TokenLayout() = default;

  explicit TokenLayout(std::vector<Modality> kinds) : kinds_(std::move(kinds)) {}

  // Builds a layout from explicit index sets. The sets must be disjoint and
  // together cover [0, n) where n = |textual| + |visual|.
  static TokenLayout from_indices(std::span<const std::size_t> textual,
                                  std::span<const std::size_t> visual) {
    const std::size_t n = textual.size() + visual.size();
    std::vector<int> seen(n, -1);
    auto mark = [&](std::span<const std::size_t> idx, int tag) {
      for (std::size_t p : idx) {
        if (p >= n) throw LayoutError("index " + std::to_string(p) + " leaves a gap in the layout");
        if (seen[p] != -1) throw LayoutError("index " + std::to_string(p) + " classified twice");
        seen[p] = tag;
      }
    };
    mark(textual, 0);
    mark(visual, 1);
    std::vector<Modality> kinds(n);
    for (std::size_t p = 0; p < n; ++p) kinds[p] = seen[p] == 1 ? Modality::Visual : Modality::Textual;
    return TokenLayout(std::move(kinds));
  }

  // [prefix text][visual block][suffix text]
  static TokenLayout from_blocks(std::size_t n_prefix, std::size_t n_visual, std::size_t n_suffix) {
    std::vector<Modality> kinds;
    kinds.reserve(n_prefix + n_visual + n_suffix);
    kinds.insert(kinds.end(), n_prefix, Modality::Textual);
    kinds.insert(kinds.end(), n_visual, Modality::Visual);
    kinds.insert(kinds.end(), n_suffix, Modality::Textual);
    return TokenLayout(std::move(kinds));
  }

  void append_generated() { kinds_.push_back(Modality::Textual); }

  std::size_t size() const { return kinds_.size(); }

  Modality at(std::size_t pos) const {
    if (pos >= kinds_.size()) throw LayoutError("position " + std::to_string(pos) + " not covered by layout");
    return kinds_[pos];
  }

  bool is_visual(std::size_t pos) const { return at(pos) == Modality::Visual; }

  std::vector<std::size_t> textual_indices() const { return indices_of(Modality::Textual); }
  std::vector<std::size_t> visual_indices() const { return indices_of(Modality::Visual); }

  std::size_t count(Modality m) const {
    std::size_t c = 0;
    for (Modality k : kinds_) c += (k == m);
    return c;
  }

 private:
  std::vector<std::size_t> indices_of(Modality m) const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < kinds_.size(); ++p)
      if (kinds_[p] == m) out.push_back(p);
    return out;
  }

  std::vector<Modality> kinds_;
};

}  // namespace only
