#pragma once

// Multimodal prompts: [text prefix][visual block][text suffix].
//
// JSON form:
//   {
//     "text_prefix": [int, ...],
//     "n_visual": int,
//     "visual_source": {"kind": "seeded-random", "seed": int}
//                    | {"kind": "file", "path": "visual.json"}      // nested arrays
//                    | {"kind": "file-inline", "embeddings": [[float, ...], ...]},
//     "text_suffix": [int, ...]
//   }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "only/errors.hpp"
#include "only/kernels.hpp"
#include "only/layout.hpp"
#include "only/model.hpp"

namespace only {

namespace visual {
struct SeededRandom {
  std::uint64_t seed = 0;
};
struct File {
  std::filesystem::path path;
};
struct Inline {
  std::vector<std::vector<float>> embeddings;
};
}  // namespace visual

using VisualSource = std::variant<visual::SeededRandom, visual::File, visual::Inline>;

struct PromptSpec {
  std::vector<int> text_prefix;
  std::size_t n_visual = 0;
  VisualSource visual_source = visual::SeededRandom{};
  std::vector<int> text_suffix;
};

// Model-ready prompt: one input embedding per position (position embeddings are
// added by the model) and the matching layout.
struct Prompt {
  std::vector<std::vector<float>> embeddings;
  std::vector<int> token_ids;  // -1 at visual positions
  TokenLayout layout;

  std::size_t size() const { return embeddings.size(); }
};

namespace detail {

inline std::vector<std::vector<float>> embeddings_from_json(const nlohmann::json& j) {
  try {
    return j.get<std::vector<std::vector<float>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("visual embeddings must be nested float arrays: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace detail

// Relative visual file paths are resolved against `base_dir`.
inline PromptSpec prompt_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  PromptSpec s;
  try {
    s.text_prefix = j.value("text_prefix", std::vector<int>{});
    s.n_visual = j.value("n_visual", std::size_t{0});
    s.text_suffix = j.value("text_suffix", std::vector<int>{});
    if (j.contains("visual_source")) {
      const auto& v = j.at("visual_source");
      const std::string kind = v.at("kind").get<std::string>();
      if (kind == "seeded-random") {
        s.visual_source = visual::SeededRandom{v.value("seed", std::uint64_t{0})};
      } else if (kind == "file") {
        std::filesystem::path p = v.at("path").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        s.visual_source = visual::File{p};
      } else if (kind == "file-inline") {
        s.visual_source = visual::Inline{detail::embeddings_from_json(v.at("embeddings"))};
      } else {
        throw ConfigError("unknown visual_source kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prompt: ") + e.what());
  }
  return s;
}

inline nlohmann::json prompt_spec_to_json(const PromptSpec& s) {
  nlohmann::json j = {{"text_prefix", s.text_prefix}, {"n_visual", s.n_visual}, {"text_suffix", s.text_suffix}};
  std::visit(
      [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, visual::SeededRandom>)
          j["visual_source"] = {{"kind", "seeded-random"}, {"seed", v.seed}};
        else if constexpr (std::is_same_v<V, visual::File>)
          j["visual_source"] = {{"kind", "file"}, {"path", v.path.string()}};
        else
          j["visual_source"] = {{"kind", "file-inline"}, {"embeddings", v.embeddings}};
      },
      s.visual_source);
  return j;
}

inline PromptSpec load_prompt_spec(const std::filesystem::path& path) {
  return prompt_spec_from_json(detail::read_json_file(path), path.parent_path());
}

inline std::vector<std::vector<float>> seeded_visual_embeddings(std::size_t n, std::size_t d_model,
                                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<float>> out(n, std::vector<float>(d_model));
  for (auto& row : out)
    for (float& v : row)
      v = static_cast<float>(-static_cast<double>(kInitRange) + 2.0 * kInitRange * kernels::uniform01(rng));
  return out;
}

inline Prompt build_prompt(const PromptSpec& spec, const ModelWeights& w) {
  const std::size_t d = w.config.d_model;
  std::vector<std::vector<float>> vis = std::visit(
      [&](const auto& v) -> std::vector<std::vector<float>> {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, visual::SeededRandom>)
          return seeded_visual_embeddings(spec.n_visual, d, v.seed);
        else if constexpr (std::is_same_v<V, visual::File>)
          return detail::embeddings_from_json(detail::read_json_file(v.path));
        else
          return v.embeddings;
      },
      spec.visual_source);
  if (vis.size() != spec.n_visual)
    throw ConfigError("prompt declares " + std::to_string(spec.n_visual) + " visual tokens but source provides " +
                      std::to_string(vis.size()));
  for (const auto& row : vis)
    if (row.size() != d) throw ConfigError("visual embedding width does not match d_model");

  Prompt p;
  auto add_text = [&](const std::vector<int>& ids) {
    for (int id : ids) {
      auto e = w.embed_token(id);
      p.embeddings.emplace_back(e.begin(), e.end());
      p.token_ids.push_back(id);
    }
  };
  add_text(spec.text_prefix);
  for (auto& row : vis) {
    p.embeddings.push_back(std::move(row));
    p.token_ids.push_back(-1);
  }
  add_text(spec.text_suffix);
  p.layout = TokenLayout::from_blocks(spec.text_prefix.size(), spec.n_visual, spec.text_suffix.size());
  if (p.embeddings.empty()) throw ConfigError("prompt is empty");
  return p;
}

// Text ids are drawn from [1, vocab) so the reserved end token 0 never appears
// in the prompt.
inline PromptSpec random_prompt_spec(std::size_t n_prefix, std::size_t n_visual, std::size_t n_suffix,
                                     std::size_t vocab_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&](std::size_t n) {
    std::vector<int> ids(n);
    for (int& id : ids) id = 1 + static_cast<int>(rng() % (vocab_size - 1));
    return ids;
  };
  PromptSpec s;
  s.text_prefix = draw(n_prefix);
  s.n_visual = n_visual;
  s.visual_source = visual::SeededRandom{seed + 1};
  s.text_suffix = draw(n_suffix);
  return s;
}

// 32 text + 64 visual + 8 text tokens.
inline PromptSpec reference_prompt_spec(std::size_t vocab_size = 1024, std::uint64_t seed = 11) {
  return random_prompt_spec(32, 64, 8, vocab_size, seed);
}

}  // namespace only
