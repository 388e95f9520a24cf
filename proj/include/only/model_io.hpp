#pragma once

// Model file layout:
//   line 1  : compact JSON header terminated by '\n'
//   rest    : little-endian float32 tensors concatenated in header.tensor_order,
//             each row-major
// The header carries every ModelConfig field plus tensor_order, blob_bytes and
// crc32 (CRC-32 of the blob). Offsets follow from the config and tensor_order.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "only/errors.hpp"
#include "only/model.hpp"

namespace only {

inline constexpr const char* kModelFormat = "only-model";
inline constexpr int kModelFormatVersion = 1;

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline std::vector<std::string> tensor_order(const ModelWeights& w) {
  std::vector<std::string> names;
  visit_tensors(w, [&](const TensorRef<const float>& t) { names.push_back(t.name); });
  return names;
}

inline std::string serialize_model(const ModelWeights& w) {
  std::string blob;
  blob.reserve(count_parameters(w) * 4);
  visit_tensors(w, [&](const TensorRef<const float>& t) {
    for (float f : t.data) {
      const auto u = std::bit_cast<std::uint32_t>(f);
      const char b[4] = {static_cast<char>(u & 0xFF), static_cast<char>((u >> 8) & 0xFF),
                         static_cast<char>((u >> 16) & 0xFF), static_cast<char>((u >> 24) & 0xFF)};
      blob.append(b, 4);
    }
  });

  const ModelConfig& c = w.config;
  nlohmann::json header = {
      {"format", kModelFormat},
      {"version", kModelFormatVersion},
      {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},
      {"d_model", c.d_model},
      {"d_mlp", c.d_mlp},
      {"vocab_size", c.vocab_size},
      {"max_seq_len", c.max_seq_len},
      {"te_layer", c.te_layer},
      {"rng_seed", c.rng_seed},
      {"tensor_order", tensor_order(w)},
      {"blob_bytes", blob.size()},
      {"crc32", crc32_of(blob)},
  };
  std::string out = header.dump();
  out.push_back('\n');
  out += blob;
  return out;
}

namespace detail {

inline ModelConfig config_from_header(const nlohmann::json& h) {
  ModelConfig c;
  c.n_layers = h.at("n_layers").get<std::size_t>();
  c.n_heads = h.at("n_heads").get<std::size_t>();
  c.d_model = h.at("d_model").get<std::size_t>();
  c.d_mlp = h.at("d_mlp").get<std::size_t>();
  c.vocab_size = h.at("vocab_size").get<std::size_t>();
  c.max_seq_len = h.at("max_seq_len").get<std::size_t>();
  c.te_layer = h.at("te_layer").get<std::size_t>();
  c.rng_seed = h.at("rng_seed").get<std::uint64_t>();
  return c;
}

inline void check_dims(const ModelConfig& file, const ModelConfig& want) {
  auto field = [](const char* name, std::size_t a, std::size_t b) {
    if (a != b)
      throw ModelFileError(ModelFileError::Kind::DimensionMismatch,
                           std::string("model file ") + name + "=" + std::to_string(a) + " but config expects " +
                               std::to_string(b));
  };
  field("n_layers", file.n_layers, want.n_layers);
  field("n_heads", file.n_heads, want.n_heads);
  field("d_model", file.d_model, want.d_model);
  field("d_mlp", file.d_mlp, want.d_mlp);
  field("vocab_size", file.vocab_size, want.vocab_size);
  field("max_seq_len", file.max_seq_len, want.max_seq_len);
}

}  // namespace detail

// Parses a serialized model. When `expected` is given, its dimensions must
// match the header (te_layer and rng_seed are not compared).
inline ModelWeights parse_model(std::string_view bytes, const std::optional<ModelConfig>& expected = std::nullopt) {
  using Kind = ModelFileError::Kind;
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw ModelFileError(Kind::Malformed, "model file has no header line");

  nlohmann::json header;
  ModelConfig cfg;
  std::vector<std::string> order;
  std::uint64_t blob_bytes = 0;
  std::uint32_t crc = 0;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
    if (header.at("format").get<std::string>() != kModelFormat)
      throw ModelFileError(Kind::Malformed, "unknown model format");
    if (header.at("version").get<int>() != kModelFormatVersion)
      throw ModelFileError(Kind::Malformed, "unsupported model format version");
    cfg = detail::config_from_header(header);
    order = header.at("tensor_order").get<std::vector<std::string>>();
    blob_bytes = header.at("blob_bytes").get<std::uint64_t>();
    crc = header.at("crc32").get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(Kind::Malformed, std::string("bad model header: ") + e.what());
  }

  if (expected) detail::check_dims(cfg, *expected);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ModelFileError(Kind::Malformed, std::string("invalid header config: ") + e.what());
  }

  const std::string_view blob = bytes.substr(nl + 1);
  if (blob.size() != blob_bytes) throw ModelFileError(Kind::Malformed, "blob size does not match header");
  if (crc32_of(blob) != crc) throw ModelFileError(Kind::Checksum, "blob CRC-32 mismatch");

  ModelWeights w = ModelWeights::zeros(cfg);
  if (order != tensor_order(w)) throw ModelFileError(Kind::Malformed, "tensor_order does not match config");
  if (blob.size() != count_parameters(w) * 4)
    throw ModelFileError(Kind::Malformed, "blob size does not match tensor shapes");

  std::size_t off = 0;
  visit_tensors(w, [&](const TensorRef<float>& t) {
    for (float& f : t.data) {
      const auto* b = reinterpret_cast<const unsigned char*>(blob.data() + off);
      const std::uint32_t u = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
                              (std::uint32_t{b[3]} << 24);
      f = std::bit_cast<float>(u);
      off += 4;
    }
  });
  return w;
}

inline void save_model(const ModelWeights& w, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ModelFileError(ModelFileError::Kind::Io, "cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_model(w);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ModelFileError(ModelFileError::Kind::Io, "write failed for " + path.string());
}

inline ModelWeights load_model(const std::filesystem::path& path,
                               const std::optional<ModelConfig>& expected = std::nullopt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelFileError(ModelFileError::Kind::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_model(bytes, expected);
}

// Seeded initialization never fails once `config` validates.
inline ModelWeights load_or_init_model(const ModelConfig& config, const WeightSource& source) {
  config.validate();
  if (const auto* seed = std::get_if<Seed>(&source)) return init_model(config, seed->value);
  ModelWeights w = load_model(std::get<std::filesystem::path>(source), config);
  w.config.te_layer = config.te_layer;
  return w;
}

}  // namespace only
