#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ff2/data.hpp"
#include "ff2/errors.hpp"
#include "ff2/model.hpp"

namespace ff2 {

// Model container, format version 1:
//   magic "FF2M" | u32 version | u64 header length | header JSON (canonical,
//   sorted keys: {"config": ..., "vocabulary": [...]}) | u32 tensor count |
//   records. Record: u32 name length | name | u8 dtype (1 = f64) | u8 rank |
//   u32 dims[rank] | payload (little-endian IEEE-754 doubles).
// Records appear in model_parameters() order; round-trips are bit-exact.
constexpr char kModelMagic[4] = {'F', 'F', '2', 'M'};
constexpr std::uint32_t kModelFormatVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

namespace detail {

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 8);
}

inline void read_bytes(std::istream& in, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("truncated model file");
  }
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  read_bytes(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  read_bytes(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64_payload(std::ostream& out, const std::vector<double>& values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int k = 0; k < 8; ++k) {
      buf[i * 8 + static_cast<std::size_t>(k)] =
          static_cast<unsigned char>(bits >> (8 * k));
    }
  }
  write_bytes(out, buf.data(), buf.size());
}

inline void read_f64_payload(std::istream& in, std::vector<double>& values) {
  std::vector<unsigned char> buf(values.size() * 8);
  read_bytes(in, buf.data(), buf.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) {
      bits |= static_cast<std::uint64_t>(buf[i * 8 + static_cast<std::size_t>(k)])
              << (8 * k);
    }
    values[i] = std::bit_cast<double>(bits);
  }
}

}  // namespace detail

inline void save_model(const FF2Model& model, const Vocabulary& vocab,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  detail::write_bytes(out, kModelMagic, 4);
  detail::write_u32(out, kModelFormatVersion);

  nlohmann::json header;
  header["config"] = ff2_config_to_json(model.config);
  header["vocabulary"] = vocab.tokens();
  const std::string header_text = header.dump();
  detail::write_u64(out, header_text.size());
  detail::write_bytes(out, header_text.data(), header_text.size());

  const std::vector<NamedTensor> params = model_parameters(model);
  detail::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const NamedTensor& p : params) {
    detail::write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    detail::write_bytes(out, p.name.data(), p.name.size());
    const std::uint8_t dtype = kDtypeF64;
    detail::write_bytes(out, &dtype, 1);
    const std::uint8_t rank = static_cast<std::uint8_t>(p.tensor.rank());
    detail::write_bytes(out, &rank, 1);
    for (int d : p.tensor.shape()) {
      detail::write_u32(out, static_cast<std::uint32_t>(d));
    }
    detail::write_f64_payload(out, p.tensor.values());
  }
  if (!out) throw DataError("error writing model file: " + path);
}

struct LoadedModel {
  FF2Model model;
  Vocabulary vocab;
};

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);

  char magic[4];
  detail::read_bytes(in, magic, 4);
  if (std::string(magic, 4) != std::string(kModelMagic, 4)) {
    throw FormatError("not a model file (bad magic): " + path);
  }
  const std::uint32_t version = detail::read_u32(in);
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " +
                      std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint64_t header_len = detail::read_u64(in);
  std::string header_text(header_len, '\0');
  detail::read_bytes(in, header_text.data(), header_len);

  nlohmann::json header = nlohmann::json::parse(header_text, nullptr, false);
  if (header.is_discarded()) throw FormatError("model header is not valid JSON");
  check_json_keys(header, {"config", "vocabulary"}, "model header");
  if (!header.contains("config") || !header.contains("vocabulary")) {
    throw FormatError("model header missing config or vocabulary");
  }

  LoadedModel loaded;
  const FF2Config config =
      ff2_config_from_json(header.at("config"), FF2Config{}, "model config");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model config invalid: ") + e.what());
  }
  loaded.vocab = Vocabulary::from_tokens(
      header.at("vocabulary").get<std::vector<std::string>>());
  if (config.ite.vocab_size != loaded.vocab.size()) {
    throw ShapeError("model config vocab_size " +
                     std::to_string(config.ite.vocab_size) +
                     " disagrees with embedded vocabulary of " +
                     std::to_string(loaded.vocab.size()) + " tokens");
  }

  Rng rng(0);  // placeholder draws; every value is overwritten below
  loaded.model = init_model(config, rng);
  std::vector<NamedTensor> params = model_parameters(loaded.model);

  const std::uint32_t count = detail::read_u32(in);
  if (count != params.size()) {
    throw FormatError("model file has " + std::to_string(count) +
                      " tensor records, config requires " +
                      std::to_string(params.size()));
  }
  for (NamedTensor& p : params) {
    const std::uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    detail::read_bytes(in, name.data(), name_len);
    if (name != p.name) {
      throw FormatError("unexpected tensor record '" + name + "' (expected '" +
                        p.name + "')");
    }
    std::uint8_t dtype = 0, rank = 0;
    detail::read_bytes(in, &dtype, 1);
    detail::read_bytes(in, &rank, 1);
    if (dtype != kDtypeF64) {
      throw FormatError("tensor '" + name + "' has unsupported dtype tag " +
                        std::to_string(dtype));
    }
    Shape shape(rank);
    for (std::uint8_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(detail::read_u32(in));
    }
    if (shape != p.tensor.shape()) {
      throw ShapeError("tensor '" + name + "' has shape " + shape_str(shape) +
                       " but the config requires " +
                       shape_str(p.tensor.shape()));
    }
    detail::read_f64_payload(in, p.tensor.values());
  }
  char extra;
  if (in.read(&extra, 1).gcount() != 0) {
    throw FormatError("trailing data after last tensor record");
  }
  return loaded;
}

}  // namespace ff2
