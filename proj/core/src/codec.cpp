// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/codec.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_codec.hpp"
#include "splitveil/backbone.hpp"
#include "splitveil/error.hpp"

namespace splitveil {

static_assert(std::endian::native == std::endian::little,
              "tensor encoding assumes a little-endian host");

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError("base64: invalid character");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char c : digest) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

std::vector<std::uint8_t> tensor_bytes(const Tensor& t) {
  std::vector<std::uint8_t> out(t.size() * sizeof(double));
  if (!out.empty()) std::memcpy(out.data(), t.data().data(), out.size());
  return out;
}

Tensor tensor_from_bytes(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> bytes) {
  if (bytes.size() != rows * cols * sizeof(double)) {
    throw ParseError("tensor payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(rows * cols * sizeof(double)));
  }
  std::vector<double> data(rows * cols);
  if (!data.empty()) std::memcpy(data.data(), bytes.data(), bytes.size());
  return Tensor(rows, cols, std::move(data));
}

std::string adapter_hash(const AdapterSet& adapters) {
  std::string buf;
  auto append = [&](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  const std::uint64_t rank = adapters.rank;
  append(&rank, sizeof rank);
  append(&adapters.scaling, sizeof adapters.scaling);
  for (const auto& l : adapters.layers) {
    for (const Tensor* t : {&l.a, &l.b}) {
      const std::uint64_t shape[2] = {t->rows(), t->cols()};
      append(shape, sizeof shape);
      append(t->data().data(), t->size() * sizeof(double));
    }
  }
  return sha256_hex(buf);
}

namespace detail {

json tensor_to_json(const Tensor& t) {
  return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", base64_encode(tensor_bytes(t))}};
}

Tensor tensor_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("tensor must be an object");
  const auto rows = require_key<ParseError>(j, "rows").get<std::size_t>();
  const auto cols = require_key<ParseError>(j, "cols").get<std::size_t>();
  const auto& data = require_key<ParseError>(j, "data").get_ref<const std::string&>();
  Tensor t = tensor_from_bytes(rows, cols, base64_decode(data));
  require_finite(t, "tensor");
  return t;
}

json factors_to_json(const std::vector<LoraFactors>& layers) {
  json arr = json::array();
  for (const auto& l : layers) arr.push_back({{"a", tensor_to_json(l.a)}, {"b", tensor_to_json(l.b)}});
  return arr;
}

std::vector<LoraFactors> factors_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("adapter layers must be an array");
  std::vector<LoraFactors> out;
  for (const auto& l : j) {
    out.push_back({tensor_from_json(require_key<ParseError>(l, "a")),
                   tensor_from_json(require_key<ParseError>(l, "b"))});
  }
  return out;
}

json adapters_to_json(const AdapterSet& a) {
  return json{{"rank", a.rank}, {"scaling", a.scaling}, {"layers", factors_to_json(a.layers)}};
}

AdapterSet adapters_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("adapter set must be an object");
  AdapterSet a;
  a.rank = require_key<ParseError>(j, "rank").get<std::size_t>();
  a.scaling = require_key<ParseError>(j, "scaling").get<double>();
  a.layers = factors_from_json(require_key<ParseError>(j, "layers"));
  return a;
}

json grad_to_json(const AdapterGrad& g) { return json{{"layers", factors_to_json(g.layers)}}; }

AdapterGrad grad_from_json(const json& j) {
  AdapterGrad g;
  g.layers = factors_from_json(require_key<ParseError>(j, "layers"));
  return g;
}

json spec_to_json(const BackboneSpec& spec) {
  return json{{"layer_dims", spec.layer_dims},
              {"activation", std::string(to_string(spec.activation))},
              {"seed", spec.seed}};
}

BackboneSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("backbone spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "layer_dims" && key != "activation" && key != "seed")
      throw ConfigError("unknown backbone spec key '" + key + "'");
  }
  BackboneSpec spec;
  spec.layer_dims = require_key<ConfigError>(j, "layer_dims").get<std::vector<std::size_t>>();
  if (j.contains("activation")) spec.activation = parse_activation(j["activation"].get<std::string>());
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  spec.validate();
  return spec;
}

}  // namespace detail

namespace {
constexpr std::string_view kCheckpointFormat = "splitveil-adapter";
constexpr int kCheckpointVersion = 1;
}  // namespace

std::string encode_adapter_checkpoint(const AdapterSet& adapters, const BackboneSpec& spec) {
  const detail::json j{{"format", kCheckpointFormat},
                       {"version", kCheckpointVersion},
                       {"spec_hash", spec_hash(spec)},
                       {"rank", adapters.rank},
                       {"scaling", adapters.scaling},
                       {"layers", detail::factors_to_json(adapters.layers)}};
  return j.dump();
}

AdapterSet decode_adapter_checkpoint(std::string_view text, const BackboneSpec* expected_spec) {
  detail::json j;
  try {
    j = detail::json::parse(text);
    if (j.value("format", "") != kCheckpointFormat) throw ParseError("not an adapter checkpoint");
    if (j.value("version", 0) != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
    }
    if (expected_spec && j.value("spec_hash", "") != spec_hash(*expected_spec)) {
      throw ParseError("checkpoint was written for a different backbone spec");
    }
    return detail::adapters_from_json(j);
  } catch (const detail::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_adapter_checkpoint(const std::filesystem::path& path, const AdapterSet& adapters,
                             const BackboneSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << encode_adapter_checkpoint(adapters, spec);
}

AdapterSet load_adapter_checkpoint(const std::filesystem::path& path,
                                   const BackboneSpec* expected_spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_adapter_checkpoint(ss.str(), expected_spec);
}

std::string encode_backbone_spec(const BackboneSpec& spec) { return detail::spec_to_json(spec).dump(2); }

BackboneSpec parse_backbone_spec(std::string_view text) {
  try {
    return detail::spec_from_json(detail::json::parse(text));
  } catch (const detail::json::exception& e) {
    throw ConfigError(std::string("backbone spec: ") + e.what());
  }
}

}  // namespace splitveil
