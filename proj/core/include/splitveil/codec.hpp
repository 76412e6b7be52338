// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitveil/tensor.hpp"

namespace splitveil {

struct AdapterSet;
struct BackboneSpec;

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ParseError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string sha256_hex(std::string_view bytes);

/// Little-endian IEEE-754 encoding of the tensor data (shape not included).
std::vector<std::uint8_t> tensor_bytes(const Tensor& t);
Tensor tensor_from_bytes(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> bytes);

/// Deterministic digest of an adapter set's rank, scaling and factor bytes.
std::string adapter_hash(const AdapterSet& adapters);

/// Versioned JSON container: spec hash, rank, scaling, and raw factors.
/// Decoding reproduces the adapter set bit-for-bit.
std::string encode_adapter_checkpoint(const AdapterSet& adapters, const BackboneSpec& spec);
/// If `expected_spec` is given, the stored spec hash must match it.
AdapterSet decode_adapter_checkpoint(std::string_view text,
                                     const BackboneSpec* expected_spec = nullptr);

void save_adapter_checkpoint(const std::filesystem::path& path, const AdapterSet& adapters,
                             const BackboneSpec& spec);
/// Backbone spec as JSON: {"layer_dims": [...], "activation": "...", "seed": n}.
std::string encode_backbone_spec(const BackboneSpec& spec);
/// Unknown keys and malformed values raise ConfigError.
BackboneSpec parse_backbone_spec(std::string_view text);

AdapterSet load_adapter_checkpoint(const std::filesystem::path& path,
                                   const BackboneSpec* expected_spec = nullptr);

}  // namespace splitveil
