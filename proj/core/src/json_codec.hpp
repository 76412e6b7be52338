// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

// JSON encodings shared by the wire protocol, checkpoints and run records.

#pragma once

#include <json.hpp>

#include <string_view>

#include "splitveil/backbone.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil::detail {

using nlohmann::json;

/// {"rows": R, "cols": C, "data": base64(LE f64)}
json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const json& j);

json factors_to_json(const std::vector<LoraFactors>& layers);
std::vector<LoraFactors> factors_from_json(const json& j);

json adapters_to_json(const AdapterSet& a);
AdapterSet adapters_from_json(const json& j);

json grad_to_json(const AdapterGrad& g);
AdapterGrad grad_from_json(const json& j);

json spec_to_json(const BackboneSpec& spec);
/// Rejects unknown keys.
BackboneSpec spec_from_json(const json& j);

/// Fetches a required key or throws the given error type with a clear message.
template <typename Err>
const json& require_key(const json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end()) throw Err("missing field '" + std::string(key) + "'");
  return *it;
}

}  // namespace splitveil::detail
