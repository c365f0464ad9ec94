// Copyright 2026 The ISG Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ISG_CHECKPOINT_H_
#define ISG_CHECKPOINT_H_

// Checkpoint archive layout (all integers little-endian):
//
//   bytes 0..7   magic "ISGCKPT1"
//   bytes 8..15  u64 header length H
//   next H bytes UTF-8 JSON header:
//                {"model", "iteration", "config", "tensors":
//                 [{"name", "rows", "cols", "offset"}...]}
//   remainder    tensor payload, float64 little-endian, row-major;
//                "offset" is relative to the start of the payload.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "isg/nn.h"

namespace isg {

struct Checkpoint {
  std::string model;
  std::int64_t iteration = 0;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, ad::Matrix> tensors;
};

Checkpoint snapshot(const nn::ParameterStore& store, const std::string& model,
                    std::int64_t iteration, const nlohmann::json& config);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies every tensor whose name exists in `store`. Shape mismatches throw.
// Returns the number of tensors restored.
std::size_t restore(nn::ParameterStore& store, const Checkpoint& ckpt);

// Raw little-endian bytes of every parameter matching `prefix`, in
// registration order. Used for byte-exact freeze checks.
std::vector<std::uint8_t> serialize_parameters(const nn::ParameterStore& store,
                                               const std::string& prefix);

}  // namespace isg

#endif  // ISG_CHECKPOINT_H_
