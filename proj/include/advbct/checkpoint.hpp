/*
 * Copyright 2026 AdvBCT Toolkit Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <vector>

#include "advbct/matrix.hpp"
#include "advbct/model.hpp"

namespace advbct {

// Versioned binary tensor container. Layout:
//   magic "ABCT", format version (u32 LE), then per tensor:
//   name length (u32 LE), name bytes, rows (u32 LE), cols (u32 LE),
//   rows*cols little-endian 64-bit values.
// Tensors are read until end of file. Round-trips are bit-exact.

struct NamedTensor {
    std::string name;
    DenseMatrix mat;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

// Model bundle as stored in a training checkpoint. The discriminator is
// present only for compatibility-trained models.
struct ModelCheckpoint {
    MlpModel embed;
    ClassifierHead classifier;
    DiscriminatorHead discriminator;
    bool has_discriminator = false;
};

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace advbct
