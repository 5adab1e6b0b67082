// SPDX-License-Identifier: Apache-2.0
#pragma once

// KD3D binary tensor file: magic "KD3D", format version u16, then a
// count-prefixed list of (name, rank u32, dims u32 x rank, f64 data,
// little-endian). One file per network; also used for point clouds and
// SDF sample blocks.

#include <string>
#include <utility>
#include <vector>

#include "kinediff/tensor.hpp"

namespace kinediff {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_kd3d(const std::string& path, const NamedTensors& tensors);
NamedTensors load_kd3d(const std::string& path);

const Tensor& kd3d_get(const NamedTensors& ts, const std::string& name);
const Tensor* kd3d_find(const NamedTensors& ts, const std::string& name);

}  // namespace kinediff
