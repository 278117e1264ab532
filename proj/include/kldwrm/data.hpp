// Copyright 2026 The kldwrm Authors
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

// Datasets, IDX ingestion, seeded batching and synthetic generators.
//
// IDX layout: 4-byte big-endian magic (0x00000803 images, 0x00000801
// labels), one 4-byte big-endian size per dimension, then raw unsigned bytes.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kldwrm/network.hpp"

namespace kldwrm {

enum class DatasetKind { kClassification, kRegression };

struct Dataset {
  Matrix inputs;  // input_dim x N
  std::vector<Index> classes;
  Matrix targets;  // out_dim x N (regression)
  DatasetKind kind = DatasetKind::kClassification;
  Index num_classes = 0;

  Index size() const { return inputs.cols(); }
  Index input_dim() const { return inputs.rows(); }
  /// Inputs and targets of the listed samples, in order.
  std::pair<Matrix, Targets> gather(const std::vector<Index>& idx) const;
  /// Contiguous slice [begin, begin + count).
  std::pair<Matrix, Targets> slice(Index begin, Index count) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Pixels scaled by 1/255, images flattened row-major.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
Dataset parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels);

struct BatchPlan {
  Index batch_size = 512;
  std::uint64_t seed = 0;
};

/// Epoch permutation split into consecutive batches; the last may be partial.
/// Deterministic in (seed, epoch).
std::vector<std::vector<Index>> batches(Index n, const BatchPlan& plan, Index epoch);
inline std::vector<std::vector<Index>> batches(const Dataset& ds, const BatchPlan& plan,
                                               Index epoch) {
  return batches(ds.size(), plan, epoch);
}

/// Inputs uniform in [0, 1]; targets from a seeded ReLU teacher network
/// (input_dim - 16 - out_dim) plus noise_scale times unit normal noise.
Dataset synth_regression(Index n, Index input_dim, Index out_dim, std::uint64_t teacher_seed,
                         double noise_scale = 1.0);

/// Inputs uniform in [0, 1]; labels are the argmax of a seeded linear teacher.
Dataset synth_classification(Index n, Index input_dim, Index num_classes, std::uint64_t seed);

}  // namespace kldwrm
