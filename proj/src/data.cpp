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

#include "kldwrm/data.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace kldwrm {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  if (at + 4 > b.size()) throw TruncatedFileError("IDX header truncated");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

}  // namespace

std::pair<Matrix, Targets> Dataset::gather(const std::vector<Index>& idx) const {
  Matrix x(inputs.rows(), static_cast<Index>(idx.size()));
  Targets t;
  if (kind == DatasetKind::kClassification) {
    t.classes.reserve(idx.size());
  } else {
    t.values.resize(targets.rows(), static_cast<Index>(idx.size()));
  }
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Index i = idx[j];
    if (i < 0 || i >= size()) throw DimensionError("gather: index out of range");
    x.col(static_cast<Index>(j)) = inputs.col(i);
    if (kind == DatasetKind::kClassification) {
      t.classes.push_back(classes[static_cast<std::size_t>(i)]);
    } else {
      t.values.col(static_cast<Index>(j)) = targets.col(i);
    }
  }
  return {std::move(x), std::move(t)};
}

std::pair<Matrix, Targets> Dataset::slice(Index begin, Index count) const {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), begin);
  return gather(idx);
}

Dataset parse_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels) {
  if (be32(images, 0) != kIdxImageMagic) throw BadMagicError("images file: bad IDX magic");
  if (be32(labels, 0) != kIdxLabelMagic) throw BadMagicError("labels file: bad IDX magic");
  const std::uint32_t n = be32(images, 4);
  const std::uint32_t rows = be32(images, 8);
  const std::uint32_t cols = be32(images, 12);
  const std::uint32_t n_labels = be32(labels, 4);
  if (n != n_labels) {
    throw CountMismatchError("IDX count mismatch: " + std::to_string(n) + " images, " +
                             std::to_string(n_labels) + " labels");
  }
  if (n == 0) throw EmptyDatasetError("IDX file holds no samples");
  const std::size_t dim = std::size_t{rows} * cols;
  if (images.size() < 16 + dim * n) throw TruncatedFileError("images file truncated");
  if (labels.size() < 8 + std::size_t{n}) throw TruncatedFileError("labels file truncated");

  Dataset ds;
  ds.kind = DatasetKind::kClassification;
  ds.inputs.resize(static_cast<Index>(dim), static_cast<Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const std::uint8_t* px = images.data() + 16 + s * dim;
    for (std::size_t p = 0; p < dim; ++p) {
      ds.inputs(static_cast<Index>(p), static_cast<Index>(s)) = px[p] / 255.0;
    }
  }
  ds.classes.resize(n);
  Index max_label = 0;
  for (std::size_t s = 0; s < n; ++s) {
    ds.classes[s] = labels[8 + s];
    max_label = std::max(max_label, ds.classes[s]);
  }
  ds.num_classes = std::max<Index>(10, max_label + 1);
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path));
}

std::vector<std::vector<Index>> batches(Index n, const BatchPlan& plan, Index epoch) {
  if (plan.batch_size <= 0) throw ConfigError("batch size must be positive");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::seed_seq seq{static_cast<std::uint32_t>(plan.seed & 0xffffffffu),
                    static_cast<std::uint32_t>(plan.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x62617463u};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<Index>> out;
  for (Index b = 0; b < n; b += plan.batch_size) {
    const Index e = std::min(n, b + plan.batch_size);
    out.emplace_back(perm.begin() + b, perm.begin() + e);
  }
  return out;
}

Dataset synth_regression(Index n, Index input_dim, Index out_dim, std::uint64_t teacher_seed,
                         double noise_scale) {
  std::mt19937_64 rng(teacher_seed);
  const Network teacher = make_mlp({input_dim, 16, out_dim}, LossKind::kGaussian);
  const NetParams w = init_params(teacher, rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset ds;
  ds.kind = DatasetKind::kRegression;
  ds.inputs.resize(input_dim, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < input_dim; ++i) ds.inputs(i, j) = unif(rng);
  }
  ds.targets = forward(teacher, w, ds.inputs).outputs;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < out_dim; ++i) ds.targets(i, j) += noise_scale * normal(rng);
  }
  return ds;
}

Dataset synth_classification(Index n, Index input_dim, Index num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix teacher(num_classes, input_dim);
  for (Index j = 0; j < input_dim; ++j) {
    for (Index i = 0; i < num_classes; ++i) teacher(i, j) = normal(rng);
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset ds;
  ds.kind = DatasetKind::kClassification;
  ds.num_classes = num_classes;
  ds.inputs.resize(input_dim, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < input_dim; ++i) ds.inputs(i, j) = unif(rng);
  }
  const Matrix logits = teacher * (ds.inputs.array() - 0.5).matrix();
  ds.classes.resize(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) logits.col(j).maxCoeff(&ds.classes[static_cast<std::size_t>(j)]);
  return ds;
}

}  // namespace kldwrm
