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

// Fully-connected feed-forward networks with manual backpropagation.
//
// Batches are stored column-wise: an input batch is input_dim x B, and every
// per-layer quantity keeps samples in columns. Layer l maps the augmented
// activation a_aug = [a; 1] to z = W a_aug, where W is out x (in + 1) with the
// bias in its last column.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "kldwrm/tensor.hpp"

namespace kldwrm {

enum class Activation { kRelu, kIdentity, kSoftmaxOutput };
enum class LossKind { kCrossEntropy, kGaussian };

struct LayerSpec {
  Index in_dim = 0;
  Index out_dim = 0;
  Activation activation = Activation::kRelu;
};

struct Network {
  std::vector<LayerSpec> layers;

  /// Throws ConfigError unless dims chain and softmax appears only last.
  void validate() const;
  Index input_dim() const { return layers.front().in_dim; }
  Index output_dim() const { return layers.back().out_dim; }
  Index num_layers() const { return static_cast<Index>(layers.size()); }
  /// d = sum of out * (in + 1).
  Index param_count() const;
  /// Cross-entropy for a softmax head, Gaussian otherwise.
  LossKind loss_kind() const;
};

/// ReLU hidden layers between consecutive widths; the last layer is a softmax
/// head or an identity (Gaussian) head.
Network make_mlp(const std::vector<Index>& widths, LossKind head);

struct NetParams {
  std::vector<Matrix> W;  // W[l] is out x (in + 1)
};

struct ForwardCache {
  std::vector<Matrix> a_aug;  // a_aug[l]: (in_l + 1) x B, input of layer l
  std::vector<Matrix> z;      // z[l]: out_l x B
  Matrix outputs;             // logits (softmax head) or means (Gaussian head)
  Index batch_size() const { return outputs.cols(); }
};

/// Classification labels or regression targets for a batch.
struct Targets {
  std::vector<Index> classes;  // cross-entropy
  Matrix values;               // Gaussian, out_dim x B
};

struct LossGrad {
  double loss = 0.0;
  Vector grad;  // flattened, same layout as flatten(params)
  ForwardCache cache;
};

NetParams init_params(const Network& net, std::mt19937_64& rng);
NetParams zero_params(const Network& net);

Vector flatten(const NetParams& params);
NetParams unflatten(const Network& net, const Eigen::Ref<const Vector>& theta);
/// Start offset of each layer's block in the flattened vector, plus the total.
std::vector<Index> layer_offsets(const Network& net);

/// Deep copy; NetParams owns its storage so this is a value copy.
inline NetParams snapshot(const NetParams& params) { return params; }

ForwardCache forward(const Network& net, const NetParams& params, const Matrix& inputs);

/// Column-wise softmax and log-softmax with max subtraction.
Matrix softmax(const Matrix& logits);
Matrix log_softmax(const Matrix& logits);

/// Per-layer dL/dz given dL/d(outputs), both batch-shaped.
std::vector<Matrix> backward_dz(const Network& net, const NetParams& params,
                                const ForwardCache& cache, const Matrix& d_outputs);

/// Flattened sum over the batch of dz a_aug^T per layer.
Vector grad_from_dz(const Network& net, const ForwardCache& cache,
                    const std::vector<Matrix>& dz);

/// Per-sample loss derivatives with respect to the outputs, unscaled.
Matrix output_residual(const Matrix& outputs, const Targets& targets, LossKind kind);

/// Batch-mean negative log-likelihood.
double mean_loss(const Matrix& outputs, const Targets& targets, LossKind kind);

LossGrad loss_grad(const Network& net, const NetParams& params, const Matrix& inputs,
                   const Targets& targets, LossKind kind);

/// y ~ p_theta(y | x): softmax draws for classification, outputs plus unit
/// normal noise for regression.
Targets sample_labels(const Network& net, const NetParams& params, const Matrix& inputs,
                      std::mt19937_64& rng);
Targets sample_labels(const Network& net, const NetParams& params, const Matrix& inputs,
                      std::uint64_t seed);
Targets sample_labels_from_outputs(const Matrix& outputs, LossKind kind, std::mt19937_64& rng);

/// outputs + noise, the regression sampler with its noise made explicit.
Targets gaussian_labels(const Matrix& outputs, const Matrix& noise);

/// Fraction of columns whose argmax equals the class label.
double accuracy(const Matrix& logits, const std::vector<Index>& classes);

}  // namespace kldwrm
