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

#include "kldwrm/network.hpp"

#include <cmath>
#include <string>

namespace kldwrm {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

void check_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError(what + " contains non-finite entries");
}

Matrix augment(const Matrix& a) {
  Matrix out(a.rows() + 1, a.cols());
  out.topRows(a.rows()) = a;
  out.row(a.rows()).setOnes();
  return out;
}

}  // namespace

void Network::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& s = layers[l];
    if (s.in_dim <= 0 || s.out_dim <= 0) {
      throw ConfigError("layer " + std::to_string(l) + " has a non-positive dimension");
    }
    if (l > 0 && layers[l - 1].out_dim != s.in_dim) {
      throw ConfigError("layer " + std::to_string(l) + " input does not chain");
    }
    if (s.activation == Activation::kSoftmaxOutput && l + 1 != layers.size()) {
      throw ConfigError("softmax output allowed only on the final layer");
    }
  }
  if (layers.back().activation == Activation::kRelu) {
    throw ConfigError("final layer must be a softmax or identity head");
  }
}

Index Network::param_count() const {
  Index d = 0;
  for (const LayerSpec& s : layers) d += s.out_dim * (s.in_dim + 1);
  return d;
}

LossKind Network::loss_kind() const {
  return layers.back().activation == Activation::kSoftmaxOutput ? LossKind::kCrossEntropy
                                                                 : LossKind::kGaussian;
}

Network make_mlp(const std::vector<Index>& widths, LossKind head) {
  if (widths.size() < 2) throw ConfigError("an architecture needs at least two widths");
  Network net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    Activation act = Activation::kRelu;
    if (last) {
      act = head == LossKind::kCrossEntropy ? Activation::kSoftmaxOutput : Activation::kIdentity;
    }
    net.layers.push_back({widths[i], widths[i + 1], act});
  }
  net.validate();
  return net;
}

NetParams init_params(const Network& net, std::mt19937_64& rng) {
  NetParams p;
  for (const LayerSpec& s : net.layers) {
    const double r = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
    std::uniform_real_distribution<double> dist(-r, r);
    Matrix w = Matrix::Zero(s.out_dim, s.in_dim + 1);
    // Column-major fill order keeps the draw sequence tied to vec(W).
    for (Index c = 0; c < s.in_dim; ++c) {
      for (Index r_ = 0; r_ < s.out_dim; ++r_) w(r_, c) = dist(rng);
    }
    p.W.push_back(std::move(w));
  }
  return p;
}

NetParams zero_params(const Network& net) {
  NetParams p;
  for (const LayerSpec& s : net.layers) p.W.push_back(Matrix::Zero(s.out_dim, s.in_dim + 1));
  return p;
}

std::vector<Index> layer_offsets(const Network& net) {
  std::vector<Index> off{0};
  for (const LayerSpec& s : net.layers) off.push_back(off.back() + s.out_dim * (s.in_dim + 1));
  return off;
}

Vector flatten(const NetParams& params) {
  Index d = 0;
  for (const Matrix& w : params.W) d += w.size();
  Vector theta(d);
  Index o = 0;
  for (const Matrix& w : params.W) {
    theta.segment(o, w.size()) = Eigen::Map<const Vector>(w.data(), w.size());
    o += w.size();
  }
  return theta;
}

NetParams unflatten(const Network& net, const Eigen::Ref<const Vector>& theta) {
  if (theta.size() != net.param_count()) {
    throw DimensionError("unflatten: expected " + std::to_string(net.param_count()) +
                         " parameters, got " + std::to_string(theta.size()));
  }
  NetParams p;
  Index o = 0;
  for (const LayerSpec& s : net.layers) {
    const Index n = s.out_dim * (s.in_dim + 1);
    p.W.push_back(unvec(theta.segment(o, n), s.out_dim, s.in_dim + 1));
    o += n;
  }
  return p;
}

ForwardCache forward(const Network& net, const NetParams& params, const Matrix& inputs) {
  if (inputs.rows() != net.input_dim()) {
    throw DimensionError("forward: input dimension " + std::to_string(inputs.rows()) +
                         " != " + std::to_string(net.input_dim()));
  }
  if (params.W.size() != net.layers.size()) throw DimensionError("forward: layer count mismatch");
  check_finite(inputs, "forward input");

  ForwardCache cache;
  Matrix a = inputs;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerSpec& s = net.layers[l];
    if (params.W[l].rows() != s.out_dim || params.W[l].cols() != s.in_dim + 1) {
      throw DimensionError("forward: weight shape mismatch at layer " + std::to_string(l));
    }
    cache.a_aug.push_back(augment(a));
    Matrix z = params.W[l] * cache.a_aug.back();
    if (!z.allFinite()) {
      throw NumericError("forward: non-finite pre-activation at layer " + std::to_string(l));
    }
    a = s.activation == Activation::kRelu ? Matrix(z.cwiseMax(0.0)) : z;
    cache.z.push_back(std::move(z));
  }
  cache.outputs = std::move(a);
  return cache;
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    const double lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

Matrix softmax(const Matrix& logits) { return log_softmax(logits).array().exp(); }

std::vector<Matrix> backward_dz(const Network& net, const NetParams& params,
                                const ForwardCache& cache, const Matrix& d_outputs) {
  const std::size_t L = net.layers.size();
  std::vector<Matrix> dz(L);
  dz[L - 1] = d_outputs;
  for (std::size_t l = L - 1; l > 0; --l) {
    const LayerSpec& below = net.layers[l - 1];
    Matrix da = params.W[l].leftCols(below.out_dim).transpose() * dz[l];
    if (below.activation == Activation::kRelu) {
      da = (cache.z[l - 1].array() > 0.0).select(da, 0.0);
    }
    dz[l - 1] = std::move(da);
  }
  return dz;
}

Vector grad_from_dz(const Network& net, const ForwardCache& cache,
                    const std::vector<Matrix>& dz) {
  Vector g(net.param_count());
  Index o = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Matrix gl = dz[l] * cache.a_aug[l].transpose();
    g.segment(o, gl.size()) = Eigen::Map<const Vector>(gl.data(), gl.size());
    o += gl.size();
  }
  return g;
}

namespace {

void check_targets(const Matrix& outputs, const Targets& t, LossKind kind) {
  if (kind == LossKind::kCrossEntropy) {
    if (static_cast<Index>(t.classes.size()) != outputs.cols()) {
      throw DimensionError("label count does not match batch size");
    }
    for (Index c : t.classes) {
      if (c < 0 || c >= outputs.rows()) {
        throw DimensionError("class label " + std::to_string(c) + " out of range");
      }
    }
  } else if (t.values.rows() != outputs.rows() || t.values.cols() != outputs.cols()) {
    throw DimensionError("regression targets do not match output shape");
  }
}

}  // namespace

Matrix output_residual(const Matrix& outputs, const Targets& targets, LossKind kind) {
  check_targets(outputs, targets, kind);
  if (kind == LossKind::kGaussian) return outputs - targets.values;
  Matrix r = softmax(outputs);
  for (Index j = 0; j < r.cols(); ++j) r(targets.classes[static_cast<std::size_t>(j)], j) -= 1.0;
  return r;
}

double mean_loss(const Matrix& outputs, const Targets& targets, LossKind kind) {
  check_targets(outputs, targets, kind);
  const double B = static_cast<double>(outputs.cols());
  double total = 0.0;
  if (kind == LossKind::kGaussian) {
    total = 0.5 * (outputs - targets.values).squaredNorm() +
            0.5 * static_cast<double>(outputs.size()) * kLogTwoPi;
  } else {
    const Matrix ls = log_softmax(outputs);
    for (Index j = 0; j < ls.cols(); ++j) total -= ls(targets.classes[static_cast<std::size_t>(j)], j);
  }
  const double loss = total / B;
  if (!std::isfinite(loss)) throw NumericError("loss is not finite");
  return loss;
}

LossGrad loss_grad(const Network& net, const NetParams& params, const Matrix& inputs,
                   const Targets& targets, LossKind kind) {
  LossGrad out;
  out.cache = forward(net, params, inputs);
  out.loss = mean_loss(out.cache.outputs, targets, kind);
  Matrix d_out = output_residual(out.cache.outputs, targets, kind) /
                 static_cast<double>(inputs.cols());
  out.grad = grad_from_dz(net, out.cache, backward_dz(net, params, out.cache, d_out));
  return out;
}

Targets gaussian_labels(const Matrix& outputs, const Matrix& noise) {
  if (noise.rows() != outputs.rows() || noise.cols() != outputs.cols()) {
    throw DimensionError("gaussian_labels: noise shape mismatch");
  }
  Targets t;
  t.values = outputs + noise;
  return t;
}

Targets sample_labels_from_outputs(const Matrix& outputs, LossKind kind, std::mt19937_64& rng) {
  if (kind == LossKind::kGaussian) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix noise(outputs.rows(), outputs.cols());
    for (Index j = 0; j < noise.cols(); ++j) {
      for (Index i = 0; i < noise.rows(); ++i) noise(i, j) = normal(rng);
    }
    return gaussian_labels(outputs, noise);
  }
  const Matrix p = softmax(outputs);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Targets t;
  t.classes.resize(static_cast<std::size_t>(p.cols()));
  for (Index j = 0; j < p.cols(); ++j) {
    const double u = unif(rng);
    double acc = 0.0;
    Index c = p.rows() - 1;
    for (Index i = 0; i < p.rows(); ++i) {
      acc += p(i, j);
      if (u < acc) {
        c = i;
        break;
      }
    }
    t.classes[static_cast<std::size_t>(j)] = c;
  }
  return t;
}

Targets sample_labels(const Network& net, const NetParams& params, const Matrix& inputs,
                      std::mt19937_64& rng) {
  return sample_labels_from_outputs(forward(net, params, inputs).outputs, net.loss_kind(), rng);
}

Targets sample_labels(const Network& net, const NetParams& params, const Matrix& inputs,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_labels(net, params, inputs, rng);
}

double accuracy(const Matrix& logits, const std::vector<Index>& classes) {
  if (static_cast<Index>(classes.size()) != logits.cols()) {
    throw DimensionError("accuracy: label count mismatch");
  }
  if (logits.cols() == 0) return 0.0;
  Index hits = 0;
  for (Index j = 0; j < logits.cols(); ++j) {
    Index arg = 0;
    logits.col(j).maxCoeff(&arg);
    if (arg == classes[static_cast<std::size_t>(j)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.cols());
}

}  // namespace kldwrm
