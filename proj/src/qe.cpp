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

#include "kldwrm/qe.hpp"

#include <cmath>
#include <sstream>

#include "kldwrm/curvature.hpp"

namespace kldwrm {

double skl_gaussian(const Vector& h1, const Vector& h2) {
  if (h1.size() != h2.size()) throw DimensionError("skl_gaussian: length mismatch");
  return 0.5 * (h1 - h2).squaredNorm();
}

double skl_categorical(const Vector& logits1, const Vector& logits2) {
  if (logits1.size() != logits2.size()) throw DimensionError("skl_categorical: length mismatch");
  if (logits1.size() < 2) throw DimensionError("skl_categorical: need at least two classes");
  if (!logits1.allFinite() || !logits2.allFinite()) {
    throw NumericError("skl_categorical: non-finite logits");
  }
  const Vector l1 = log_softmax(logits1);
  const Vector l2 = log_softmax(logits2);
  // 1/2 sum p1 (l1 - l2) + 1/2 sum p2 (l2 - l1) = 1/2 sum (p1 - p2)(l1 - l2)
  return 0.5 * (l1.array().exp() - l2.array().exp()).matrix().dot(l1 - l2);
}

double outputs_skl(const Matrix& a, const Matrix& b, LossKind kind) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("outputs_skl: shape mismatch");
  if (a.cols() == 0) throw DimensionError("outputs_skl: empty batch");
  double total = 0.0;
  if (kind == LossKind::kGaussian) {
    total = 0.5 * (a - b).squaredNorm();
  } else {
    const Matrix la = log_softmax(a);
    const Matrix lb = log_softmax(b);
    total = 0.5 * ((la.array().exp() - lb.array().exp()) * (la - lb).array()).sum();
  }
  return total / static_cast<double>(a.cols());
}

Matrix outputs_skl_grad(const Matrix& a, const Matrix& b, LossKind kind) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("outputs_skl_grad: shape mismatch");
  }
  if (kind == LossKind::kGaussian) return b - a;
  const Matrix lp = log_softmax(a);
  const Matrix lq = log_softmax(b);
  const Matrix p = lp.array().exp();
  const Matrix q = lq.array().exp();
  const Matrix u = lq - lp;
  Matrix grad(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    const double qu = q.col(j).dot(u.col(j));
    grad.col(j) = 0.5 * (q.col(j) - p.col(j)) +
                  0.5 * (q.col(j).array() * (u.col(j).array() - qu)).matrix();
  }
  return grad;
}

double dataset_skl(const Network& net, const NetParams& a, const NetParams& b,
                   const Matrix& inputs) {
  if (a.W.size() != b.W.size()) throw DimensionError("dataset_skl: architecture mismatch");
  for (std::size_t l = 0; l < a.W.size(); ++l) {
    if (a.W[l].rows() != b.W[l].rows() || a.W[l].cols() != b.W[l].cols()) {
      throw DimensionError("dataset_skl: architecture mismatch");
    }
  }
  return outputs_skl(forward(net, a, inputs).outputs, forward(net, b, inputs).outputs,
                     net.loss_kind());
}

SnapshotRing::SnapshotRing(Index cap) : cap_(cap) {
  if (cap < 0) throw ConfigError("snapshot cap must be nonnegative");
}

void SnapshotRing::push(const NetParams& params, Index birth) {
  if (!entries_.empty() && birth <= entries_.back().birth) {
    throw ConfigError("snapshot births must increase");
  }
  if (cap_ == 0) return;
  entries_.push_back({snapshot(params), birth});
  while (static_cast<Index>(entries_.size()) > cap_) entries_.pop_front();
}

void QEConfig::validate() const {
  if (n_is < 0) throw ConfigError("n_is must be nonnegative");
  if (!(omega > 0.0)) throw ConfigError("omega must be positive");
  if (n_cap < 0) throw ConfigError("n_cap must be nonnegative");
  if (!(zeta_scale >= 0.0)) throw ConfigError("zeta_scale must be nonnegative");
}

double wake_weight(Index birth, Index current, double lambda, double rho, double zeta_scale) {
  return lambda * zeta_scale * ea_weight(birth, current, rho);
}

QEProblem make_qe_problem(const Network& net, const NetParams& theta, const Matrix& inputs,
                          const Vector& g, std::function<Vector(const Vector&)> apply_B,
                          const SnapshotRing& ring, Index current, double lambda, double rho,
                          const QEConfig& cfg) {
  cfg.validate();
  QEProblem p;
  p.net = &net;
  p.theta = theta;
  p.inputs = inputs;
  p.g = g;
  p.apply_B = std::move(apply_B);
  for (const SnapshotRing::Entry& e : ring.entries()) {
    if (e.birth >= current) throw ConfigError("snapshot birth must precede the current epoch");
    p.ref_outputs.push_back(forward(net, e.params, inputs).outputs);
    p.weights.push_back(wake_weight(e.birth, current, lambda, rho, cfg.zeta_scale));
  }
  p.ref_outputs.push_back(forward(net, theta, inputs).outputs);
  p.weights.push_back(wake_weight(current, current, lambda, rho, cfg.zeta_scale));
  return p;
}

ValueGrad qe_objective_grad(const QEProblem& p, const Vector& s) {
  const Network& net = *p.net;
  if (s.size() != p.g.size()) throw DimensionError("qe_objective_grad: step length mismatch");
  const Vector Bs = p.apply_B(s);
  ValueGrad out;
  out.value = p.g.dot(s) + 0.5 * s.dot(Bs);
  out.grad = p.g + Bs;

  const NetParams moved = unflatten(net, flatten(p.theta) + s);
  const ForwardCache cache = forward(net, moved, p.inputs);
  const double inv_b = 1.0 / static_cast<double>(p.inputs.cols());
  Matrix d_out = Matrix::Zero(cache.outputs.rows(), cache.outputs.cols());
  for (std::size_t t = 0; t < p.ref_outputs.size(); ++t) {
    if (p.weights[t] == 0.0) continue;
    out.value += p.weights[t] * outputs_skl(p.ref_outputs[t], cache.outputs, net.loss_kind());
    d_out += (p.weights[t] * inv_b) *
             outputs_skl_grad(p.ref_outputs[t], cache.outputs, net.loss_kind());
  }
  out.grad += grad_from_dz(net, cache, backward_dz(net, moved, cache, d_out));
  if (!std::isfinite(out.value) || !out.grad.allFinite()) {
    throw NumericError("qe objective is not finite");
  }
  return out;
}

namespace detail {

Vector qe_refine(const QEProblem& problem, Vector s, double lambda, const QEConfig& cfg) {
  const double rate = cfg.omega / lambda;
  double value0 = 0.0;
  for (Index it = 0; it <= cfg.n_is; ++it) {
    const ValueGrad vg = qe_objective_grad(problem, s);
    if (it == 0) {
      value0 = vg.value;
    } else if (vg.value > value0 + 10.0 * std::abs(value0) + 1e-12) {
      std::ostringstream os;
      os << "qe inner loop diverged at iteration " << it << ": objective " << vg.value
         << " from " << value0;
      throw NumericError(os.str());
    }
    if (it < cfg.n_is) s -= rate * vg.grad;
  }
  return s;
}

}  // namespace detail

}  // namespace kldwrm
