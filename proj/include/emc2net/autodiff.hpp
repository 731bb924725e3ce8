/*
 * Copyright 2026 The emc2net Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "emc2net/rng.hpp"
#include "emc2net/types.hpp"

// Reverse-mode differentiation over dense matrices. A Tape is a Wengert
// list: every op appends its output entry plus a pull closure; backward()
// seeds the scalar loss and replays the list in reverse. Tapes are built per
// forward pass and are single-threaded; parameters live outside the tape in
// a ParamStore and are bound in as leaves, so concurrent tapes over shared
// read-only parameters are safe.
//
// Scalar is float in training mode and double in test/verification mode.
// Reductions along a set axis inside attend() always accumulate in double;
// this keeps classifier outputs reproducible under permutations of the
// input set at tight tolerances even in float mode.

namespace emc2net::ad {

template <typename S>
struct ParamStore {
  struct Entry {
    std::string name;
    Mat<S> value;
  };
  std::vector<Entry> entries;

  int add(const std::string& name, Mat<S> v) {
    entries.push_back(Entry{name, std::move(v)});
    return static_cast<int>(entries.size()) - 1;
  }
  Mat<S>& value(int id) { return entries[static_cast<std::size_t>(id)].value; }
  const Mat<S>& value(int id) const { return entries[static_cast<std::size_t>(id)].value; }
  int size() const { return static_cast<int>(entries.size()); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(e.value.size());
    return n;
  }
};

/// Per-parameter gradient accumulator matching a ParamStore's shapes.
template <typename S>
struct GradBuffer {
  std::vector<Mat<S>> g;

  void init_like(const ParamStore<S>& store) {
    g.clear();
    g.reserve(store.entries.size());
    for (const auto& e : store.entries)
      g.push_back(Mat<S>::Zero(e.value.rows(), e.value.cols()));
  }
  void set_zero() {
    for (auto& m : g) m.setZero();
  }
  void add(const GradBuffer& other) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += other.g[i];
  }
  void scale(S c) {
    for (auto& m : g) m *= c;
  }
};

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Mat<S>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  S scalar() const;
};

template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool check_finite = true;

  /// Leaf that never receives a gradient.
  Var<S> constant(Mat<S> v) { return make_leaf(std::move(v), false, nullptr, -1); }

  /// Leaf with a gradient, not bound to a store (for gradient checks).
  Var<S> input(Mat<S> v) { return make_leaf(std::move(v), true, nullptr, -1); }

  /// Leaf bound to store parameter `id`; its gradient is picked up by
  /// accumulate_param_grads after backward().
  Var<S> param(ParamStore<S>& store, int id) {
    return make_leaf(store.value(id), true, &store, id);
  }

  /// Reverse sweep from a scalar loss.
  void backward(Var<S> loss) {
    const Entry& le = entry(loss.id);
    if (le.value.rows() != 1 || le.value.cols() != 1)
      throw ShapeError("backward: loss must be a 1x1 scalar");
    if (nodes_.empty() && entries_.empty())
      throw ShapeError("backward: empty tape");
    for (auto& e : entries_) e.grad.setZero(e.value.rows(), e.value.cols());
    entry_mut(loss.id).grad(0, 0) = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->pull();
    ran_backward_ = true;
  }

  const Mat<S>& grad(Var<S> v) const {
    if (!ran_backward_) throw ShapeError("grad: backward() has not run");
    return entry(v.id).grad;
  }

  /// sink[id] += gradient of every leaf bound to `store`.
  void accumulate_param_grads(const ParamStore<S>& store, GradBuffer<S>& sink) const {
    if (!ran_backward_) throw ShapeError("accumulate_param_grads: backward() has not run");
    for (const auto& b : bindings_)
      if (b.store == &store)
        sink.g[static_cast<std::size_t>(b.param_id)] += entry(b.entry_id).grad;
  }

  // --- plumbing used by the op free functions ---

  struct Entry {
    Mat<S> value;
    Mat<S> grad;
    bool needs_grad = false;
  };

  const Entry& entry(int id) const { return entries_[static_cast<std::size_t>(id)]; }
  Entry& entry_mut(int id) { return entries_[static_cast<std::size_t>(id)]; }
  const Mat<S>& val(int id) const { return entry(id).value; }
  Mat<S>& grad_mut(int id) { return entry_mut(id).grad; }
  bool needs(int id) const { return entry(id).needs_grad; }

  /// Appends the output entry; the op registers its pull afterwards.
  Var<S> push_value(Mat<S> value, bool needs_grad) {
    if (check_finite && !value.allFinite())
      throw NumericError("non-finite value produced by a tape operation");
    entries_.push_back(Entry{std::move(value), Mat<S>(), needs_grad});
    return Var<S>{this, static_cast<int>(entries_.size()) - 1};
  }

  void push_pull(std::function<void()> pull) {
    nodes_.push_back(Node{std::move(pull)});
  }

 private:
  struct Node {
    std::function<void()> pull;
  };
  struct Binding {
    const ParamStore<S>* store;
    int param_id;
    int entry_id;
  };

  Var<S> make_leaf(Mat<S> v, bool needs_grad, ParamStore<S>* store, int param_id) {
    if (check_finite && !v.allFinite()) throw NumericError("non-finite leaf value");
    entries_.push_back(Entry{std::move(v), Mat<S>(), needs_grad});
    const int id = static_cast<int>(entries_.size()) - 1;
    if (store != nullptr) bindings_.push_back(Binding{store, param_id, id});
    return Var<S>{this, id};
  }

  std::vector<Entry> entries_;
  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
  bool ran_backward_ = false;
};

template <typename S>
const Mat<S>& Var<S>::value() const {
  return tape->entry(id).value;
}

template <typename S>
S Var<S>::scalar() const {
  const Mat<S>& v = value();
  require(v.rows() == 1 && v.cols() == 1, "scalar(): value is not 1x1");
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
void same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch");
}

template <typename S>
void same_tape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.tape != b.tape) throw ShapeError(std::string(op) + ": vars from different tapes");
}

using MatD = Eigen::MatrixXd;

template <typename S>
MatD to_double(const Mat<S>& m) {
  return m.template cast<double>();
}

}  // namespace detail

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "add");
  detail::same_shape(a, b, "add");
  Tape<S>* t = a.tape;
  const int ai = a.id, bi = b.id;
  const bool ng = t->needs(ai) || t->needs(bi);
  Var<S> out = t->push_value(a.value() + b.value(), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, bi, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(ai)) t->grad_mut(ai) += g;
      if (t->needs(bi)) t->grad_mut(bi) += g;
    });
  }
  return out;
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "sub");
  detail::same_shape(a, b, "sub");
  Tape<S>* t = a.tape;
  const int ai = a.id, bi = b.id;
  const bool ng = t->needs(ai) || t->needs(bi);
  Var<S> out = t->push_value(a.value() - b.value(), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, bi, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(ai)) t->grad_mut(ai) += g;
      if (t->needs(bi)) t->grad_mut(bi) -= g;
    });
  }
  return out;
}

/// Elementwise (Hadamard) product.
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "mul");
  detail::same_shape(a, b, "mul");
  Tape<S>* t = a.tape;
  const int ai = a.id, bi = b.id;
  const bool ng = t->needs(ai) || t->needs(bi);
  Var<S> out = t->push_value(a.value().cwiseProduct(b.value()), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, bi, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(ai)) t->grad_mut(ai) += g.cwiseProduct(t->val(bi));
      if (t->needs(bi)) t->grad_mut(bi) += g.cwiseProduct(t->val(ai));
    });
  }
  return out;
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Var<S> out = t->push_value(a.value() * c, ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi, c] { t->grad_mut(ai) += t->entry(oi).grad * c; });
  }
  return out;
}

template <typename S>
Var<S> add_scalar(Var<S> a, S c) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Var<S> out = t->push_value((a.value().array() + c).matrix(), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi] { t->grad_mut(ai) += t->entry(oi).grad; });
  }
  return out;
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Tape<S>* t = a.tape;
  const int ai = a.id, bi = b.id;
  const bool ng = t->needs(ai) || t->needs(bi);
  Var<S> out = t->push_value(a.value() * b.value(), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, bi, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(ai)) t->grad_mut(ai).noalias() += g * t->val(bi).transpose();
      if (t->needs(bi)) t->grad_mut(bi).noalias() += t->val(ai).transpose() * g;
    });
  }
  return out;
}

template <typename S>
Var<S> transpose(Var<S> a) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Var<S> out = t->push_value(a.value().transpose(), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi] { t->grad_mut(ai) += t->entry(oi).grad.transpose(); });
  }
  return out;
}

template <typename S>
Var<S> relu(Var<S> a) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Var<S> out = t->push_value(a.value().cwiseMax(S(0)), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      const Mat<S>& x = t->val(ai);
      t->grad_mut(ai).array() += g.array() * (x.array() > S(0)).template cast<S>();
    });
  }
  return out;
}

template <typename S>
Var<S> square(Var<S> a) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Var<S> out = t->push_value(a.value().array().square().matrix(), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi] {
      t->grad_mut(ai).array() +=
          t->entry(oi).grad.array() * S(2) * t->val(ai).array();
    });
  }
  return out;
}

/// log(max(x, floor)); the clamp keeps cross-entropy finite at p -> 0.
template <typename S>
Var<S> log_clamped(Var<S> a, S floor) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Mat<S> clamped = a.value().cwiseMax(floor);
  Var<S> out = t->push_value(clamped.array().log().matrix(), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi, floor] {
      const Mat<S>& g = t->entry(oi).grad;
      const Mat<S>& x = t->val(ai);
      // Zero slope inside the clamp, 1/x outside.
      t->grad_mut(ai).array() +=
          g.array() * (x.array() > floor).template cast<S>() / x.array().max(floor);
    });
  }
  return out;
}

template <typename S>
Var<S> sum_all(Var<S> a) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Mat<S> v(1, 1);
  v(0, 0) = a.value().sum();
  Var<S> out = t->push_value(std::move(v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi] {
      t->grad_mut(ai).array() += t->entry(oi).grad(0, 0);
    });
  }
  return out;
}

template <typename S>
Var<S> mean_all(Var<S> a) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  const S inv_n = S(1) / static_cast<S>(a.value().size());
  Mat<S> v(1, 1);
  v(0, 0) = a.value().sum() * inv_n;
  Var<S> out = t->push_value(std::move(v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi, inv_n] {
      t->grad_mut(ai).array() += t->entry(oi).grad(0, 0) * inv_n;
    });
  }
  return out;
}

/// Single element (r, c) as a 1x1 tensor.
template <typename S>
Var<S> pick(Var<S> a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols())
    throw ShapeError("pick: index out of range");
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Mat<S> v(1, 1);
  v(0, 0) = a.value()(r, c);
  Var<S> out = t->push_value(std::move(v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi, r, c] {
      t->grad_mut(ai)(r, c) += t->entry(oi).grad(0, 0);
    });
  }
  return out;
}

/// Broadcast-add a 1 x d row vector over every row of a (n x d).
template <typename S>
Var<S> add_rowvec(Var<S> a, Var<S> v) {
  detail::same_tape(a, v, "add_rowvec");
  if (v.rows() != 1 || v.cols() != a.cols())
    throw ShapeError("add_rowvec: vector must be 1 x cols(a)");
  Tape<S>* t = a.tape;
  const int ai = a.id, vi = v.id;
  const bool ng = t->needs(ai) || t->needs(vi);
  Mat<S> out_v = a.value().rowwise() + v.value().row(0);
  Var<S> out = t->push_value(std::move(out_v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, vi, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(ai)) t->grad_mut(ai) += g;
      if (t->needs(vi)) t->grad_mut(vi) += g.colwise().sum();
    });
  }
  return out;
}

/// Broadcast-multiply a 1 x d row vector over every row of a (n x d).
template <typename S>
Var<S> mul_rowvec(Var<S> a, Var<S> v) {
  detail::same_tape(a, v, "mul_rowvec");
  if (v.rows() != 1 || v.cols() != a.cols())
    throw ShapeError("mul_rowvec: vector must be 1 x cols(a)");
  Tape<S>* t = a.tape;
  const int ai = a.id, vi = v.id;
  const bool ng = t->needs(ai) || t->needs(vi);
  Mat<S> out_v = a.value().array().rowwise() * v.value().row(0).array();
  Var<S> out = t->push_value(std::move(out_v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, vi, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(ai))
        t->grad_mut(ai).array() += g.array().rowwise() * t->val(vi).row(0).array();
      if (t->needs(vi))
        t->grad_mut(vi) += g.cwiseProduct(t->val(ai)).colwise().sum();
    });
  }
  return out;
}

/// Row-wise softmax (over the last axis). Exponentials and normalizing sums
/// run in double regardless of S.
template <typename S>
Var<S> softmax_rows(Var<S> a) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  detail::MatD x = detail::to_double(a.value());
  Eigen::VectorXd mx = x.rowwise().maxCoeff();
  detail::MatD e = (x.colwise() - mx).array().exp();
  Eigen::VectorXd z = e.rowwise().sum();
  detail::MatD p = e.array().colwise() / z.array();
  Var<S> out = t->push_value(p.cast<S>(), ng);
  if (ng) {
    const int oi = out.id;
    auto p_keep = std::make_shared<detail::MatD>(std::move(p));
    t->push_pull([t, ai, oi, p_keep] {
      const detail::MatD g = detail::to_double(t->entry(oi).grad);
      const detail::MatD& p = *p_keep;
      Eigen::VectorXd dot = (g.array() * p.array()).rowwise().sum();
      detail::MatD dx = p.array() * (g.array().colwise() - dot.array());
      t->grad_mut(ai) += dx.cast<S>();
    });
  }
  return out;
}

/// Row-wise layer normalization without the affine part; compose with
/// mul_rowvec/add_rowvec for learned gain and bias.
template <typename S>
Var<S> layer_norm_rows(Var<S> a, double eps = 1e-5) {
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  const auto n = static_cast<double>(a.cols());
  detail::MatD x = detail::to_double(a.value());
  Eigen::VectorXd mu = x.rowwise().mean();
  detail::MatD centered = x.colwise() - mu;
  Eigen::VectorXd var = centered.array().square().rowwise().sum() / n;
  Eigen::VectorXd inv_sigma = (var.array() + eps).rsqrt();
  detail::MatD y = centered.array().colwise() * inv_sigma.array();
  Var<S> out = t->push_value(y.cast<S>(), ng);
  if (ng) {
    const int oi = out.id;
    auto y_keep = std::make_shared<detail::MatD>(std::move(y));
    auto is_keep = std::make_shared<Eigen::VectorXd>(std::move(inv_sigma));
    t->push_pull([t, ai, oi, y_keep, is_keep, n] {
      const detail::MatD g = detail::to_double(t->entry(oi).grad);
      const detail::MatD& y = *y_keep;
      Eigen::VectorXd g_mean = g.rowwise().mean();
      Eigen::VectorXd gy_mean = (g.array() * y.array()).rowwise().sum() / n;
      detail::MatD dx =
          ((g.array().colwise() - g_mean.array()) -
           y.array().colwise() * gy_mean.array())
              .colwise() *
          is_keep->array();
      t->grad_mut(ai) += dx.cast<S>();
    });
  }
  return out;
}

/// Inverted dropout: at train time, elements are dropped with probability p
/// and survivors are scaled by 1/(1-p); inference is the identity.
template <typename S>
Var<S> dropout(Var<S> a, double p, RngStream& rng, bool train) {
  if (p < 0.0 || p >= 1.0) throw ShapeError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) return a;
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Mat<S> mask(a.rows(), a.cols());
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index c = 0; c < mask.cols(); ++c)
    for (Eigen::Index r = 0; r < mask.rows(); ++r)
      mask(r, c) = rng.next_double() >= p ? keep_scale : S(0);
  Var<S> out = t->push_value(a.value().cwiseProduct(mask), ng);
  if (ng) {
    const int oi = out.id;
    auto mask_keep = std::make_shared<Mat<S>>(std::move(mask));
    t->push_pull([t, ai, oi, mask_keep] {
      t->grad_mut(ai) += t->entry(oi).grad.cwiseProduct(*mask_keep);
    });
  }
  return out;
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
  detail::same_tape(a, b, "concat_cols");
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Tape<S>* t = a.tape;
  const int ai = a.id, bi = b.id;
  const bool ng = t->needs(ai) || t->needs(bi);
  Mat<S> v(a.rows(), a.cols() + b.cols());
  v.leftCols(a.cols()) = a.value();
  v.rightCols(b.cols()) = b.value();
  const Eigen::Index ac = a.cols(), bc = b.cols();
  Var<S> out = t->push_value(std::move(v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, bi, oi, ac, bc] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(ai)) t->grad_mut(ai) += g.leftCols(ac);
      if (t->needs(bi)) t->grad_mut(bi) += g.rightCols(bc);
    });
  }
  return out;
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols: range out of bounds");
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  Var<S> out = t->push_value(a.value().middleCols(start, count), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi, start, count] {
      t->grad_mut(ai).middleCols(start, count) += t->entry(oi).grad;
    });
  }
  return out;
}

/// Keep columns phase, phase+stride, phase+2*stride, ...
template <typename S>
Var<S> downsample_cols(Var<S> a, int stride, int phase = 0) {
  if (stride < 1 || phase < 0 || phase >= stride)
    throw ShapeError("downsample_cols: bad stride/phase");
  if (a.cols() < 1) throw ShapeError("downsample_cols: empty input");
  Tape<S>* t = a.tape;
  const int ai = a.id;
  const bool ng = t->needs(ai);
  const Eigen::Index n_out = (a.cols() - phase + stride - 1) / stride;
  Mat<S> v(a.rows(), n_out);
  for (Eigen::Index j = 0; j < n_out; ++j) v.col(j) = a.value().col(phase + j * stride);
  Var<S> out = t->push_value(std::move(v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, ai, oi, stride, phase, n_out] {
      const Mat<S>& g = t->entry(oi).grad;
      Mat<S>& ga = t->grad_mut(ai);
      for (Eigen::Index j = 0; j < n_out; ++j) ga.col(phase + j * stride) += g.col(j);
    });
  }
  return out;
}

/// 1-D convolution, stride 1, "same" zero padding. x is C_in x L; the kernel
/// is C_out x (C_in * k) with kernel element (co, ci*k + j) tapping input
/// offset j - (k-1)/2; bias is C_out x 1. Runs as im2col + GEMM.
template <typename S>
Var<S> conv1d(Var<S> x, Var<S> w, Var<S> b, int k) {
  detail::same_tape(x, w, "conv1d");
  detail::same_tape(x, b, "conv1d");
  if (k < 1 || k % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
  const Eigen::Index c_in = x.rows(), len = x.cols();
  const Eigen::Index c_out = w.rows();
  if (w.cols() != c_in * k) throw ShapeError("conv1d: kernel shape mismatch");
  if (b.rows() != c_out || b.cols() != 1) throw ShapeError("conv1d: bias shape mismatch");

  Tape<S>* t = x.tape;
  const int xi = x.id, wi = w.id, bi = b.id;
  const bool ng = t->needs(xi) || t->needs(wi) || t->needs(bi);
  const int pad = (k - 1) / 2;

  auto col = std::make_shared<Mat<S>>(Mat<S>::Zero(c_in * k, len));
  const Mat<S>& xv = x.value();
  for (Eigen::Index ci = 0; ci < c_in; ++ci) {
    for (int j = 0; j < k; ++j) {
      const Eigen::Index off = j - pad;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
      const Eigen::Index hi = std::min<Eigen::Index>(len, len - off);
      if (hi <= lo) continue;
      col->row(ci * k + j).segment(lo, hi - lo) = xv.row(ci).segment(lo + off, hi - lo);
    }
  }

  Mat<S> out_v = w.value() * (*col);
  out_v.colwise() += b.value().col(0);
  Var<S> out = t->push_value(std::move(out_v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, xi, wi, bi, oi, col, c_in, len, k, pad] {
      const Mat<S>& g = t->entry(oi).grad;
      if (t->needs(wi)) t->grad_mut(wi).noalias() += g * col->transpose();
      if (t->needs(bi)) t->grad_mut(bi) += g.rowwise().sum();
      if (t->needs(xi)) {
        Mat<S> dcol = t->val(wi).transpose() * g;  // (c_in*k) x len
        Mat<S>& gx = t->grad_mut(xi);
        for (Eigen::Index ci = 0; ci < c_in; ++ci) {
          for (int j = 0; j < k; ++j) {
            const Eigen::Index off = j - pad;
            const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
            const Eigen::Index hi = std::min<Eigen::Index>(len, len - off);
            if (hi <= lo) continue;
            gx.row(ci).segment(lo + off, hi - lo) +=
                dcol.row(ci * k + j).segment(lo, hi - lo);
          }
        }
      }
    });
  }
  return out;
}

/// "Same" convolution of every row with a fixed (non-learned) tap vector.
template <typename S>
Var<S> fixed_filter_rows(Var<S> x, const VecXd& taps) {
  if (taps.size() < 1 || taps.size() % 2 == 0)
    throw ShapeError("fixed_filter_rows: tap count must be odd");
  Tape<S>* t = x.tape;
  const int xi = x.id;
  const bool ng = t->needs(xi);
  const Eigen::Index len = x.cols();
  const Eigen::Index nt = taps.size();
  const Eigen::Index center = (nt - 1) / 2;

  auto taps_s = std::make_shared<Vec<S>>(taps.cast<S>());
  auto filt = [len, nt, center](const Mat<S>& in, const Vec<S>& tp, bool flip) {
    Mat<S> out = Mat<S>::Zero(in.rows(), len);
    for (Eigen::Index i = 0; i < len; ++i) {
      const Eigen::Index k_lo = std::max<Eigen::Index>(0, i + center - len + 1);
      const Eigen::Index k_hi = std::min<Eigen::Index>(nt - 1, i + center);
      for (Eigen::Index k = k_lo; k <= k_hi; ++k) {
        const S tap = flip ? tp[nt - 1 - k] : tp[k];
        out.col(i) += tap * in.col(i + center - k);
      }
    }
    return out;
  };

  Var<S> out = t->push_value(filt(x.value(), *taps_s, false), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, xi, oi, taps_s, filt] {
      // Adjoint of convolution is correlation: convolve with flipped taps.
      t->grad_mut(xi) += filt(t->entry(oi).grad, *taps_s, true);
    });
  }
  return out;
}

/// Subtracts each row's mean (per-channel DC removal).
template <typename S>
Var<S> zero_mean_rows(Var<S> x) {
  Tape<S>* t = x.tape;
  const int xi = x.id;
  const bool ng = t->needs(xi);
  Mat<S> v = x.value();
  Vec<S> mu = v.rowwise().mean();
  v.colwise() -= mu;
  Var<S> out = t->push_value(std::move(v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, xi, oi] {
      const Mat<S>& g = t->entry(oi).grad;
      Vec<S> g_mu = g.rowwise().mean();
      t->grad_mut(xi) += g.colwise() - g_mu;
    });
  }
  return out;
}

/// Treats columns as symbols (rows are I/Q components): divides by
/// sqrt(mean_k |symbol_k|^2) = sqrt(sum(x^2) / cols).
template <typename S>
Var<S> unit_power_norm(Var<S> x) {
  Tape<S>* t = x.tape;
  const int xi = x.id;
  const bool ng = t->needs(xi);
  const auto n = static_cast<double>(x.cols());
  const double p = detail::to_double(x.value()).squaredNorm() / n;
  if (p <= 0.0) throw NumericError("unit_power_norm: zero-power input");
  const double inv_s = 1.0 / std::sqrt(p);
  Var<S> out = t->push_value(x.value() * static_cast<S>(inv_s), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, xi, oi, inv_s, p, n] {
      // z = x * p^{-1/2}; dx = g * p^{-1/2} - x * (<g, x> * p^{-3/2} / n).
      const detail::MatD g = detail::to_double(t->entry(oi).grad);
      const detail::MatD xv = detail::to_double(t->val(xi));
      const double gx = (g.array() * xv.array()).sum();
      detail::MatD dx = g * inv_s - xv * (gx * inv_s / (p * n));
      t->grad_mut(xi) += dx.cast<S>();
    });
  }
  return out;
}

/// Squared modulus per row of an n x 2 point set: out_i = x_i0^2 + x_i1^2.
template <typename S>
Var<S> row_sqnorm(Var<S> x) {
  Tape<S>* t = x.tape;
  const int xi = x.id;
  const bool ng = t->needs(xi);
  Mat<S> v = x.value().rowwise().squaredNorm();
  Var<S> out = t->push_value(std::move(v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, xi, oi] {
      const Mat<S>& g = t->entry(oi).grad;  // n x 1
      t->grad_mut(xi).array() +=
          S(2) * t->val(xi).array().colwise() * g.col(0).array();
    });
  }
  return out;
}

/// Multi-head scaled dot-product attention: rows of q attend over rows of
/// k/v. Scores use 1/sqrt(d/heads); softmax and both set-axis contractions
/// accumulate in double so the output is permutation-stable. Returns a
/// q.rows() x d matrix.
template <typename S>
Var<S> attend(Var<S> q, Var<S> k, Var<S> v, int heads) {
  detail::same_tape(q, k, "attend");
  detail::same_tape(q, v, "attend");
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d) throw ShapeError("attend: feature dims differ");
  if (k.rows() != v.rows()) throw ShapeError("attend: key/value row counts differ");
  if (heads < 1 || d % heads != 0) throw ShapeError("attend: heads must divide dim");

  Tape<S>* t = q.tape;
  const int qi = q.id, ki = k.id, vi = v.id;
  const bool ng = t->needs(qi) || t->needs(ki) || t->needs(vi);
  const Eigen::Index dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto attn = std::make_shared<std::vector<detail::MatD>>();
  attn->reserve(static_cast<std::size_t>(heads));

  Mat<S> out_v(q.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    detail::MatD qh = detail::to_double(q.value().middleCols(c0, dh));
    detail::MatD kh = detail::to_double(k.value().middleCols(c0, dh));
    detail::MatD vh = detail::to_double(v.value().middleCols(c0, dh));
    detail::MatD scores = (qh * kh.transpose()) * inv_scale;
    Eigen::VectorXd mx = scores.rowwise().maxCoeff();
    detail::MatD e = (scores.colwise() - mx).array().exp();
    Eigen::VectorXd z = e.rowwise().sum();
    detail::MatD a = e.array().colwise() / z.array();
    out_v.middleCols(c0, dh) = (a * vh).cast<S>();
    attn->push_back(std::move(a));
  }

  Var<S> out = t->push_value(std::move(out_v), ng);
  if (ng) {
    const int oi = out.id;
    t->push_pull([t, qi, ki, vi, oi, attn, heads, dh, inv_scale] {
      const Mat<S>& g = t->entry(oi).grad;
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dh;
        const detail::MatD& a = (*attn)[static_cast<std::size_t>(h)];
        detail::MatD gh = detail::to_double(g.middleCols(c0, dh));
        detail::MatD vh = detail::to_double(t->val(vi).middleCols(c0, dh));
        if (t->needs(vi))
          t->grad_mut(vi).middleCols(c0, dh) += (a.transpose() * gh).cast<S>();
        if (t->needs(qi) || t->needs(ki)) {
          detail::MatD da = gh * vh.transpose();
          Eigen::VectorXd dot = (da.array() * a.array()).rowwise().sum();
          detail::MatD ds =
              (a.array() * (da.array().colwise() - dot.array())) * inv_scale;
          if (t->needs(qi)) {
            detail::MatD kh = detail::to_double(t->val(ki).middleCols(c0, dh));
            t->grad_mut(qi).middleCols(c0, dh) += (ds * kh).cast<S>();
          }
          if (t->needs(ki)) {
            detail::MatD qh = detail::to_double(t->val(qi).middleCols(c0, dh));
            t->grad_mut(ki).middleCols(c0, dh) += (ds.transpose() * qh).cast<S>();
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <typename S>
struct AdamState {
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  long step = 0;
  std::vector<Mat<S>> m, v;

  void init_like(const ParamStore<S>& store) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& e : store.entries) {
      m.push_back(Mat<S>::Zero(e.value.rows(), e.value.cols()));
      v.push_back(Mat<S>::Zero(e.value.rows(), e.value.cols()));
    }
  }
};

/// Standard Adam update with bias correction.
template <typename S>
void adam_step(ParamStore<S>& params, const GradBuffer<S>& grads, AdamState<S>& st, S lr) {
  if (st.m.size() != params.entries.size() || grads.g.size() != params.entries.size())
    throw ShapeError("adam_step: state/gradient size mismatch");
  st.step += 1;
  const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(st.beta1), st.step));
  const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(st.beta2), st.step));
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    Mat<S>& p = params.entries[i].value;
    const Mat<S>& g = grads.g[i];
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw ShapeError("adam_step: gradient shape mismatch at " + params.entries[i].name);
    st.m[i] = st.beta1 * st.m[i] + (S(1) - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (S(1) - st.beta2) * g.cwiseProduct(g);
    const Mat<S> m_hat = st.m[i] / bc1;
    const Mat<S> v_hat = st.v[i] / bc2;
    p.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + st.eps);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

/// Central-difference check of reverse-mode gradients. `f` must be a pure
/// function of `inputs`: called with a fresh tape and one leaf per input, it
/// returns the scalar loss Var. Returns the max relative error over all
/// input coordinates with denominator max(|analytic|, |numeric|, 1e-8).
/// Meaningful in double precision only.
template <typename F>
double check_gradients(F&& f, std::vector<Mat<double>> inputs, double h = 1e-6) {
  auto eval = [&](bool want_grads, std::vector<Mat<double>>* grads_out) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& m : inputs)
      leaves.push_back(want_grads ? tape.input(m) : tape.constant(m));
    Var<double> loss = f(tape, leaves);
    const double value = loss.scalar();
    if (want_grads) {
      tape.backward(loss);
      grads_out->clear();
      for (const auto& leaf : leaves) grads_out->push_back(tape.grad(leaf));
    }
    return value;
  };

  std::vector<Mat<double>> analytic;
  eval(true, &analytic);

  double max_rel = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
      for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
        const double saved = inputs[i](r, c);
        inputs[i](r, c) = saved + h;
        const double fp = eval(false, nullptr);
        inputs[i](r, c) = saved - h;
        const double fm = eval(false, nullptr);
        inputs[i](r, c) = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[i](r, c);
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Initialization helpers
// ---------------------------------------------------------------------------

/// Glorot/Xavier uniform for a linear map consuming `rows`-dim inputs.
template <typename S>
Mat<S> xavier_uniform(Eigen::Index rows, Eigen::Index cols, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat<S> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      m(r, c) = static_cast<S>((2.0 * rng.next_double() - 1.0) * limit);
  return m;
}

}  // namespace emc2net::ad
