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

#include <string>

#include "emc2net/autodiff.hpp"
#include "emc2net/types.hpp"

// Permutation-invariant classifier over constellation point sets:
// ISAB -> ISAB -> dropout -> PMA -> dropout -> linear -> softmax.
// MAB(X, Y) = LN(H + rFF(H)) with H = LN(proj(X) + MHA(X, Y, Y)); rFF is a
// single affine map followed by ReLU. ISAB(X) = MAB(X, MAB(I, X)) with m
// learned inducing rows; PMA(Z) = MAB(seed, rFF(Z)) with one learned seed.

namespace emc2net {

struct ClassifierConfig {
  int input_dim = 2;
  int hidden_dim = 128;
  int heads = 4;
  int inducing = 64;
  int classes = 8;
  double dropout = 0.5;
};

struct MabIds {
  int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1;
  int wo = -1, bo = -1;
  int ln0_g = -1, ln0_b = -1, ln1_g = -1, ln1_b = -1;
};

template <typename S>
struct ClassifierNet {
  ClassifierConfig cfg;
  ad::ParamStore<S> store;
  int inducing1 = -1, inducing2 = -1;
  MabIds isab1_in, isab1_out;  // MAB(I, X) and MAB(X, H)
  MabIds isab2_in, isab2_out;
  int pma_ff_w = -1, pma_ff_b = -1;
  int pma_seed = -1;
  MabIds pma_mab;
  int head_w = -1, head_b = -1;
};

template <typename S>
MabIds make_mab_params(ad::ParamStore<S>& store, const std::string& prefix, int dx,
                       int dy, int d, RngStream& rng) {
  MabIds ids;
  ids.wq = store.add(prefix + ".wq", ad::xavier_uniform<S>(dx, d, rng));
  ids.bq = store.add(prefix + ".bq", Mat<S>::Zero(1, d));
  ids.wk = store.add(prefix + ".wk", ad::xavier_uniform<S>(dy, d, rng));
  ids.bk = store.add(prefix + ".bk", Mat<S>::Zero(1, d));
  ids.wv = store.add(prefix + ".wv", ad::xavier_uniform<S>(dy, d, rng));
  ids.bv = store.add(prefix + ".bv", Mat<S>::Zero(1, d));
  ids.wo = store.add(prefix + ".wo", ad::xavier_uniform<S>(d, d, rng));
  ids.bo = store.add(prefix + ".bo", Mat<S>::Zero(1, d));
  ids.ln0_g = store.add(prefix + ".ln0_g", Mat<S>::Ones(1, d));
  ids.ln0_b = store.add(prefix + ".ln0_b", Mat<S>::Zero(1, d));
  ids.ln1_g = store.add(prefix + ".ln1_g", Mat<S>::Ones(1, d));
  ids.ln1_b = store.add(prefix + ".ln1_b", Mat<S>::Zero(1, d));
  return ids;
}

template <typename S>
ClassifierNet<S> make_classifier(const ClassifierConfig& cfg, RngStream& rng) {
  if (cfg.hidden_dim % cfg.heads != 0)
    throw ConfigError("classifier hidden_dim must divide by heads");
  if (cfg.inducing < 1 || cfg.classes < 2)
    throw ConfigError("classifier needs inducing points and >= 2 classes");
  ClassifierNet<S> net;
  net.cfg = cfg;
  auto& st = net.store;
  const int d = cfg.hidden_dim;

  net.inducing1 = st.add("isab1.inducing", ad::xavier_uniform<S>(cfg.inducing, d, rng));
  net.isab1_in = make_mab_params(st, "isab1.mab_in", d, cfg.input_dim, d, rng);
  net.isab1_out = make_mab_params(st, "isab1.mab_out", cfg.input_dim, d, d, rng);

  net.inducing2 = st.add("isab2.inducing", ad::xavier_uniform<S>(cfg.inducing, d, rng));
  net.isab2_in = make_mab_params(st, "isab2.mab_in", d, d, d, rng);
  net.isab2_out = make_mab_params(st, "isab2.mab_out", d, d, d, rng);

  net.pma_ff_w = st.add("pma.ff_w", ad::xavier_uniform<S>(d, d, rng));
  net.pma_ff_b = st.add("pma.ff_b", Mat<S>::Zero(1, d));
  net.pma_seed = st.add("pma.seed", ad::xavier_uniform<S>(1, d, rng));
  net.pma_mab = make_mab_params(st, "pma.mab", d, d, d, rng);

  net.head_w = st.add("head.w", ad::xavier_uniform<S>(d, cfg.classes, rng));
  net.head_b = st.add("head.b", Mat<S>::Zero(1, cfg.classes));
  return net;
}

/// Multihead attention block. X supplies queries (and the residual path
/// through its projection), Y supplies keys and values.
template <typename S>
ad::Var<S> mab(ad::Tape<S>& t, ad::Var<S> x, ad::Var<S> y, ClassifierNet<S>& net,
               const MabIds& ids) {
  auto& st = net.store;
  ad::Var<S> q = ad::add_rowvec(ad::matmul(x, t.param(st, ids.wq)), t.param(st, ids.bq));
  ad::Var<S> k = ad::add_rowvec(ad::matmul(y, t.param(st, ids.wk)), t.param(st, ids.bk));
  ad::Var<S> v = ad::add_rowvec(ad::matmul(y, t.param(st, ids.wv)), t.param(st, ids.bv));
  ad::Var<S> o = ad::attend(q, k, v, net.cfg.heads);

  ad::Var<S> h = ad::layer_norm_rows(ad::add(q, o));
  h = ad::add_rowvec(ad::mul_rowvec(h, t.param(st, ids.ln0_g)), t.param(st, ids.ln0_b));

  ad::Var<S> ff =
      ad::relu(ad::add_rowvec(ad::matmul(h, t.param(st, ids.wo)), t.param(st, ids.bo)));
  ad::Var<S> out = ad::layer_norm_rows(ad::add(h, ff));
  out = ad::add_rowvec(ad::mul_rowvec(out, t.param(st, ids.ln1_g)), t.param(st, ids.ln1_b));
  return out;
}

/// ISAB(X) = MAB(X, MAB(I, X)): attention routed through the inducing rows,
/// linear in the set size.
template <typename S>
ad::Var<S> isab(ad::Tape<S>& t, ad::Var<S> x, ClassifierNet<S>& net, int inducing_id,
                const MabIds& in_ids, const MabIds& out_ids) {
  ad::Var<S> ind = t.param(net.store, inducing_id);
  ad::Var<S> h = mab(t, ind, x, net, in_ids);
  return mab(t, x, h, net, out_ids);
}

/// PMA(Z) = MAB(seed, rFF(Z)): pools any number of rows into one vector.
template <typename S>
ad::Var<S> pma(ad::Tape<S>& t, ad::Var<S> z, ClassifierNet<S>& net) {
  auto& st = net.store;
  ad::Var<S> zf =
      ad::relu(ad::add_rowvec(ad::matmul(z, t.param(st, net.pma_ff_w)),
                              t.param(st, net.pma_ff_b)));
  ad::Var<S> seed = t.param(st, net.pma_seed);
  return mab(t, seed, zf, net, net.pma_mab);
}

template <typename S>
struct ClassifierOutput {
  ad::Var<S> logits;  // 1 x C
  ad::Var<S> probs;   // 1 x C, softmax of logits
};

/// Full classifier over an n x 2 point set. Dropout (before PMA and before
/// the linear head) draws masks from `rng` and is active only when train is
/// set.
template <typename S>
ClassifierOutput<S> classify(ad::Tape<S>& t, ad::Var<S> points, ClassifierNet<S>& net,
                             bool train, RngStream& rng) {
  if (points.rows() < 1 || points.cols() != net.cfg.input_dim)
    throw ShapeError("classify: expected an n x input_dim point set");
  ad::Var<S> x = isab(t, points, net, net.inducing1, net.isab1_in, net.isab1_out);
  x = isab(t, x, net, net.inducing2, net.isab2_in, net.isab2_out);
  x = ad::dropout(x, net.cfg.dropout, rng, train);
  ad::Var<S> pooled = pma(t, x, net);
  pooled = ad::dropout(pooled, net.cfg.dropout, rng, train);
  ad::Var<S> logits = ad::add_rowvec(ad::matmul(pooled, t.param(net.store, net.head_w)),
                                     t.param(net.store, net.head_b));
  return ClassifierOutput<S>{logits, ad::softmax_rows(logits)};
}

}  // namespace emc2net
