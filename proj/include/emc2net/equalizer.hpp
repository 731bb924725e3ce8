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

#include "emc2net/autodiff.hpp"
#include "emc2net/pulse.hpp"
#include "emc2net/types.hpp"

// The learnable receive front end: two residual Conv1D blocks over the I/Q
// channel pair, then the fixed matched filter, symbol-rate decimation,
// unit-power normalization, and reinterpretation as a 2-D point set.
// The matched filter and decimation factor are known constants and carry no
// parameters.

namespace emc2net {

struct EqualizerConfig {
  int kernel_size = 65;  // odd
};

/// Residual block parameter ids within the store.
struct RbIds {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

template <typename S>
struct EqualizerNet {
  EqualizerConfig cfg;
  ad::ParamStore<S> store;
  RbIds rb1, rb2;
};

/// Both blocks start as the identity map: the first convolution is a
/// centered delta plus 1e-3 noise, the second is zero, so the untrained
/// equalizer reproduces the classical matched-filter front end exactly.
template <typename S>
EqualizerNet<S> make_equalizer(const EqualizerConfig& cfg, RngStream& rng) {
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
    throw ConfigError("equalizer kernel size must be odd");
  EqualizerNet<S> net;
  net.cfg = cfg;
  const int k = cfg.kernel_size;
  const int center = (k - 1) / 2;

  auto make_rb = [&](const std::string& prefix) {
    RbIds ids;
    Mat<S> w1 = Mat<S>::Zero(2, 2 * k);
    for (Eigen::Index i = 0; i < w1.rows(); ++i)
      for (Eigen::Index j = 0; j < w1.cols(); ++j)
        w1(i, j) = static_cast<S>(rng.next_gaussian() * 1e-3);
    w1(0, 0 * k + center) += S(1);
    w1(1, 1 * k + center) += S(1);
    ids.w1 = net.store.add(prefix + ".w1", std::move(w1));
    ids.b1 = net.store.add(prefix + ".b1", Mat<S>::Zero(2, 1));
    ids.w2 = net.store.add(prefix + ".w2", Mat<S>::Zero(2, 2 * k));
    ids.b2 = net.store.add(prefix + ".b2", Mat<S>::Zero(2, 1));
    return ids;
  };
  net.rb1 = make_rb("rb1");
  net.rb2 = make_rb("rb2");
  return net;
}

/// out = x + conv(relu(conv(x))), "same" padding, channel count 2.
template <typename S>
ad::Var<S> residual_block(ad::Tape<S>& t, ad::Var<S> x, EqualizerNet<S>& net,
                          const RbIds& ids) {
  if (x.rows() != 2) throw ShapeError("residual_block: expected 2 I/Q channels");
  const int k = net.cfg.kernel_size;
  ad::Var<S> h = ad::conv1d(x, t.param(net.store, ids.w1), t.param(net.store, ids.b1), k);
  h = ad::relu(h);
  h = ad::conv1d(h, t.param(net.store, ids.w2), t.param(net.store, ids.b2), k);
  return ad::add(x, h);
}

/// Complex frame samples as a 2 x L real matrix (row 0 = I, row 1 = Q).
template <typename S>
Mat<S> frame_to_channels(const CVec& samples) {
  Mat<S> m(2, samples.size());
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    m(0, i) = static_cast<S>(samples[i].real());
    m(1, i) = static_cast<S>(samples[i].imag());
  }
  return m;
}

/// Sequential-signal-to-constellation: 2 x n channels become an n x 2 point
/// set, one (re, im) row per symbol. Pure reinterpretation.
template <typename S>
ad::Var<S> sig2con(ad::Var<S> x) {
  if (x.rows() != 2) throw ShapeError("sig2con: expected a 2 x n signal");
  return ad::transpose(x);
}

/// Full equalizer: RB -> RB -> zero-mean -> matched filter -> decimate ->
/// unit-power normalize -> point set. Output is (L / sps) x 2.
template <typename S>
ad::Var<S> equalize(ad::Tape<S>& t, ad::Var<S> y, EqualizerNet<S>& net,
                    const PulseShape& ps) {
  if (y.cols() % ps.sps != 0)
    throw ShapeError("equalize: frame length not divisible by sps");
  ad::Var<S> h = residual_block(t, y, net, net.rb1);
  h = residual_block(t, h, net, net.rb2);
  h = ad::zero_mean_rows(h);
  h = ad::fixed_filter_rows(h, ps.taps);
  h = ad::downsample_cols(h, ps.sps, 0);
  h = ad::scale(h, static_cast<S>(1.0 / std::sqrt(static_cast<double>(ps.sps))));
  h = ad::unit_power_norm(h);
  return sig2con(h);
}

/// The fixed classical front end (no residual blocks): matched filter,
/// decimation, normalization, point set. Used for Phase-1 inputs, baselines,
/// and as the reference the identity-initialized equalizer must reproduce.
template <typename S>
Mat<S> front_end_points(const CVec& samples, const PulseShape& ps) {
  const CVec sym = unit_power_normalize(matched_filter_decimate(samples, ps));
  Mat<S> pts(sym.size(), 2);
  for (Eigen::Index i = 0; i < sym.size(); ++i) {
    pts(i, 0) = static_cast<S>(sym[i].real());
    pts(i, 1) = static_cast<S>(sym[i].imag());
  }
  return pts;
}

}  // namespace emc2net
