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

#include <vector>

#include "emc2net/rng.hpp"
#include "emc2net/types.hpp"

namespace emc2net {

enum class ChannelKind : std::uint8_t {
  AWGN_PO = 0,  // random phase offset instead of fading
  RICIAN = 1,
  RAYLEIGH = 2,
};

/// Multipath fading generator settings. Paths are mapped onto a fixed tap
/// grid by Hann-windowed sinc fractional-delay interpolation; gains are
/// normalized so the expected total channel power is exactly 1. The channel
/// is quasi-static: one realization per frame, no intra-frame variation.
struct ChannelConfig {
  ChannelKind kind = ChannelKind::RAYLEIGH;
  double sample_rate_hz = 200e3;
  std::vector<double> path_delays_s;    // ascending, non-negative
  std::vector<double> path_gains_db;    // same length as delays
  double k_factor = 0.0;                // Rician K; 0 degenerates to Rayleigh
  double max_doppler_hz = 4.0;          // retained metadata; see module docs
  int tap_count = 18;

  void validate() const;  // throws ConfigError on inconsistency
};

struct FadingRealization {
  CVec taps;  // length tap_count
};

/// Draws one quasi-static fading realization. Rician puts the line-of-sight
/// component (with a uniform random phase) on the first path.
FadingRealization realize_fading(const ChannelConfig& cfg, RngStream& rng);

/// Full linear convolution: output length = x.size() + taps - 1.
CVec apply_multipath(const CVec& x, const FadingRealization& h);

/// Adds circular complex Gaussian noise. The noise variance is
/// mean(|x|^2) / 10^(snr_db/10), i.e. SNR is referenced to the measured
/// power at the channel output. Returns the noisy signal; if noise_out is
/// non-null the drawn noise is stored for SNR bookkeeping. The unit draws do
/// not depend on snr_db (only the scale does), so sweeps over SNR share
/// noise directions under a common seed.
CVec apply_awgn(const CVec& x, double snr_db, RngStream& rng, CVec* noise_out = nullptr);

/// x * e^{j theta}.
CVec apply_phase_offset(const CVec& x, double theta);

/// y[discard .. discard+length). Rejects when y is too short.
CVec trim_transient(const CVec& y, Eigen::Index length, Eigen::Index discard);

/// Per-path interpolation kernels on the tap grid (unit energy per path).
/// Exposed for tests; realize_fading combines them with random path gains.
std::vector<VecXd> fractional_delay_kernels(const ChannelConfig& cfg);

/// Transient discard covering the channel tail plus the shaping filter's
/// half span, rounded up to a multiple of sps so symbol instants stay on
/// decimation phase 0.
Eigen::Index default_discard(int channel_taps, int span_symbols, int sps);

}  // namespace emc2net
