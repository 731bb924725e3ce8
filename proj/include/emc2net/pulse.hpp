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

#include "emc2net/types.hpp"

namespace emc2net {

/// Root-raised-cosine shaping filter.
///
/// taps are unit-energy (sum of squares = 1) and symmetric; tap count is
/// span_symbols * sps + 1 with the peak at the center index.
struct PulseShape {
  double rolloff = 0.0;
  int span_symbols = 0;
  int sps = 0;  // samples per symbol (the upsampling/decimation factor)
  VecXd taps;
};

/// RRC impulse response sampled over `span_symbols` at `sps` samples/symbol.
/// The t=0 and t=+-1/(4*rolloff) singularities use their analytic limits.
/// Requires 0 < rolloff <= 1, even span, sps >= 1.
PulseShape rrc_taps(double rolloff, int span_symbols, int sps);

/// Zero-stuff by sps, convolve "same" with the taps, and scale by sqrt(sps)
/// so mean sample power matches mean symbol power. Output length is
/// symbols.size() * sps; symbol peaks land on sample indices k * sps.
CVec pulse_shape(const CVec& symbols, const PulseShape& ps);

/// "Same" convolution with the taps followed by decimation at phase 0 and a
/// 1/sqrt(sps) gain, undoing the pulse_shape scaling. Because both filters
/// are center-aligned their combined group delay is zero, so phase 0 is the
/// eye-opening sampling instant. Input length must divide by sps.
CVec matched_filter_decimate(const CVec& x, const PulseShape& ps);

/// x / sqrt(mean |x|^2). Rejects all-zero input.
CVec unit_power_normalize(const CVec& x);

/// Center-aligned "same" convolution of a complex sequence with real taps.
CVec convolve_same(const CVec& x, const VecXd& taps);

double mean_power(const CVec& x);

}  // namespace emc2net
