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

#include "emc2net/pulse.hpp"

#include <cmath>
#include <numbers>

namespace emc2net {

namespace {
constexpr double kPi = std::numbers::pi;
}

PulseShape rrc_taps(double rolloff, int span_symbols, int sps) {
  if (!(rolloff > 0.0 && rolloff <= 1.0))
    throw ShapeError("rolloff must be in (0, 1]");
  if (span_symbols <= 0 || span_symbols % 2 != 0)
    throw ShapeError("span_symbols must be positive and even");
  if (sps < 1) throw ShapeError("sps must be >= 1");

  const int count = span_symbols * sps + 1;
  const int center = span_symbols * sps / 2;
  const double b = rolloff;

  PulseShape ps;
  ps.rolloff = rolloff;
  ps.span_symbols = span_symbols;
  ps.sps = sps;
  ps.taps.resize(count);

  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k - center) / sps;  // in symbols
    double v;
    if (t == 0.0) {
      v = 1.0 + b * (4.0 / kPi - 1.0);
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-12) {
      const double a = kPi / (4.0 * b);
      v = (b / std::sqrt(2.0)) *
          ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
    } else {
      const double num =
          std::sin(kPi * t * (1.0 - b)) + 4.0 * b * t * std::cos(kPi * t * (1.0 + b));
      const double den = kPi * t * (1.0 - 16.0 * b * b * t * t);
      v = num / den;
    }
    ps.taps[k] = v;
  }

  ps.taps /= std::sqrt(ps.taps.squaredNorm());
  return ps;
}

CVec convolve_same(const CVec& x, const VecXd& taps) {
  const Eigen::Index n = x.size();
  const Eigen::Index t = taps.size();
  const Eigen::Index center = (t - 1) / 2;
  CVec out = CVec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cplx acc(0.0, 0.0);
    const Eigen::Index k_lo = std::max<Eigen::Index>(0, i + center - n + 1);
    const Eigen::Index k_hi = std::min<Eigen::Index>(t - 1, i + center);
    for (Eigen::Index k = k_lo; k <= k_hi; ++k) acc += taps[k] * x[i + center - k];
    out[i] = acc;
  }
  return out;
}

CVec pulse_shape(const CVec& symbols, const PulseShape& ps) {
  if (symbols.size() == 0) throw ShapeError("pulse_shape: empty symbol sequence");
  const Eigen::Index n = symbols.size() * ps.sps;
  CVec up = CVec::Zero(n);
  for (Eigen::Index k = 0; k < symbols.size(); ++k) up[k * ps.sps] = symbols[k];
  CVec shaped = convolve_same(up, ps.taps);
  shaped *= std::sqrt(static_cast<double>(ps.sps));
  return shaped;
}

CVec matched_filter_decimate(const CVec& x, const PulseShape& ps) {
  if (x.size() % ps.sps != 0)
    throw ShapeError("matched_filter_decimate: length not divisible by sps");
  CVec filtered = convolve_same(x, ps.taps);
  const Eigen::Index n = x.size() / ps.sps;
  const double gain = 1.0 / std::sqrt(static_cast<double>(ps.sps));
  CVec out(n);
  for (Eigen::Index k = 0; k < n; ++k) out[k] = filtered[k * ps.sps] * gain;
  return out;
}

double mean_power(const CVec& x) {
  if (x.size() == 0) return 0.0;
  return x.squaredNorm() / static_cast<double>(x.size());
}

CVec unit_power_normalize(const CVec& x) {
  const double p = mean_power(x);
  if (p <= 0.0) throw NumericError("unit_power_normalize: zero-power input");
  return x / std::sqrt(p);
}

}  // namespace emc2net
