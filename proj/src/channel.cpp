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

#include "emc2net/channel.hpp"

#include <cmath>
#include <numbers>

namespace emc2net {

namespace {
constexpr double kPi = std::numbers::pi;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}
}  // namespace

void ChannelConfig::validate() const {
  if (path_delays_s.size() != path_gains_db.size())
    throw ConfigError("channel: delays and gains must have equal length");
  if (k_factor < 0.0) throw ConfigError("channel: k_factor must be >= 0");
  if (tap_count < 1) throw ConfigError("channel: tap_count must be >= 1");
  double prev = -1.0;
  for (double d : path_delays_s) {
    if (d < 0.0 || d <= prev)
      throw ConfigError("channel: path delays must be non-negative ascending");
    prev = d;
  }
  if (kind != ChannelKind::AWGN_PO) {
    if (path_delays_s.empty()) throw ConfigError("channel: fading needs >= 1 path");
    const double max_delay = path_delays_s.back() * sample_rate_hz;
    // Leave room for the interpolation kernel to decay on both sides.
    if (static_cast<double>(tap_count) < max_delay + 2.0)
      throw ConfigError("channel: tap_count too small for the longest path delay");
  }
}

std::vector<VecXd> fractional_delay_kernels(const ChannelConfig& cfg) {
  std::vector<VecXd> kernels;
  kernels.reserve(cfg.path_delays_s.size());
  const double half_width = static_cast<double>(cfg.tap_count) / 2.0;
  for (double delay_s : cfg.path_delays_s) {
    const double tau = delay_s * cfg.sample_rate_hz;  // in samples
    VecXd w = VecXd::Zero(cfg.tap_count);
    for (int n = 0; n < cfg.tap_count; ++n) {
      const double d = static_cast<double>(n) - tau;
      if (std::abs(d) >= half_width) continue;
      const double hann = 0.5 + 0.5 * std::cos(kPi * d / half_width);
      w[n] = sinc(d) * hann;
    }
    const double e = w.squaredNorm();
    if (e <= 0.0) throw ConfigError("channel: delay falls outside the tap grid");
    w /= std::sqrt(e);  // unit energy per path keeps total power exact
    kernels.push_back(std::move(w));
  }
  return kernels;
}

FadingRealization realize_fading(const ChannelConfig& cfg, RngStream& rng) {
  if (cfg.kind == ChannelKind::AWGN_PO)
    throw ShapeError("realize_fading: AWGN_PO has no fading taps");
  cfg.validate();

  // Relative path powers, normalized to total 1.
  VecXd powers(static_cast<Eigen::Index>(cfg.path_gains_db.size()));
  for (Eigen::Index i = 0; i < powers.size(); ++i)
    powers[i] = std::pow(10.0, cfg.path_gains_db[static_cast<std::size_t>(i)] / 10.0);
  powers /= powers.sum();

  const auto kernels = fractional_delay_kernels(cfg);

  CVec taps = CVec::Zero(cfg.tap_count);
  for (std::size_t p = 0; p < kernels.size(); ++p) {
    auto [gr, gi] = rng.next_gaussian_pair();
    cplx gain;
    const bool los = (cfg.kind == ChannelKind::RICIAN) && p == 0 && cfg.k_factor > 0.0;
    if (los) {
      const double k = cfg.k_factor;
      const double phi = 2.0 * kPi * rng.next_double();
      gain = std::sqrt(k / (k + 1.0)) * std::polar(1.0, phi) +
             std::sqrt(1.0 / (k + 1.0)) * cplx(gr, gi) / std::sqrt(2.0);
    } else {
      gain = cplx(gr, gi) / std::sqrt(2.0);  // CN(0,1)
    }
    gain *= std::sqrt(powers[static_cast<Eigen::Index>(p)]);
    for (int n = 0; n < cfg.tap_count; ++n) taps[n] += gain * kernels[p][n];
  }
  return FadingRealization{std::move(taps)};
}

CVec apply_multipath(const CVec& x, const FadingRealization& h) {
  if (x.size() == 0) throw ShapeError("apply_multipath: empty input");
  const Eigen::Index n = x.size();
  const Eigen::Index t = h.taps.size();
  CVec y = CVec::Zero(n + t - 1);
  for (Eigen::Index k = 0; k < t; ++k) {
    if (h.taps[k] == cplx(0.0, 0.0)) continue;
    y.segment(k, n) += h.taps[k] * x;
  }
  return y;
}

CVec apply_awgn(const CVec& x, double snr_db, RngStream& rng, CVec* noise_out) {
  if (!std::isfinite(snr_db)) throw ShapeError("apply_awgn: snr_db must be finite");
  const double signal_power = x.size() > 0 ? x.squaredNorm() / static_cast<double>(x.size()) : 0.0;
  const double noise_var = signal_power / std::pow(10.0, snr_db / 10.0);
  const double sigma_dim = std::sqrt(noise_var / 2.0);
  CVec noise(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    auto [a, b] = rng.next_gaussian_pair();
    noise[i] = cplx(a * sigma_dim, b * sigma_dim);
  }
  if (noise_out != nullptr) *noise_out = noise;
  return x + noise;
}

CVec apply_phase_offset(const CVec& x, double theta) {
  return x * std::polar(1.0, theta);
}

CVec trim_transient(const CVec& y, Eigen::Index length, Eigen::Index discard) {
  if (discard < 0 || length < 0 || y.size() < discard + length)
    throw ShapeError("trim_transient: input shorter than discard + length");
  return y.segment(discard, length);
}

Eigen::Index default_discard(int channel_taps, int span_symbols, int sps) {
  const Eigen::Index raw = (channel_taps - 1) + span_symbols * sps / 2;
  const Eigen::Index rem = raw % sps;
  return rem == 0 ? raw : raw + (sps - rem);
}

}  // namespace emc2net
