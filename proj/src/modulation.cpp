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

#include "emc2net/modulation.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace emc2net {

namespace {

std::uint32_t gray_encode(std::uint32_t n) { return n ^ (n >> 1); }

/// Builds an alphabet from integer-grid coordinates. Moments are taken on the
/// integer grid so r2 = n * S4 / S2^2 is computed from exact sums.
ConstellationSpec from_integer_grid(ModulationType mt,
                                    const std::vector<std::pair<int, int>>& grid,
                                    const std::vector<int>& label_of_point) {
  const std::size_t n = grid.size();
  double s2 = 0.0, s4 = 0.0;
  for (const auto& [a, b] : grid) {
    const double p = static_cast<double>(a) * a + static_cast<double>(b) * b;
    s2 += p;
    s4 += p * p;
  }
  const double scale = std::sqrt(static_cast<double>(n) / s2);

  ConstellationSpec spec;
  spec.mt = mt;
  spec.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [a, b] = grid[i];
    spec.points[static_cast<std::size_t>(label_of_point[i])] =
        cplx(a * scale, b * scale);
  }
  spec.r2 = s4 * static_cast<double>(n) / (s2 * s2);
  return spec;
}

/// Per-axis Gray labeling for an m x m square of odd coordinates
/// {-(m-1), ..., -1, 1, ..., m-1}.
ConstellationSpec make_square_qam(ModulationType mt, int m) {
  std::vector<std::pair<int, int>> grid;
  std::vector<int> labels;
  const int axis_bits = static_cast<int>(std::round(std::log2(m)));
  for (int i = 0; i < m; ++i) {
    for (int q = 0; q < m; ++q) {
      const int a = 2 * i - (m - 1);
      const int b = 2 * q - (m - 1);
      grid.emplace_back(a, b);
      const auto gi = gray_encode(static_cast<std::uint32_t>(i));
      const auto gq = gray_encode(static_cast<std::uint32_t>(q));
      labels.push_back(static_cast<int>((gi << axis_bits) | gq));
    }
  }
  return from_integer_grid(mt, grid, labels);
}

/// Cross QAM: odd-integer super-grid minus corner blocks. Labels are a Gray
/// code over the row-major enumeration of surviving points.
ConstellationSpec make_cross_qam(ModulationType mt, int m, int corner) {
  std::vector<std::pair<int, int>> grid;
  const int lim = m - 1;
  for (int i = 0; i < m; ++i) {
    for (int q = 0; q < m; ++q) {
      const int a = 2 * i - lim;
      const int b = 2 * q - lim;
      const bool in_corner = (std::abs(a) > lim - 2 * corner) &&
                             (std::abs(b) > lim - 2 * corner);
      if (!in_corner) grid.emplace_back(a, b);
    }
  }
  std::vector<int> labels(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    labels[i] = static_cast<int>(gray_encode(static_cast<std::uint32_t>(i)));
  return from_integer_grid(mt, grid, labels);
}

ConstellationSpec make_psk(ModulationType mt, int order) {
  ConstellationSpec spec;
  spec.mt = mt;
  spec.points.resize(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / order;
    // Gray label per phase index; QPSK/8PSK start at angle pi/order so points
    // sit between the axes, the usual convention.
    const double offset = (order > 2) ? std::numbers::pi / order : 0.0;
    const int label = static_cast<int>(gray_encode(static_cast<std::uint32_t>(k)));
    spec.points[static_cast<std::size_t>(label)] =
        std::polar(1.0, theta + offset);
  }
  spec.r2 = 1.0;  // unit modulus
  return spec;
}

ConstellationSpec make_spec(ModulationType mt) {
  switch (mt) {
    case ModulationType::BPSK: {
      ConstellationSpec spec;
      spec.mt = mt;
      spec.points = {cplx(1.0, 0.0), cplx(-1.0, 0.0)};  // bit 0 -> +1, 1 -> -1
      spec.r2 = 1.0;
      return spec;
    }
    case ModulationType::QPSK:
      return make_psk(mt, 4);
    case ModulationType::PSK8:
      return make_psk(mt, 8);
    case ModulationType::QAM16:
      return make_square_qam(mt, 4);
    case ModulationType::QAM32:
      return make_cross_qam(mt, 6, 1);  // 6x6 minus single corner points
    case ModulationType::QAM64:
      return make_square_qam(mt, 8);
    case ModulationType::QAM128:
      return make_cross_qam(mt, 12, 2);  // 12x12 minus 2x2 corner blocks
    case ModulationType::QAM256:
      return make_square_qam(mt, 16);
  }
  throw ShapeError("unknown modulation type");
}

const std::array<ConstellationSpec, kModulationCount>& all_specs() {
  static const std::array<ConstellationSpec, kModulationCount> specs = [] {
    std::array<ConstellationSpec, kModulationCount> s;
    for (int i = 0; i < kModulationCount; ++i)
      s[static_cast<std::size_t>(i)] = make_spec(static_cast<ModulationType>(i));
    return s;
  }();
  return specs;
}

}  // namespace

int modulation_order(ModulationType mt) {
  switch (mt) {
    case ModulationType::BPSK: return 2;
    case ModulationType::QPSK: return 4;
    case ModulationType::PSK8: return 8;
    case ModulationType::QAM16: return 16;
    case ModulationType::QAM32: return 32;
    case ModulationType::QAM64: return 64;
    case ModulationType::QAM128: return 128;
    case ModulationType::QAM256: return 256;
  }
  throw ShapeError("unknown modulation type");
}

int bits_per_symbol(ModulationType mt) {
  int order = modulation_order(mt);
  int bits = 0;
  while (order > 1) {
    order >>= 1;
    ++bits;
  }
  return bits;
}

std::string modulation_name(ModulationType mt) {
  switch (mt) {
    case ModulationType::BPSK: return "BPSK";
    case ModulationType::QPSK: return "QPSK";
    case ModulationType::PSK8: return "8PSK";
    case ModulationType::QAM16: return "16QAM";
    case ModulationType::QAM32: return "32QAM";
    case ModulationType::QAM64: return "64QAM";
    case ModulationType::QAM128: return "128QAM";
    case ModulationType::QAM256: return "256QAM";
  }
  throw ShapeError("unknown modulation type");
}

ModulationType modulation_from_name(const std::string& name) {
  for (int i = 0; i < kModulationCount; ++i) {
    const auto mt = static_cast<ModulationType>(i);
    if (modulation_name(mt) == name) return mt;
  }
  throw ConfigError("unknown modulation name: " + name);
}

const ConstellationSpec& constellation_points(ModulationType mt) {
  return all_specs()[static_cast<std::size_t>(mt)];
}

double reference_r2(ModulationType mt) { return constellation_points(mt).r2; }

CVec modulate(const std::vector<std::uint8_t>& bits, ModulationType mt) {
  const int bps = bits_per_symbol(mt);
  if (bits.size() % static_cast<std::size_t>(bps) != 0)
    throw ShapeError("bit count " + std::to_string(bits.size()) +
                     " is not divisible by bits/symbol " + std::to_string(bps));
  const auto& spec = constellation_points(mt);
  const std::size_t n = bits.size() / static_cast<std::size_t>(bps);
  CVec out(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    std::uint32_t label = 0;
    for (int b = 0; b < bps; ++b)
      label = (label << 1) | (bits[s * static_cast<std::size_t>(bps) +
                                   static_cast<std::size_t>(b)] & 1u);
    out[static_cast<Eigen::Index>(s)] = spec.points[label];
  }
  return out;
}

int nearest_point_index(const ConstellationSpec& spec, cplx z) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spec.points.size(); ++i) {
    const double d = std::norm(z - spec.points[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<std::uint8_t> demodulate_nearest(const CVec& symbols, ModulationType mt) {
  const auto& spec = constellation_points(mt);
  const int bps = bits_per_symbol(mt);
  std::vector<std::uint8_t> bits;
  bits.reserve(static_cast<std::size_t>(symbols.size() * bps));
  for (Eigen::Index s = 0; s < symbols.size(); ++s) {
    const auto label = static_cast<std::uint32_t>(nearest_point_index(spec, symbols[s]));
    for (int b = bps - 1; b >= 0; --b)
      bits.push_back(static_cast<std::uint8_t>((label >> b) & 1u));
  }
  return bits;
}

}  // namespace emc2net
