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

#include <cstdint>
#include <string>
#include <vector>

#include "emc2net/types.hpp"

namespace emc2net {

/// The eight linear modulation alphabets, in canonical (class index) order.
enum class ModulationType : std::uint8_t {
  BPSK = 0,
  QPSK = 1,
  PSK8 = 2,
  QAM16 = 3,
  QAM32 = 4,
  QAM64 = 5,
  QAM128 = 6,
  QAM256 = 7,
};

constexpr int kModulationCount = 8;

int modulation_order(ModulationType mt);
int bits_per_symbol(ModulationType mt);
std::string modulation_name(ModulationType mt);
ModulationType modulation_from_name(const std::string& name);  // throws ConfigError

/// Unit-power reference alphabet with its CMA dispersion constant.
///
/// points[i] is the symbol for bit pattern i (MSB-first within a symbol).
/// Square QAMs use per-axis Gray labels; cross QAMs (32/128) use a Gray code
/// over the point enumeration order, which keeps bit<->symbol a bijection.
struct ConstellationSpec {
  ModulationType mt;
  std::vector<cplx> points;
  double r2 = 0.0;  // E{|z|^4} / E{|z|^2} of the unit-power alphabet
};

/// Reference alphabet for `mt`. Square grids for 16/64/256-QAM; 32/128-QAM
/// are cross-shaped (odd-integer super-grid minus corner blocks).
const ConstellationSpec& constellation_points(ModulationType mt);

/// Dispersion constant of the unit-power alphabet.
double reference_r2(ModulationType mt);

/// Maps a bit sequence onto constellation symbols, MSB first per symbol.
/// Bit count must divide evenly into symbols.
CVec modulate(const std::vector<std::uint8_t>& bits, ModulationType mt);

/// Nearest-point demapping back to bit patterns (hard decision).
std::vector<std::uint8_t> demodulate_nearest(const CVec& symbols, ModulationType mt);

/// Index of the constellation point closest to z.
int nearest_point_index(const ConstellationSpec& spec, cplx z);

}  // namespace emc2net
