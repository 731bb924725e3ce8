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

#include <array>
#include <string>
#include <vector>

#include "emc2net/channel.hpp"
#include "emc2net/modulation.hpp"
#include "emc2net/pulse.hpp"
#include "emc2net/rng.hpp"
#include "emc2net/types.hpp"

namespace emc2net {

/// One labeled received frame. Samples were unit-power normalized in double
/// precision at generation time, then quantized to binary32 I/Q for storage;
/// in-memory values reproduce the stored binary32 payload exactly.
struct Frame {
  CVec samples;             // length L
  ModulationType label;
  float snr_db = 0.0f;
  float theta = 0.0f;       // phase offset for AWGN_PO frames, 0 otherwise
  ChannelKind channel_kind = ChannelKind::AWGN_PO;
  std::uint32_t seed_index = 0;  // per-class frame index used for substream derivation
};

/// Generation metadata. Labels in the file are ModulationType values, so a
/// dataset is self-describing: the class set is the sorted set of distinct
/// labels present.
struct DatasetHeader {
  std::uint16_t version = 1;
  std::vector<ModulationType> classes;      // ascending ModulationType order
  std::uint32_t frame_length = 0;           // L
  std::uint16_t sps = 0;                    // N
  std::uint32_t frames_per_class = 0;
  ChannelKind channel_kind = ChannelKind::AWGN_PO;
  std::vector<double> snr_list_db;          // cycled per frame index
  std::uint64_t seed = 0;

  std::uint16_t class_count() const { return static_cast<std::uint16_t>(classes.size()); }
  std::uint32_t frame_count() const { return frames_per_class * class_count(); }
};

struct Dataset {
  DatasetHeader header;
  std::vector<Frame> frames;  // class-major order: class 0 frames, class 1, ...

  int class_index_of(ModulationType mt) const;  // throws if absent
};

/// Phase-1 noise curriculum: the admissible SNR set at epoch e is
/// {start - k*step : 0 <= k <= floor(e / epochs_per_step)} clipped at floor.
struct CurriculumSchedule {
  double start_snr_db = 28.0;
  double step_db = 2.0;
  int epochs_per_step = 10;
  double floor_snr_db = 10.0;

  std::vector<double> admissible_snrs(int epoch) const;
};

/// Full synthesis pipeline, one frame per (class, index) substream:
/// bits -> modulate -> normalize -> pulse shape -> fading or PO -> AWGN ->
/// trim -> normalize. Deterministic given header.seed.
Dataset generate_dataset(const DatasetHeader& header, const ChannelConfig& channel,
                         const PulseShape& ps);

/// Stratified split into train/validation/test index lists over frame
/// indices. Ratios must be positive and sum to 1.
struct SplitIndices {
  std::vector<std::uint32_t> train, val, test;
};
SplitIndices split_dataset(const Dataset& ds, const std::array<double, 3>& ratios,
                           RngStream& rng);

/// Frames from `train` whose SNR is admissible at `epoch`.
std::vector<std::uint32_t> curriculum_subset(const Dataset& ds,
                                             const std::vector<std::uint32_t>& train,
                                             int epoch, const CurriculumSchedule& sched);

/// Binary dataset file, all little-endian:
///   magic "EMC2" | u16 version | u16 C | u32 L | u16 N | u8 channel_kind |
///   u64 seed | u32 frame_count |
///   per frame: u8 label, f32 snr_db, f32 theta_or_zero,
///              L x 2 f32 (I then Q interleaved per sample).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace emc2net
