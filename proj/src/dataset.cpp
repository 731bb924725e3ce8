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

#include "emc2net/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

#include "emc2net/detail/binio.hpp"

namespace emc2net {

using binio::read_le;
using binio::write_le;

namespace {

constexpr char kMagic[4] = {'E', 'M', 'C', '2'};

// Substream tags for the per-frame draw schedule.
constexpr std::uint64_t kTagFrame = 0x4652414Dull;  // "FRAM"
constexpr std::uint64_t kTagSplit = 0x53504C54ull;  // "SPLT"

void validate_generation_config(const DatasetHeader& h, const ChannelConfig& c,
                                const PulseShape& ps) {
  if (h.classes.empty()) throw ConfigError("dataset: empty class list");
  for (std::size_t i = 1; i < h.classes.size(); ++i)
    if (h.classes[i] <= h.classes[i - 1])
      throw ConfigError("dataset: classes must be strictly ascending");
  if (h.frame_length == 0 || h.sps == 0 || h.frame_length % h.sps != 0)
    throw ConfigError("dataset: frame_length must be a positive multiple of sps");
  if (h.frames_per_class == 0) throw ConfigError("dataset: frames_per_class == 0");
  if (h.snr_list_db.empty()) throw ConfigError("dataset: empty SNR list");
  if (h.channel_kind != c.kind) throw ConfigError("dataset: header/channel kind mismatch");
  if (ps.sps != static_cast<int>(h.sps)) throw ConfigError("dataset: pulse sps mismatch");
  if (c.kind != ChannelKind::AWGN_PO) c.validate();
}

}  // namespace

int Dataset::class_index_of(ModulationType mt) const {
  for (std::size_t i = 0; i < header.classes.size(); ++i)
    if (header.classes[i] == mt) return static_cast<int>(i);
  throw ShapeError("modulation type not present in dataset: " + modulation_name(mt));
}

std::vector<double> CurriculumSchedule::admissible_snrs(int epoch) const {
  if (epoch < 0) throw ShapeError("curriculum: epoch must be >= 0");
  if (step_db <= 0.0 || epochs_per_step <= 0 || start_snr_db < floor_snr_db)
    throw ConfigError("curriculum: invalid schedule");
  std::vector<double> snrs;
  const int added = epoch / epochs_per_step;
  for (int k = 0; k <= added; ++k) {
    const double s = start_snr_db - k * step_db;
    if (s < floor_snr_db - 1e-9) break;
    snrs.push_back(s);
  }
  return snrs;
}

Dataset generate_dataset(const DatasetHeader& header, const ChannelConfig& channel,
                         const PulseShape& ps) {
  validate_generation_config(header, channel, ps);

  const Eigen::Index L = header.frame_length;
  const int sps = header.sps;
  const Eigen::Index tx_symbols = 2 * L / sps;  // d = 2L before trimming
  const int ch_taps = channel.kind == ChannelKind::AWGN_PO ? 1 : channel.tap_count;
  const Eigen::Index discard = default_discard(ch_taps, ps.span_symbols, sps);

  Dataset ds;
  ds.header = header;
  ds.frames.reserve(header.frame_count());

  const RngStream root = RngStream(header.seed).derive(kTagFrame);

  for (ModulationType mt : header.classes) {
    const int bps = bits_per_symbol(mt);
    const RngStream class_stream = root.derive(static_cast<std::uint64_t>(mt));
    for (std::uint32_t f = 0; f < header.frames_per_class; ++f) {
      RngStream rng = class_stream.derive(f);

      std::vector<std::uint8_t> bits(static_cast<std::size_t>(tx_symbols) *
                                     static_cast<std::size_t>(bps));
      for (auto& b : bits) b = rng.next_bit() ? 1 : 0;

      CVec symbols = unit_power_normalize(modulate(bits, mt));
      CVec x = pulse_shape(symbols, ps);

      CVec y;
      float theta = 0.0f;
      if (channel.kind == ChannelKind::AWGN_PO) {
        const double th = 2.0 * std::numbers::pi * rng.next_double();
        theta = static_cast<float>(th);
        y = apply_phase_offset(x, th);
      } else {
        const FadingRealization h = realize_fading(channel, rng);
        y = apply_multipath(x, h);
      }

      const double snr =
          header.snr_list_db[f % static_cast<std::uint32_t>(header.snr_list_db.size())];
      y = apply_awgn(y, snr, rng);

      CVec trimmed = unit_power_normalize(trim_transient(y, L, discard));

      Frame frame;
      frame.samples.resize(L);
      for (Eigen::Index i = 0; i < L; ++i) {
        // Quantize to the storage precision so memory and file agree.
        frame.samples[i] = cplx(static_cast<float>(trimmed[i].real()),
                                static_cast<float>(trimmed[i].imag()));
      }
      frame.label = mt;
      frame.snr_db = static_cast<float>(snr);
      frame.theta = theta;
      frame.channel_kind = channel.kind;
      frame.seed_index = f;
      ds.frames.push_back(std::move(frame));
    }
  }
  return ds;
}

SplitIndices split_dataset(const Dataset& ds, const std::array<double, 3>& ratios,
                           RngStream& rng) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  for (double r : ratios)
    if (r < 0.0) throw ConfigError("split: ratios must be non-negative");
  if (ratios[0] <= 0.0) throw ConfigError("split: train ratio must be positive");
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");

  SplitIndices out;
  RngStream split_root = rng.derive(kTagSplit);
  for (std::size_t c = 0; c < ds.header.classes.size(); ++c) {
    std::vector<std::uint32_t> idx;
    for (std::uint32_t i = 0; i < ds.frames.size(); ++i)
      if (ds.frames[i].label == ds.header.classes[c]) idx.push_back(i);
    RngStream class_rng = split_root.derive(c);
    shuffle_stream(idx, class_rng);

    const auto n = static_cast<double>(idx.size());
    auto n_tr = static_cast<std::size_t>(std::llround(n * ratios[0]));
    auto n_val = static_cast<std::size_t>(std::llround(n * ratios[1]));
    n_tr = std::min(n_tr, idx.size());
    n_val = std::min(n_val, idx.size() - n_tr);

    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<long>(n_tr));
    out.val.insert(out.val.end(), idx.begin() + static_cast<long>(n_tr),
                   idx.begin() + static_cast<long>(n_tr + n_val));
    out.test.insert(out.test.end(), idx.begin() + static_cast<long>(n_tr + n_val), idx.end());
  }
  return out;
}

std::vector<std::uint32_t> curriculum_subset(const Dataset& ds,
                                             const std::vector<std::uint32_t>& train,
                                             int epoch, const CurriculumSchedule& sched) {
  const std::vector<double> snrs = sched.admissible_snrs(epoch);
  std::vector<std::uint32_t> subset;
  for (std::uint32_t i : train) {
    const double s = ds.frames[i].snr_db;
    for (double a : snrs) {
      if (std::abs(s - a) < 1e-3) {  // frame SNRs are binary32
        subset.push_back(i);
        break;
      }
    }
  }
  return subset;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);

  binio::write_raw(os, kMagic, 4);
  write_le<std::uint16_t>(os, ds.header.version);
  write_le<std::uint16_t>(os, ds.header.class_count());
  write_le<std::uint32_t>(os, ds.header.frame_length);
  write_le<std::uint16_t>(os, ds.header.sps);
  write_le<std::uint8_t>(os, static_cast<std::uint8_t>(ds.header.channel_kind));
  write_le<std::uint64_t>(os, ds.header.seed);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.frames.size()));

  for (const Frame& f : ds.frames) {
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(f.label));
    write_le<float>(os, f.snr_db);
    write_le<float>(os, f.theta);
    for (Eigen::Index i = 0; i < f.samples.size(); ++i) {
      write_le<float>(os, static_cast<float>(f.samples[i].real()));
      write_le<float>(os, static_cast<float>(f.samples[i].imag()));
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);

  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad dataset magic");

  Dataset ds;
  ds.header.version = read_le<std::uint16_t>(is);
  if (ds.header.version != 1)
    throw FormatError("unsupported dataset version " + std::to_string(ds.header.version));
  const auto class_count = read_le<std::uint16_t>(is);
  ds.header.frame_length = read_le<std::uint32_t>(is);
  ds.header.sps = read_le<std::uint16_t>(is);
  const auto kind_raw = read_le<std::uint8_t>(is);
  if (kind_raw > 2) throw FormatError("bad channel kind byte");
  ds.header.channel_kind = static_cast<ChannelKind>(kind_raw);
  ds.header.seed = read_le<std::uint64_t>(is);
  const auto frame_count = read_le<std::uint32_t>(is);

  if (class_count == 0 || frame_count % class_count != 0)
    throw FormatError("frame count does not divide by class count");
  if (ds.header.frame_length == 0 || ds.header.sps == 0 ||
      ds.header.frame_length % ds.header.sps != 0)
    throw FormatError("bad frame length / sps fields");

  std::set<std::uint8_t> labels_seen;
  std::set<double> snrs_seen;
  std::vector<std::uint32_t> per_class_counter(kModulationCount, 0);
  ds.frames.reserve(frame_count);
  for (std::uint32_t k = 0; k < frame_count; ++k) {
    Frame f;
    const auto label_raw = read_le<std::uint8_t>(is);
    if (label_raw >= kModulationCount) throw FormatError("bad label byte");
    f.label = static_cast<ModulationType>(label_raw);
    f.snr_db = read_le<float>(is);
    f.theta = read_le<float>(is);
    f.channel_kind = ds.header.channel_kind;
    f.seed_index = per_class_counter[label_raw]++;
    f.samples.resize(ds.header.frame_length);
    for (std::uint32_t i = 0; i < ds.header.frame_length; ++i) {
      const float re = read_le<float>(is);
      const float im = read_le<float>(is);
      f.samples[i] = cplx(re, im);
    }
    labels_seen.insert(label_raw);
    snrs_seen.insert(f.snr_db);
    ds.frames.push_back(std::move(f));
  }

  if (labels_seen.size() != class_count)
    throw FormatError("distinct labels do not match class count");
  for (std::uint8_t l : labels_seen)
    ds.header.classes.push_back(static_cast<ModulationType>(l));
  ds.header.frames_per_class = frame_count / class_count;
  ds.header.snr_list_db.assign(snrs_seen.begin(), snrs_seen.end());
  return ds;
}

}  // namespace emc2net
