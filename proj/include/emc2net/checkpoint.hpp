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

#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "emc2net/autodiff.hpp"
#include "emc2net/detail/binio.hpp"

// Checkpoint file, little-endian:
//   magic "EMCK" | u16 version = 1 | u32 param_count |
//   per param: u16 name_len, UTF-8 name, u8 rank (= 2),
//              u32 dims[rank] (rows, cols), f32 payload column-major |
//   u8 has_adam |
//   if has_adam: u64 step, then per param f32 m payload and f32 v payload
//   in table order.
// Parameters from several stores live in one table under "<prefix>." names.

namespace emc2net {

namespace ckpt_detail {

constexpr char kMagic[4] = {'E', 'M', 'C', 'K'};

template <typename S>
void write_payload(std::ostream& os, const Mat<S>& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      binio::write_le<float>(os, static_cast<float>(m(r, c)));
}

template <typename S>
Mat<S> read_payload(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  Mat<S> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      m(r, c) = static_cast<S>(binio::read_le<float>(is));
  return m;
}

}  // namespace ckpt_detail

template <typename S>
struct NamedStore {
  std::string prefix;
  ad::ParamStore<S>* store;
};

/// Saves stores (and optionally their Adam states, in the same order) as one
/// named-parameter table. Values are stored as binary32 regardless of S.
template <typename S>
void save_checkpoint(const std::string& path, const std::vector<NamedStore<S>>& stores,
                     const std::vector<const ad::AdamState<S>*>& adams = {}) {
  if (!adams.empty() && adams.size() != stores.size())
    throw ShapeError("save_checkpoint: one Adam state per store required");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);

  std::uint32_t count = 0;
  for (const auto& ns : stores) count += static_cast<std::uint32_t>(ns.store->size());

  binio::write_raw(os, ckpt_detail::kMagic, 4);
  binio::write_le<std::uint16_t>(os, 1);
  binio::write_le<std::uint32_t>(os, count);

  for (const auto& ns : stores) {
    for (const auto& e : ns.store->entries) {
      const std::string name = ns.prefix + "." + e.name;
      binio::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
      binio::write_raw(os, name.data(), name.size());
      binio::write_le<std::uint8_t>(os, 2);
      binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.rows()));
      binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.cols()));
      ckpt_detail::write_payload(os, e.value);
    }
  }

  const bool has_adam = !adams.empty();
  binio::write_le<std::uint8_t>(os, has_adam ? 1 : 0);
  if (has_adam) {
    // One shared step would lose per-store counters; store each.
    for (const auto* st : adams)
      binio::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(st->step));
    for (std::size_t si = 0; si < stores.size(); ++si) {
      const auto& st = *adams[si];
      for (std::size_t i = 0; i < st.m.size(); ++i) {
        ckpt_detail::write_payload(os, st.m[i]);
        ckpt_detail::write_payload(os, st.v[i]);
      }
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

/// Loads a checkpoint into pre-built stores. Every "<prefix>.<name>" in the
/// stores must be present with matching shape; extra table entries are
/// rejected so a classifier checkpoint cannot silently stand in for a full
/// one. Pass `adams` to also restore optimizer state (file must contain it).
template <typename S>
void load_checkpoint(const std::string& path, const std::vector<NamedStore<S>>& stores,
                     const std::vector<ad::AdamState<S>*>& adams = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);

  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, ckpt_detail::kMagic, 4) != 0)
    throw FormatError("bad checkpoint magic");
  const auto version = binio::read_le<std::uint16_t>(is);
  if (version != 1) throw FormatError("unsupported checkpoint version");
  const auto count = binio::read_le<std::uint32_t>(is);

  struct Raw {
    Mat<S> value;
    bool used = false;
  };
  std::map<std::string, Raw> table;
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = binio::read_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (is.gcount() != static_cast<std::streamsize>(name_len))
      throw FormatError("file truncated");
    const auto rank = binio::read_le<std::uint8_t>(is);
    if (rank != 2) throw FormatError("unsupported tensor rank in checkpoint");
    const auto rows = binio::read_le<std::uint32_t>(is);
    const auto cols = binio::read_le<std::uint32_t>(is);
    table[name] = Raw{ckpt_detail::read_payload<S>(is, rows, cols), false};
    order.push_back(name);
  }

  for (const auto& ns : stores) {
    for (auto& e : ns.store->entries) {
      const std::string name = ns.prefix + "." + e.name;
      auto it = table.find(name);
      if (it == table.end())
        throw FormatError("checkpoint missing parameter: " + name);
      if (it->second.value.rows() != e.value.rows() ||
          it->second.value.cols() != e.value.cols())
        throw FormatError("checkpoint shape mismatch for: " + name);
      e.value = it->second.value;
      it->second.used = true;
    }
  }
  for (const auto& [name, raw] : table)
    if (!raw.used) throw FormatError("checkpoint has unexpected parameter: " + name);

  const auto has_adam = binio::read_le<std::uint8_t>(is);
  if (!adams.empty()) {
    if (adams.size() != stores.size())
      throw ShapeError("load_checkpoint: one Adam state per store required");
    if (has_adam != 1) throw FormatError("checkpoint has no optimizer state");
    for (auto* st : adams)
      st->step = static_cast<long>(binio::read_le<std::uint64_t>(is));
    // Adam payloads were written in table order, which follows store order.
    for (std::size_t si = 0; si < stores.size(); ++si) {
      auto& st = *adams[si];
      st.m.clear();
      st.v.clear();
      for (const auto& e : stores[si].store->entries) {
        st.m.push_back(ckpt_detail::read_payload<S>(is, e.value.rows(), e.value.cols()));
        st.v.push_back(ckpt_detail::read_payload<S>(is, e.value.rows(), e.value.cols()));
      }
    }
  }
}

}  // namespace emc2net
