/*
 * Copyright 2026 the sda authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
 * implied. See the License for the specific language governing
 * permissions and limitations under the License.
 */

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sda/common.hpp"
#include "sda/version_tree.hpp"

namespace sda {

// A stored record is keyed by (key, version). Three payload kinds:
//
//  - Value: the write's bytes, authoritative.
//  - ForwardPointer: the record is a locator only; the payload sits at
//    `index` inside array `target`. Self-describing on purpose: after
//    independent merges one array can hold pointers inherited from both
//    inputs, aimed at different upper arrays.
//  - RedundantHint: a reserved slot carrying copies of the nearest real
//    forward pointers on either side, so no block of a large array is left
//    without one. A slot duplicates the key/version of the record that
//    follows it and never answers a query.

struct ForwardPointer {
  ArrayId target = kNoArray;
  std::uint64_t index = 0;

  friend bool operator==(const ForwardPointer&,
                         const ForwardPointer&) = default;
};

struct RedundantHint {
  std::optional<ForwardPointer> left;   // nearest real FP at a lower index
  std::optional<ForwardPointer> right;  // nearest real FP at a higher index

  friend bool operator==(const RedundantHint&, const RedundantHint&) = default;
};

using Value = std::string;

// Alternative order is the wire tag order: 0 value, 1 fp, 2 slot.
using Payload = std::variant<Value, ForwardPointer, RedundantHint>;

struct Entry {
  std::string key;
  VersionId version = kNoVersion;
  Payload payload;

  bool is_value() const { return payload.index() == 0; }
  bool is_fp() const { return payload.index() == 1; }
  bool is_slot() const { return payload.index() == 2; }
  const Value& value() const { return std::get<Value>(payload); }
  const ForwardPointer& fp() const { return std::get<ForwardPointer>(payload); }
  const RedundantHint& hint() const { return std::get<RedundantHint>(payload); }

  friend bool operator==(const Entry&, const Entry&) = default;
};

// kv order: key ascending bytewise, then version by current DFS label
// descending. Within one key a version precedes all of its ancestors, and
// versions from unrelated branches never interleave with a subtree. The
// DFS tiebreak depends on tree shape, but cloning only appends labels
// inside the parent's interval, so the relative order of existing versions
// is stable and sorted arrays stay sorted without rewrites.
inline std::strong_ordering kv_compare(const VersionTree& tree,
                                       const std::string& lhs_key,
                                       VersionId lhs_version,
                                       const std::string& rhs_key,
                                       VersionId rhs_version) {
  if (int c = lhs_key.compare(rhs_key); c != 0)
    return c < 0 ? std::strong_ordering::less : std::strong_ordering::greater;
  return tree.dfs(rhs_version) <=> tree.dfs(lhs_version);
}

struct KvLess {
  const VersionTree* tree = nullptr;

  bool operator()(const Entry& a, const Entry& b) const {
    return kv_compare(*tree, a.key, a.version, b.key, b.version) < 0;
  }
};

// True when `entries` is kv-sorted. Ties on (key, version) are tolerated
// only when the earlier record is a reserved slot, which by construction
// duplicates the key/version of its successor.
bool kv_sorted(const VersionTree& tree, std::span<const Entry> entries);

// Engine tuning knobs. The structure itself is block-size oblivious; none
// of these encode the device block size.
struct SdaConfig {
  // Every r-th record of a fresh array gets a forward pointer one level
  // down. Must be >= 2.
  int sample_rate = 8;

  // A reserved redundant-FP slot is inserted before every k-th data record
  // of a fresh data array. Must be > 8 so slots stay a small fraction.
  int redundant_fp_spacing = 16;

  // When false, version splitting and subtree promotion are disabled:
  // whole arrays promote when they outgrow their level. Used as the
  // ablation baseline.
  bool version_split_enabled = true;

  // Run structural invariant sweeps while operating. Expensive.
  bool paranoid = false;

  void validate() const;  // throws std::invalid_argument on bad knobs
};

// Per-version counts over one array. All counts refer to data entries
// (slots excluded).
struct VersionCounts {
  std::int64_t lead = 0;        // entries written at exactly this version
  std::int64_t live = 0;        // keys whose visible write at this version is in the array
  std::int64_t lead_below = 0;  // lead summed over the version's valid subtree
};

}  // namespace sda
