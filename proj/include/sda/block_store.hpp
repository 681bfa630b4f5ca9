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

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "sda/common.hpp"
#include "sda/core.hpp"
#include "sda/stats.hpp"
#include "sda/version_tree.hpp"

namespace sda {

// Simulated block device. Arrays are immutable kv-sorted record sequences;
// every access is charged in whole blocks of `block_size_entries` records.
// The structure on top never reads the block size; only the device and the
// baseline B-tree know it.
//
// Charging rules:
//  - write_array: ceil(records / B) block writes.
//  - iterate: one block read per distinct block the cursor enters.
//  - search: one block read per binary-search probe, except a probe into
//    the block touched by the immediately preceding probe (device-wide
//    memo). Simple, conservative, deterministic.
//  - arrays of at most `staging_limit` records are memory resident
//    ("staged"): they charge nothing, in or out, but still count toward
//    the space gauge.
//
// Bytes follow blocks: every charged block moves block_bytes() bytes.

enum class ArrayKind : std::uint8_t { data = 0, sample = 1 };

// On-wire index marking a forward pointer whose target is not the array's
// next_array; such pointers cannot be expressed in the file format and
// degrade to plain locator records on load.
inline constexpr std::uint64_t kFpDeadIndex =
    std::numeric_limits<std::uint64_t>::max();

struct IoCounters {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::int64_t live_entries = 0;  // records in alive arrays + node blocks
  std::uint64_t total_entries_ever = 0;
};

struct StoredArray {
  ArrayId id = kNoArray;
  int level = 0;
  ArrayKind kind = ArrayKind::data;
  std::vector<Entry> records;      // kv-sorted; may contain slot records
  std::vector<VersionId> valid;    // dfs-ascending
  ArrayId next = kNoArray;         // dominant forward-pointer target
  ArrayId sampled_by = kNoArray;   // sample array one level down, if any
  VersionStats stats;              // per valid version, slots excluded
  // Distinct versions appearing in non-slot records, dfs-ascending. Used
  // by the engine's edge checks.
  std::vector<VersionId> entry_versions;
  // Subtree extraction size per valid version, frozen at write time.
  std::map<VersionId, std::uint64_t> lambda_t;
  // Live count at the stratum parent (0 when the orphans are roots or the
  // valid set is not a stratum). Frozen at write time.
  std::uint64_t parent_live = 0;
  std::size_t data_count = 0;      // records that are not slots
  bool staged = false;
  bool alive = true;
};

struct SearchResult {
  std::size_t loc = 0;  // least index >= (key, version); may be one-past-end
  std::optional<ForwardPointer> fp_below;  // nearest FP strictly below loc
  std::optional<ForwardPointer> fp_above;  // nearest FP weakly above loc
};

class BlockDevice;

// Sequential cursor. Reading a record charges its block the first time the
// cursor enters it; advancing alone is free.
class ArrayIterator {
 public:
  const Entry* peek();  // nullptr at end
  void advance();
  std::size_t pos() const { return pos_; }
  bool at_end() const;

 private:
  friend class BlockDevice;
  ArrayIterator(const BlockDevice* dev, const StoredArray* arr,
                std::size_t pos)
      : dev_(dev), arr_(arr), pos_(pos) {}

  const BlockDevice* dev_;
  const StoredArray* arr_;
  std::size_t pos_;
  std::size_t charged_block_ = std::numeric_limits<std::size_t>::max();
};

class BlockDevice {
 public:
  // Record widths are fixed device-wide; write_array rejects records that
  // do not match. `tree` must outlive the device.
  BlockDevice(const VersionTree& tree, int block_size_entries = 64,
              std::size_t staging_limit = 0, std::size_t key_size = 16,
              std::size_t value_size = 84);

  BlockDevice(const BlockDevice&) = delete;
  BlockDevice& operator=(const BlockDevice&) = delete;

  // ---- array store ----

  // Persists a new immutable array and computes its per-version stats
  // (slot records excluded). `valid` is sorted internally. Throws
  // std::invalid_argument on empty input, records out of kv order,
  // mismatched key/value widths, a forward pointer aimed at `next` whose
  // index is out of range, or a bad valid set. Data arrays must carry a
  // stratum as their valid set.
  ArrayId write_array(std::vector<Entry> records,
                      std::vector<VersionId> valid, int level, ArrayKind kind,
                      ArrayId next = kNoArray);

  // Fills every reserved slot with copies of the nearest real forward
  // pointers (aimed at the array's next_array) on either side. One
  // sequential read pass plus one write pass is charged. No-op costwise
  // for staged arrays.
  void fill_redundant_fps(ArrayId id);

  // Bounded least-upper-bound search for (key, version) in kv order over
  // [lb, ub). Defaults cover the whole array. When `want_fps` is set the
  // result carries the nearest forward pointers on either side of loc,
  // found by scanning outward from loc (slot records resolve the answer
  // immediately, so the scan is short in filled arrays).
  SearchResult search(ArrayId id, const std::string& key, VersionId version,
                      std::optional<std::size_t> lb = std::nullopt,
                      std::optional<std::size_t> ub = std::nullopt,
                      bool want_fps = false) const;

  // Cursor starting at `loc` (may equal the record count: empty cursor).
  ArrayIterator iterate(ArrayId id, std::size_t loc) const;

  // Marks an alive array dead. Registration cleanup is the caller's job.
  void mark_dead(ArrayId id);

  // Reclaims a dead array: removes it from the space gauge and invalidates
  // its id. Freeing an alive or unknown array throws.
  void free_array(ArrayId id);

  // Registration metadata maintenance; no device traffic.
  void drop_valid(ArrayId id, VersionId v);
  void add_valid(ArrayId id, VersionId v);
  void set_sampled_by(ArrayId id, ArrayId sample);

  const StoredArray& array(ArrayId id) const;
  bool exists(ArrayId id) const;
  bool alive(ArrayId id) const;  // false for dead, freed, or unknown ids
  std::vector<ArrayId> alive_ids() const;

  // ---- node blobs (baseline B-tree) ----
  //
  // Fixed-size node store in the same cost model: every node occupies one
  // block, every touch is one I/O. Content lives with the caller; the
  // device only accounts.

  ArrayId alloc_node();
  void node_write(ArrayId id);
  void node_read(ArrayId id) const;
  void node_free(ArrayId id);

  // ---- accounting / geometry ----

  IoCounters io_counters() const { return io_; }
  int block_size() const { return block_size_; }
  std::size_t key_size() const { return key_size_; }
  std::size_t value_size() const { return value_size_; }
  std::size_t record_bytes() const;
  std::uint64_t block_bytes() const;
  const VersionTree& tree() const { return *tree_; }

  // ---- file backing ----
  //
  // Write-through persistence for non-staged arrays: each array becomes
  // one file of fixed-width records under `dir`. Reads stay in memory;
  // files exist so a run leaves inspectable state behind.

  void enable_file_backing(const std::filesystem::path& dir);
  std::filesystem::path array_path(ArrayId id) const;

  struct LoadedArray {
    ArrayKind kind = ArrayKind::data;
    std::vector<Entry> records;
  };

  // Parses one array file. Versions are resolved against the current
  // tree, so the tree must not have been renumbered since the write.
  // Forward-pointer targets are not stored on disk; loaded pointers carry
  // target = kNoArray, and pointers written with a foreign target come
  // back with index = kFpDeadIndex.
  LoadedArray load_array(const std::filesystem::path& path) const;

 private:
  friend class ArrayIterator;

  StoredArray& arr_mut(ArrayId id);
  void charge_probe(const StoredArray& a, std::size_t index) const;
  void charge_pass(const StoredArray& a, bool write);
  void charge_iter_block(const StoredArray& a) const;
  std::optional<ForwardPointer> scan_for_fp(const StoredArray& a,
                                            std::size_t from,
                                            bool upward) const;
  void write_file(const StoredArray& a) const;

  const VersionTree* tree_;
  int block_size_;
  std::size_t staging_limit_;
  std::size_t key_size_;
  std::size_t value_size_;

  std::map<ArrayId, StoredArray> arrays_;
  std::set<ArrayId> nodes_;
  std::uint64_t next_id_ = 0;

  mutable IoCounters io_;
  // Device-wide memo of the last probed block, as (array id, block no).
  mutable std::optional<std::pair<ArrayId, std::size_t>> last_probe_;

  std::optional<std::filesystem::path> dir_;
};

}  // namespace sda
