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
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sda/block_store.hpp"
#include "sda/common.hpp"
#include "sda/core.hpp"
#include "sda/cow_btree.hpp"
#include "sda/engine.hpp"
#include "sda/oracle.hpp"
#include "sda/version_tree.hpp"

namespace sda {

// Benchmark workload shape. The op stream is a pure function of these
// fields: two runs from equal specs produce identical operations and
// therefore identical metrics.
//
// Cadence: inserts go to uniformly random leaf versions. Every
// clone_every-th insert is followed by a clone (a random leaf with
// probability p_leaf_clone, else a random internal version), every
// range_every-th by a range query of at most range_size results at a
// random version, every point_every-th by a point query at a random
// version.
struct WorkloadSpec {
  std::string structure = "sda";  // sda | sda-nosplit | cow-btree

  std::uint64_t n_inserts = 100000;
  std::uint64_t clone_every = 1000;  // 0 disables cloning
  double p_leaf_clone = 1.0 / 3.0;
  std::uint64_t range_size = 256;    // result cap per range query
  std::uint64_t range_every = 1024;  // 0 disables range queries
  std::uint64_t point_every = 0;     // 0 disables point queries

  std::size_t key_size = 16;
  std::size_t value_size = 84;
  // Distinct keys to draw from; 0 uses the whole fixed-width space.
  std::uint64_t key_space = 0;

  std::uint64_t seed = 1;
  int block_size = 64;
  std::size_t staging_entries = 256;  // arrays this small stay in memory
  std::size_t cache_nodes = 256;      // cow-btree node cache
  bool paranoid = false;

  std::uint64_t report_every = 4096;  // metrics cadence; 0 = final row only

  // Negative control for verify mode: at this insert (1-based) the
  // structure receives a corrupted value while the oracle keeps the real
  // one, so verification must report a divergence. 0 disables.
  std::uint64_t fault_op = 0;

  void validate() const;  // throws std::invalid_argument
};

// One metrics checkpoint. ops_done, reads, writes, bytes and elapsed are
// cumulative and never decrease across rows; the rest are gauges.
struct MetricsRow {
  std::uint64_t ops_done = 0;
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t bytes = 0;
  std::uint64_t live_entries = 0;
  std::uint64_t levels = 0;
  std::uint64_t arrays = 0;
  std::uint64_t elapsed = 0;  // device ticks, one per block transfer
};

// Header line then one line per row, comma separated, no quoting.
void write_csv(const std::vector<MetricsRow>& rows, std::ostream& os);

// Uniform facade over the three structures so the driver and the CLI can
// swap them by name. levels() and arrays() feed the equally named metrics
// columns; their precise meaning is structure specific (SDA: occupied
// levels and alive arrays; cow-btree: tree height and node count).
class Dictionary {
 public:
  virtual ~Dictionary() = default;

  virtual VersionId clone(VersionId parent) = 0;
  virtual void update(const std::string& key, const Value& value,
                      VersionId version) = 0;
  virtual std::optional<std::pair<Value, VersionId>> point_query(
      const std::string& key, VersionId version) const = 0;
  virtual std::vector<std::pair<std::string, Value>> range_query(
      const std::string& start_key, const std::string& end_key,
      VersionId version, std::size_t limit) const = 0;

  virtual std::uint64_t levels() const = 0;
  virtual std::uint64_t arrays() const = 0;
  virtual std::string stats_text() const = 0;

  // Escape hatches for structure-specific assertions in the tests; null
  // when the dictionary is not of that kind.
  virtual SdaEngine* sda() { return nullptr; }
  virtual CowBTree* cow() { return nullptr; }
};

// Throws std::invalid_argument on an unknown structure name. The returned
// dictionary holds references to `tree` and `dev`.
std::unique_ptr<Dictionary> open_structure(const WorkloadSpec& spec,
                                           VersionTree& tree,
                                           BlockDevice& dev);

// Owns the tree, the device and the structure, and executes the op stream
// described by the spec. With `verify` set an oracle runs in lockstep:
// every query result is compared, a corrupted value is injected at
// fault_op if requested, and a final audit re-scans a sample of versions
// in full. The first divergence stops the run.
class WorkloadRunner {
 public:
  WorkloadRunner(const WorkloadSpec& spec, bool verify = false);

  // Returns false when verification caught a divergence.
  bool run();

  const std::vector<MetricsRow>& rows() const { return rows_; }
  const std::string& divergence() const { return divergence_; }

  Dictionary& dict() { return *dict_; }
  VersionTree& tree() { return tree_; }
  const BlockDevice& device() const { return dev_; }

  const std::vector<VersionId>& leaf_versions() const { return leaves_; }
  const std::vector<VersionId>& versions() const { return all_; }

  // Smallest key at full width, and the upper fence above every drawable
  // key; handy for full scans from outside.
  std::string key_floor() const;
  std::string key_ceil() const;
  std::string make_key(std::uint64_t draw) const;

 private:
  std::string make_value(std::uint64_t draw) const;
  VersionId pick(const std::vector<VersionId>& from);
  MetricsRow snapshot(std::uint64_t ops) const;
  void do_clone();
  bool do_range();
  bool do_point();
  bool audit();
  bool fail(std::string what);

  WorkloadSpec spec_;
  bool verify_;
  VersionTree tree_;
  BlockDevice dev_;
  std::unique_ptr<Dictionary> dict_;
  std::unique_ptr<OracleStore> oracle_;
  std::mt19937_64 rng_;
  std::vector<VersionId> leaves_;
  std::vector<VersionId> internals_;
  std::vector<VersionId> all_;
  std::vector<MetricsRow> rows_;
  std::string divergence_;
  std::uint64_t op_ = 0;
};

}  // namespace sda
