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
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sda/block_store.hpp"
#include "sda/common.hpp"
#include "sda/core.hpp"
#include "sda/split.hpp"
#include "sda/stats.hpp"
#include "sda/version_tree.hpp"

namespace sda {

// Counters the engine accumulates across its lifetime. Cheap enough to be
// unconditional; the acceptance checks read them after a run.
struct EngineCounters {
  std::uint64_t updates = 0;
  std::uint64_t clones = 0;
  std::uint64_t merges = 0;
  std::uint64_t promotions = 0;
  std::uint64_t split_calls = 0;
  std::uint64_t split_pieces = 0;
  std::uint64_t max_pieces_per_split = 0;
  // Splits that produced more than one output with lead fraction < 1/2.
  std::uint64_t multi_lead_poor_splits = 0;
  // Merges that had to absorb same-level arrays beyond the primary target.
  std::uint64_t multi_target_merges = 0;
  // Merges whose version union was not a stratum (disjoint-subtree target).
  std::uint64_t nonstratum_merges = 0;
  // Merged inputs where the stratum parent was live beyond 2^{l+1}/3; the
  // split precondition only provably gets 2/3 of that bound from two
  // bounded inputs, so occurrences are watched rather than asserted here.
  std::uint64_t strong_parent_live = 0;
  // Worst (smallest) aggregate lead fraction over any split's outputs.
  std::uint64_t worst_lead_num = 1;
  std::uint64_t worst_lead_den = 1;
  std::uint64_t full_sweeps = 0;
};

// The stratified doubling array. Levels hold immutable kv-sorted arrays on
// a shared block device; every array is valid for a disjoint set of
// versions per level, and updates ride a promotion/merge/split pipeline
// upward. All structural decisions (what to merge, how to split, where to
// register) live here; the device only stores and charges.
//
// The engine asserts the promotion conditions and the per-output level
// conditions on every merge. With `paranoid` set it additionally checks
// the split preconditions, the cross-level edge condition of new content
// against older arrays, and runs a full structural sweep periodically and
// on demand via check_invariants().
class SdaEngine {
 public:
  // `tree` and `dev` must outlive the engine and must be the same pair the
  // device was built over. The engine is the only writer of both.
  SdaEngine(VersionTree& tree, BlockDevice& dev, SdaConfig cfg = {});

  SdaEngine(const SdaEngine&) = delete;
  SdaEngine& operator=(const SdaEngine&) = delete;

  // Clones `parent` in the version tree and registers the child wherever
  // the parent is registered. Issues no device I/O (asserted).
  VersionId clone(VersionId parent);

  // Inserts (key, value) at a leaf version. Key and value widths must
  // match the device geometry.
  void update(const std::string& key, const Value& value, VersionId version);

  // Closest-ancestor point lookup. Returns the value and the version that
  // wrote it.
  std::optional<std::pair<Value, VersionId>> point_query(
      const std::string& key, VersionId version) const;

  // Ordered scan of [start_key, end_key] at `version`; one result per live
  // key, closest-ancestor semantics, at most `limit` results.
  std::vector<std::pair<std::string, Value>> range_query(
      const std::string& start_key, const std::string& end_key,
      VersionId version,
      std::size_t limit = std::numeric_limits<std::size_t>::max()) const;

  // Highest level holding an alive array; -1 when empty.
  int top_level() const;
  std::size_t level_count() const { return levels_.size(); }
  std::size_t array_count() const;
  ArrayId registered_at(int level, VersionId v) const;

  const EngineCounters& counters() const { return counters_; }
  const SdaConfig& config() const { return cfg_; }
  const BlockDevice& device() const { return *dev_; }

  // Flat key=value text block: per-level array counts and sizes, merge
  // counters, lead-fraction histogram.
  std::string stats_text() const;

  // Full structural sweep: registration/valid sync, disjointness, stored
  // stats against fresh recomputation, and (when version splitting is on)
  // the six level conditions for every alive data array. Throws
  // InvariantViolation on the first failure.
  void check_invariants() const;

 private:
  struct Level {
    std::map<VersionId, ArrayId> reg;  // version -> its array at this level
    std::set<ArrayId> arrays;          // alive arrays placed at this level
  };

  struct Candidate {
    std::vector<Entry> entries;        // kv-sorted, no slots
    std::vector<VersionId> versions;   // dfs-ascending
    VersionId orphan = kNoVersion;
    ArrayId next_hint = kNoArray;
  };

  struct TargetPlan {
    ArrayId primary = kNoArray;        // select_merge_target result
    std::vector<ArrayId> absorb;       // primary first, then by ascending id
  };

  void ensure_levels(int level);
  TargetPlan plan_targets(const std::vector<VersionId>& versions,
                          VersionId lookup_orphan, ArrayId next_hint,
                          int level) const;
  void assert_promotion(const Candidate& c, int level,
                        const std::set<ArrayId>& absorbed) const;
  void promote(Candidate c, int level);
  void merge_split(Candidate c, const TargetPlan& plan, int level);
  void merge_nosplit(Candidate c, int level);

  // Phase 0: snapshot + retire absorbed arrays and their sample chains.
  // Returns per-input record lists (candidate first) and the merged
  // version union.
  std::vector<std::vector<Entry>> absorb_inputs(
      const Candidate& c, const TargetPlan& plan,
      std::vector<VersionId>& merged_versions);
  std::vector<Entry> merge_dedup(
      const std::vector<std::vector<Entry>>& inputs) const;
  void kill_chain(ArrayId id);
  void shed_stale_registrations(const std::vector<VersionId>& vv, int level);

  // Entries live at some valid version with dfs in [lo, hi].
  std::vector<Entry> extract_interval(const StatsContext& ctx,
                                      const ValidStats& vs, std::uint32_t lo,
                                      std::uint32_t hi) const;

  ArrayId write_piece(std::vector<VersionId> versions,
                      std::vector<Entry> entries, int level, ArrayId next,
                      bool check_conditions);
  void register_at(int level, VersionId v, ArrayId id);
  void check_piece(ArrayId id, int level) const;
  bool entry_strictly_below(VersionId v, int min_level,
                            const std::set<ArrayId>& exclude) const;
  void reverse_edge_check(ArrayId id) const;

  void note_split(const std::vector<ArrayId>& written, bool stratum_input,
                  std::int64_t promoted_lead, std::int64_t promoted_size);
  void maybe_sweep();

  VersionTree* tree_;
  BlockDevice* dev_;
  SdaConfig cfg_;
  std::vector<Level> levels_;
  mutable EngineCounters counters_;
  std::uint64_t ops_since_sweep_ = 0;
};

}  // namespace sda
