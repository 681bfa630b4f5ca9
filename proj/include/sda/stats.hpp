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
#include <map>
#include <span>
#include <vector>

#include "sda/core.hpp"
#include "sda/version_tree.hpp"

namespace sda {

// Exact fraction, used for densities so threshold comparisons never go
// through floating point.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

// Three-way compare of two non-negative rationals with positive
// denominators. Cross-multiplies in 128 bits.
int rat_cmp(Rational a, Rational b);

inline bool rat_at_least_third(Rational r) {
  return rat_cmp(r, Rational{1, 3}) >= 0;
}

// Liveness analysis of one kv-sorted run of data entries, independent of
// any valid-version set. An entry (k, x) is live at version v when x is an
// ancestor of v and no other entry of key k sits strictly between x and v.
// The set of versions an entry is live at is a union of DFS-label
// intervals ("pieces"): the entry's own subtree interval minus the
// subtrees of its same-key proper descendants. Pieces are computed in one
// pass per key run with an interval stack; their total number is at most
// twice the entry count.
//
// All DFS-indexed tables refer to the tree's labels at construction time,
// so a context must not be used across clone operations.
//
// The context does not copy the entries; the caller keeps them alive.
class StatsContext {
 public:
  struct Piece {
    std::uint32_t lo = 0;
    std::uint32_t hi = 0;  // inclusive
  };

  // Throws std::invalid_argument when entries are not kv-sorted, contain
  // duplicate (key, version) pairs, or contain reserved slot records.
  StatsContext(const VersionTree& tree, std::span<const Entry> entries);

  const VersionTree& tree() const { return *tree_; }
  std::span<const Entry> entries() const { return entries_; }
  std::int64_t entry_count() const {
    return static_cast<std::int64_t>(entries_.size());
  }
  std::int64_t run_count() const {
    return static_cast<std::int64_t>(run_begin_.size()) - 1;
  }

  // Number of entries live at v; defined for every tree version.
  std::int64_t live_at(VersionId v) const {
    return live_at_dfs_[tree_->dfs(v)];
  }

  // Number of entries written at exactly v, regardless of any valid set.
  std::int64_t entries_at(VersionId v) const {
    return lead_at_dfs_[tree_->dfs(v)];
  }

  std::uint32_t run_of(std::size_t entry_index) const {
    return entry_run_[entry_index];
  }
  std::span<const Piece> pieces_of(std::size_t entry_index) const {
    return std::span<const Piece>(pieces_).subspan(
        piece_begin_[entry_index],
        piece_begin_[entry_index + 1] - piece_begin_[entry_index]);
  }

 private:
  friend class ValidStats;

  const VersionTree* tree_;
  std::span<const Entry> entries_;
  std::vector<std::uint32_t> run_begin_;  // run r spans [run_begin_[r], run_begin_[r+1])
  std::vector<std::uint32_t> entry_run_;
  std::vector<std::uint32_t> entry_dfs_;
  std::vector<Piece> pieces_;             // grouped by entry, ascending lo
  std::vector<std::uint32_t> piece_begin_;
  std::vector<std::int64_t> live_at_dfs_;
  std::vector<std::int64_t> lead_at_dfs_;
};

// Aggregates of the extraction lambda(A, W restricted to u's subtree),
// measured for an arbitrary tree version u (valid or not).
struct SubtreeAggregates {
  std::int64_t lambda_size = 0;     // entries live at some valid version in u's subtree
  std::int64_t live_in_lambda = 0;  // liveness of u measured inside that extraction
};

// Per-valid-set view over a StatsContext: masked lead sums, survivor
// flags, closed-form extraction sizes for valid versions, orphans and
// stratum shape. Construction is O(entries + tree size).
class ValidStats {
 public:
  // Throws std::invalid_argument when `valid` is empty, contains
  // duplicates, or names versions missing from the tree.
  ValidStats(const StatsContext& ctx, std::span<const VersionId> valid);

  const StatsContext& ctx() const { return *ctx_; }
  const std::vector<VersionId>& versions() const { return versions_; }
  std::int64_t version_count() const {
    return static_cast<std::int64_t>(versions_.size());
  }
  bool contains(VersionId v) const { return mask_[ctx_->tree_->dfs(v)] != 0; }

  // lead(v): entries written at v, counted only for valid v.
  std::int64_t lead(VersionId v) const {
    return contains(v) ? ctx_->lead_at_dfs_[ctx_->tree_->dfs(v)] : 0;
  }
  std::int64_t live(VersionId v) const { return ctx_->live_at(v); }

  // Sum of lead over valid versions inside v's subtree; v itself need not
  // be valid.
  std::int64_t lead_below(VersionId v) const;

  // |lambda(A, valid members of v's subtree)| in O(1); requires v valid
  // (throws std::invalid_argument otherwise). For non-valid versions use
  // subtree_aggregates.
  std::int64_t lambda_subtree_size(VersionId v) const;

  // One O(entries) pass; valid for any tree version u. When the valid
  // subtree of u is empty the result is {0, 0}.
  SubtreeAggregates subtree_aggregates(VersionId u) const;

  // Density of u inside the extraction of its valid subtree. Empty
  // extractions count as dense (1/1) so they never win an argmin.
  Rational subtree_density(VersionId u) const;

  // Entry is live at at least one valid version.
  bool survives(std::size_t entry_index) const {
    return surv_[entry_index] != 0;
  }
  std::int64_t survivor_count() const { return survivor_count_; }

  // Count of valid versions with DFS label in [lo, hi].
  std::int64_t valid_count_in(std::uint32_t lo, std::uint32_t hi) const {
    if (lo > hi) return 0;
    return pref_valid_[hi + 1] - pref_valid_[lo];
  }

  // Minimal valid versions (no valid proper ancestor), DFS ascending.
  const std::vector<VersionId>& orphans() const { return orphans_; }
  // True when all orphans share one parent (or the sole orphan is the root).
  bool is_stratum() const { return is_stratum_; }
  // Parent of the orphans; kNoVersion when the orphan is the root. Throws
  // std::invalid_argument when the set is not a stratum.
  VersionId stratum_parent() const;

 private:
  const StatsContext* ctx_;
  std::vector<VersionId> versions_;      // DFS ascending
  std::vector<char> mask_;               // by DFS label
  std::vector<std::int64_t> pref_valid_; // size T+1
  std::vector<std::int64_t> pref_lead_;  // masked lead by DFS, size T+1
  std::vector<std::int64_t> pref_surv_;  // survivors by entry-version DFS, size T+1
  std::vector<char> surv_;
  std::int64_t survivor_count_ = 0;
  std::vector<VersionId> orphans_;
  bool is_stratum_ = false;
  VersionId stratum_parent_ = kNoVersion;
};

// Definitional operations. These are the reference surface: merges use
// the same machinery through StatsContext/ValidStats directly.

using VersionStats = std::map<VersionId, VersionCounts>;

// Exact lead/live/lead_below for every version in `versions`.
// Throws std::invalid_argument on unsorted entries or an empty set.
VersionStats compute_stats(const VersionTree& tree,
                           std::span<const Entry> entries,
                           std::span<const VersionId> versions);

// live(v) / array_len. Throws std::invalid_argument when array_len <= 0
// ("empty array") or v is not tracked in stats.
Rational density(const VersionStats& stats, VersionId v,
                 std::int64_t array_len);

// lambda(A, W): the subsequence of entries live at some version in W.
std::vector<Entry> split_extract(const VersionTree& tree,
                                 std::span<const Entry> entries,
                                 std::span<const VersionId> w);

// live(parent(W)) + sum of lead_below over W's orphans. Bounds
// |lambda(A, W)| from above whenever every entry version inside an
// orphan's subtree is itself in W; an entry written strictly below an
// orphan at a non-member version can be live at a member while neither
// term counts it. Throws std::invalid_argument when W is not a stratum.
// live(parent) counts as 0 when the orphan is the root.
std::int64_t arr_size(const StatsContext& ctx, const ValidStats& w);
std::int64_t arr_size(const VersionTree& tree, std::span<const Entry> entries,
                      std::span<const VersionId> w);

}  // namespace sda
