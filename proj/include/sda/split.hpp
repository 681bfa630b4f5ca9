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
#include <optional>
#include <span>
#include <vector>

#include "sda/stats.hpp"

namespace sda {

// The three merge-time decision procedures, exposed as pure functions over
// a stats view so they can be exercised and cross-checked in isolation.

// Searches w's subtree for the oldest promotable version. With threshold
// M: a subtree is pruned unless its extraction reaches size M and its
// valid lead_below reaches 2M/3; a version wins when it has own lead and
// live(w) >= M/3. Children are visited in ascending-DFS order, so the
// result is deterministic and is the oldest promotable version on its
// root path. M = 2^{l+1} when merging at level l.
//
// Throws std::invalid_argument when w is not in the valid set or m < 1.
std::optional<VersionId> find_promotable(const ValidStats& vs, VersionId w,
                                         std::int64_t m);

// Descends from `candidates` to a list of versions each dense inside its
// own valid subtree: take the candidate least dense in its subtree
// (ties: ascending DFS); if even that one is dense, return all candidates
// sorted by lead_below descending (ties: ascending DFS); otherwise recurse
// into its children. Empty valid subtrees count as dense (1/1) and so are
// never descended into. Throws std::invalid_argument on an empty list.
std::vector<VersionId> find_dense_kids(const ValidStats& vs,
                                       std::vector<VersionId> candidates);

struct SplitPiece {
  std::vector<VersionId> versions;  // DFS ascending
  std::vector<Entry> entries;       // lambda(A, versions), kv order
};

// Splits a valid-version set at level l into pieces whose extractions are
// small (<= 2^{l+1}) and dense. Procedure: let [u_1..u_r] =
// find_dense_kids(orphans), lead_below descending; grow the prefix union
// split(i) of their valid subtrees and stop at the first i where
// |lambda(A, split(i))| exceeds min(2^{l+1}, 3 * min_{k<=i} live(u_k));
// emit split(i-1) and recurse on the remaining versions. When no prefix
// overflows, split(r) is emitted and the leftover versions (those under
// none of the u_i, present when the kid search descended) recurse as well.
//
// The live threshold is the running minimum over the prefix: every
// version in an emitted piece then has 3*live >= piece size, which is the
// density guarantee; the last tested candidate alone would not bound the
// earlier subtrees. An overflow at i = 1 is impossible when the
// preconditions hold (the first kid is dense in its subtree and its
// extraction is below the threshold); on arbitrary inputs the piece
// split(1) is emitted regardless, keeping the recursion well-founded.
//
// With check_preconditions set, the inputs of every recursive step are
// checked: density preconditions (non-subtree-dense versions and the
// stratum parent have live < 2^{l+1}/3, subtree-dense versions have
// extractions below 2^{l+1}) and no member promotable to l+1; violations
// throw InvariantViolation.
//
// Throws std::invalid_argument for level outside [0, 60] or an invalid
// version set.
std::vector<SplitPiece> version_split(const StatsContext& ctx,
                                      std::span<const VersionId> valid,
                                      int level,
                                      bool check_preconditions = false);

}  // namespace sda
