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
#include <vector>

#include "sda/common.hpp"

namespace sda {

// The version tree. Every dictionary version is a node; cloning a version
// appends a child. Ancestorship ("x at or above y", written x <= y below)
// is answered in O(1) from a preorder DFS numbering:
//
//   interval(v) = [dfs(v), dfs(v) + |subtree(v)| - 1]
//   x is an ancestor of y  iff  dfs(y) lies in interval(x).
//
// The numbering is recomputed from scratch on every clone (O(V)); it is an
// explicit non-goal to be clever here, versions are rare next to updates.
// Two properties of the renumbering matter to the rest of the system:
//
//   * ids are stable, labels are not; nothing durable may store raw dfs
//     values across a clone,
//   * appending a leaf never reorders existing nodes relative to each
//     other, so arrays sorted by (key, dfs descending) at build time stay
//     sorted under every later numbering.
//
// Ancestorship is reflexive: is_ancestor(v, v) is true.
class VersionTree {
 public:
  VersionTree() = default;

  // Creates the root. Errors if the tree is already rooted.
  VersionId create_root();

  // Appends a fresh child under `parent` and renumbers. Children keep
  // creation order. Errors on an unknown parent.
  VersionId clone(VersionId parent);

  // Weak ancestorship: true when x == y or x is a proper ancestor of y.
  bool is_ancestor(VersionId x, VersionId y) const;

  std::uint32_t dfs(VersionId v) const;
  // Inclusive interval of dfs labels covered by v's subtree.
  std::pair<std::uint32_t, std::uint32_t> interval(VersionId v) const;

  // kNoVersion for the root.
  VersionId parent(VersionId v) const;
  const std::vector<VersionId>& children(VersionId v) const;
  bool is_leaf(VersionId v) const;
  bool exists(VersionId v) const;

  std::size_t version_count() const { return nodes_.size(); }
  bool rooted() const { return !nodes_.empty(); }
  VersionId root() const;

  // Version id holding a given dfs label under the current numbering.
  VersionId version_at_dfs(std::uint32_t dfs_label) const;

  // Depth of v (root = 0).
  std::uint32_t depth(VersionId v) const;

  // Indented one-node-per-line dump, ids and dfs labels, for debugging.
  void dump(std::ostream& os) const;

 private:
  struct Node {
    VersionId parent;
    std::vector<VersionId> children;
    std::uint32_t dfs = 0;
    std::uint32_t subtree_hi = 0;  // interval upper bound
    std::uint32_t depth = 0;
  };

  const Node& node(VersionId v) const;
  void renumber();

  std::vector<Node> nodes_;
  std::vector<VersionId> by_dfs_;
};

}  // namespace sda
