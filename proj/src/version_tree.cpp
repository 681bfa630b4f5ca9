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

#include "sda/version_tree.hpp"

#include <ostream>
#include <stdexcept>
#include <string>

namespace sda {

const VersionTree::Node& VersionTree::node(VersionId v) const {
  if (!exists(v)) {
    throw std::invalid_argument("unknown version id " +
                                std::to_string(v.value));
  }
  return nodes_[v.value];
}

bool VersionTree::exists(VersionId v) const {
  return v.valid() && v.value < nodes_.size();
}

VersionId VersionTree::create_root() {
  if (rooted()) {
    throw std::logic_error("version tree already has a root");
  }
  nodes_.push_back(Node{kNoVersion, {}, 0, 0, 0});
  by_dfs_.assign(1, VersionId{0});
  return VersionId{0};
}

VersionId VersionTree::clone(VersionId parent) {
  const VersionId child{static_cast<std::uint32_t>(nodes_.size())};
  node(parent);  // validate before mutating
  nodes_.push_back(Node{parent, {}, 0, 0, 0});
  nodes_[parent.value].children.push_back(child);
  renumber();
  return child;
}

void VersionTree::renumber() {
  by_dfs_.resize(nodes_.size());
  // Iterative preorder walk; children in creation order.
  std::uint32_t next = 0;
  std::vector<std::pair<VersionId, std::size_t>> stack;
  stack.emplace_back(VersionId{0}, 0);
  nodes_[0].dfs = next;
  by_dfs_[next] = VersionId{0};
  ++next;
  while (!stack.empty()) {
    auto& [v, child_idx] = stack.back();
    Node& n = nodes_[v.value];
    if (child_idx < n.children.size()) {
      VersionId c = n.children[child_idx++];
      nodes_[c.value].dfs = next;
      nodes_[c.value].depth = n.depth + 1;
      by_dfs_[next] = c;
      ++next;
      stack.emplace_back(c, 0);
    } else {
      n.subtree_hi = next - 1;
      stack.pop_back();
    }
  }
}

bool VersionTree::is_ancestor(VersionId x, VersionId y) const {
  const Node& nx = node(x);
  const std::uint32_t dy = node(y).dfs;
  return nx.dfs <= dy && dy <= nx.subtree_hi;
}

std::uint32_t VersionTree::dfs(VersionId v) const { return node(v).dfs; }

std::pair<std::uint32_t, std::uint32_t> VersionTree::interval(
    VersionId v) const {
  const Node& n = node(v);
  return {n.dfs, n.subtree_hi};
}

VersionId VersionTree::parent(VersionId v) const { return node(v).parent; }

const std::vector<VersionId>& VersionTree::children(VersionId v) const {
  return node(v).children;
}

bool VersionTree::is_leaf(VersionId v) const {
  return node(v).children.empty();
}

VersionId VersionTree::root() const {
  if (!rooted()) {
    throw std::logic_error("version tree has no root");
  }
  return VersionId{0};
}

VersionId VersionTree::version_at_dfs(std::uint32_t dfs_label) const {
  if (dfs_label >= by_dfs_.size()) {
    throw std::invalid_argument("dfs label out of range: " +
                                std::to_string(dfs_label));
  }
  return by_dfs_[dfs_label];
}

std::uint32_t VersionTree::depth(VersionId v) const { return node(v).depth; }

void VersionTree::dump(std::ostream& os) const {
  for (std::uint32_t d = 0; d < by_dfs_.size(); ++d) {
    VersionId v = by_dfs_[d];
    const Node& n = nodes_[v.value];
    for (std::uint32_t i = 0; i < n.depth; ++i) os << "  ";
    os << "v" << v.value << " dfs=" << n.dfs << " hi=" << n.subtree_hi
       << "\n";
  }
}

}  // namespace sda
