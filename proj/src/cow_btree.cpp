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

#include "sda/cow_btree.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace sda {

CowBTree::CowBTree(VersionTree& tree, BlockDevice& dev,
                   std::size_t cache_nodes)
    : tree_(&tree),
      dev_(&dev),
      fanout_(std::max(4, dev.block_size())),
      cache_cap_(cache_nodes) {}

VersionId CowBTree::clone(VersionId parent) {
  return tree_->clone(parent);
}

ArrayId CowBTree::effective_root(VersionId v) const {
  for (VersionId x = v; x.valid(); x = tree_->parent(x)) {
    auto it = roots_.find(x);
    if (it != roots_.end()) return it->second;
  }
  return kNoArray;
}

void CowBTree::cache_insert(ArrayId id) const {
  if (cache_cap_ == 0) return;
  auto it = cached_.find(id);
  if (it != cached_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.push_front(id);
  cached_[id] = lru_.begin();
  if (lru_.size() > cache_cap_) {
    cached_.erase(lru_.back());
    lru_.pop_back();
  }
}

const CowBTree::Node& CowBTree::fetch(ArrayId id) const {
  auto it = cached_.find(id);
  if (it != cached_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
  } else {
    dev_->node_read(id);
    cache_insert(id);
  }
  return nodes_.at(id);
}

ArrayId CowBTree::make_node(Node n) {
  ArrayId id = dev_->alloc_node();
  n.id = id;
  nodes_[id] = std::move(n);
  dev_->node_write(id);
  cache_insert(id);
  return id;
}

void CowBTree::rewrite(ArrayId id) {
  dev_->node_write(id);
  cache_insert(id);
}

std::size_t CowBTree::height() const {
  if (roots_.empty()) return 0;
  std::size_t h = 0;
  for (ArrayId cur = roots_.rbegin()->second;;) {
    const Node& n = nodes_.at(cur);
    ++h;
    if (n.leaf) return h;
    cur = n.kids.front();
  }
}

void CowBTree::update(const std::string& key, const Value& value,
                      VersionId version) {
  if (!tree_->exists(version))
    throw std::invalid_argument("cow update: unknown version");
  if (!tree_->is_leaf(version))
    throw std::invalid_argument("cow update: version is not a leaf");

  ArrayId root = effective_root(version);
  if (!root.valid()) {
    Node leaf;
    leaf.owner = version;
    leaf.keys.push_back(key);
    leaf.slots.push_back(Slot{value, version});
    roots_[version] = make_node(std::move(leaf));
    return;
  }

  InsertResult r = insert_rec(root, key, value, version);
  ArrayId new_root = r.id;
  if (r.split) {
    Node top;
    top.owner = version;
    top.leaf = false;
    top.keys.push_back(r.sep);
    top.kids.push_back(r.id);
    top.kids.push_back(r.right);
    new_root = make_node(std::move(top));
  }
  roots_[version] = new_root;
}

CowBTree::InsertResult CowBTree::insert_rec(ArrayId nid,
                                            const std::string& key,
                                            const Value& value, VersionId v) {
  // Work on a copy of the content; commit it either over the same id (owned
  // node) or as a fresh node (path copy).
  Node n = fetch(nid);
  bool owned = n.owner == v;

  InsertResult out;
  if (n.leaf) {
    auto it = std::lower_bound(n.keys.begin(), n.keys.end(), key);
    std::size_t idx = static_cast<std::size_t>(it - n.keys.begin());
    if (it != n.keys.end() && *it == key) {
      n.slots[idx] = Slot{value, v};
    } else {
      n.keys.insert(it, key);
      n.slots.insert(n.slots.begin() + static_cast<std::ptrdiff_t>(idx),
                     Slot{value, v});
    }
    if (n.keys.size() > static_cast<std::size_t>(fanout_)) {
      std::size_t mid = n.keys.size() / 2;
      Node right;
      right.owner = v;
      right.keys.assign(n.keys.begin() + static_cast<std::ptrdiff_t>(mid),
                        n.keys.end());
      right.slots.assign(n.slots.begin() + static_cast<std::ptrdiff_t>(mid),
                         n.slots.end());
      n.keys.resize(mid);
      n.slots.resize(mid);
      out.split = true;
      out.sep = right.keys.front();
      out.right = make_node(std::move(right));
    }
  } else {
    std::size_t idx = static_cast<std::size_t>(
        std::upper_bound(n.keys.begin(), n.keys.end(), key) - n.keys.begin());
    InsertResult child = insert_rec(n.kids[idx], key, value, v);
    bool changed = false;
    if (child.id != n.kids[idx]) {
      n.kids[idx] = child.id;
      changed = true;
    }
    if (child.split) {
      n.keys.insert(n.keys.begin() + static_cast<std::ptrdiff_t>(idx),
                    child.sep);
      n.kids.insert(n.kids.begin() + static_cast<std::ptrdiff_t>(idx) + 1,
                    child.right);
      changed = true;
    }
    if (n.kids.size() > static_cast<std::size_t>(fanout_)) {
      std::size_t mid = n.kids.size() / 2;
      Node right;
      right.owner = v;
      right.leaf = false;
      out.sep = n.keys[mid - 1];
      right.keys.assign(n.keys.begin() + static_cast<std::ptrdiff_t>(mid),
                        n.keys.end());
      right.kids.assign(n.kids.begin() + static_cast<std::ptrdiff_t>(mid),
                        n.kids.end());
      n.keys.resize(mid - 1);
      n.kids.resize(mid);
      out.split = true;
      out.right = make_node(std::move(right));
    }
    if (owned && !changed && !out.split) {
      // Untouched internal node on an already-copied path: nothing to write.
      out.id = nid;
      return out;
    }
  }

  if (owned) {
    n.id = nid;
    nodes_[nid] = std::move(n);
    rewrite(nid);
    out.id = nid;
  } else {
    n.owner = v;
    out.id = make_node(std::move(n));
  }
  return out;
}

std::optional<std::pair<Value, VersionId>> CowBTree::point_query(
    const std::string& key, VersionId version) const {
  if (!tree_->exists(version))
    throw std::invalid_argument("cow query: unknown version");
  ArrayId cur = effective_root(version);
  if (!cur.valid()) return std::nullopt;
  for (;;) {
    const Node& n = fetch(cur);
    if (n.leaf) {
      auto it = std::lower_bound(n.keys.begin(), n.keys.end(), key);
      if (it == n.keys.end() || *it != key) return std::nullopt;
      const Slot& s = n.slots[static_cast<std::size_t>(it - n.keys.begin())];
      return std::make_pair(s.value, s.writer);
    }
    std::size_t idx = static_cast<std::size_t>(
        std::upper_bound(n.keys.begin(), n.keys.end(), key) - n.keys.begin());
    cur = n.kids[idx];
  }
}

void CowBTree::range_rec(ArrayId nid, const std::string& start_key,
                         const std::string& end_key, std::size_t limit,
                         std::vector<std::pair<std::string, Value>>& out)
    const {
  if (out.size() >= limit) return;
  const Node& n = fetch(nid);
  if (n.leaf) {
    auto it = std::lower_bound(n.keys.begin(), n.keys.end(), start_key);
    for (; it != n.keys.end() && *it <= end_key && out.size() < limit; ++it)
      out.emplace_back(*it,
                       n.slots[static_cast<std::size_t>(it - n.keys.begin())]
                           .value);
    return;
  }
  std::size_t first = static_cast<std::size_t>(
      std::upper_bound(n.keys.begin(), n.keys.end(), start_key) -
      n.keys.begin());
  for (std::size_t i = first; i < n.kids.size() && out.size() < limit; ++i) {
    if (i > first && n.keys[i - 1] > end_key) break;
    range_rec(n.kids[i], start_key, end_key, limit, out);
  }
}

std::vector<std::pair<std::string, Value>> CowBTree::range_query(
    const std::string& start_key, const std::string& end_key,
    VersionId version, std::size_t limit) const {
  if (!tree_->exists(version))
    throw std::invalid_argument("cow query: unknown version");
  if (end_key < start_key)
    throw std::invalid_argument("cow query: bounds out of order");
  std::vector<std::pair<std::string, Value>> out;
  ArrayId root = effective_root(version);
  if (root.valid()) range_rec(root, start_key, end_key, limit, out);
  return out;
}

}  // namespace sda
