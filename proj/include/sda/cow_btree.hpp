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

#include <cstddef>
#include <limits>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sda/block_store.hpp"
#include "sda/core.hpp"
#include "sda/version_tree.hpp"

namespace sda {

// Copy-on-write B-tree baseline: one root per version, nodes shared between
// versions until first write, then the root-to-leaf path is duplicated.
// Every node occupies one block of the shared device; node touches charge
// one I/O each through a small LRU cache. Nodes are never freed (old
// versions keep them reachable), which is exactly the space behaviour this
// baseline exists to exhibit.
class CowBTree {
 public:
  // Fan-out is derived from the device block size. `cache_nodes` bounds the
  // in-memory node cache; 0 disables caching entirely.
  CowBTree(VersionTree& tree, BlockDevice& dev, std::size_t cache_nodes = 256);

  CowBTree(const CowBTree&) = delete;
  CowBTree& operator=(const CowBTree&) = delete;

  // Tree clone only; the child inherits its nearest ancestor's root lazily
  // on first write. No I/O.
  VersionId clone(VersionId parent);

  void update(const std::string& key, const Value& value, VersionId version);

  std::optional<std::pair<Value, VersionId>> point_query(
      const std::string& key, VersionId version) const;

  std::vector<std::pair<std::string, Value>> range_query(
      const std::string& start_key, const std::string& end_key,
      VersionId version,
      std::size_t limit = std::numeric_limits<std::size_t>::max()) const;

  std::size_t node_count() const { return nodes_.size(); }
  int fanout() const { return fanout_; }

  // Nodes on a root-to-leaf path of the newest root; 0 when empty. Metrics
  // accessor: reads the node table directly, charges nothing.
  std::size_t height() const;

 private:
  struct Slot {
    Value value;
    VersionId writer = kNoVersion;
  };

  struct Node {
    ArrayId id = kNoArray;
    VersionId owner = kNoVersion;  // sole version allowed to mutate in place
    bool leaf = true;
    std::vector<std::string> keys;  // leaf: entry keys; internal: separators
    std::vector<Slot> slots;        // leaf only, parallel to keys
    std::vector<ArrayId> kids;      // internal only, keys.size() + 1 of them
  };

  struct InsertResult {
    ArrayId id = kNoArray;  // node id after the insert (copied or in place)
    bool split = false;
    std::string sep;  // first key of the right sibling
    ArrayId right = kNoArray;
  };

  ArrayId effective_root(VersionId v) const;
  const Node& fetch(ArrayId id) const;  // charges a read on cache miss
  ArrayId make_node(Node n);            // alloc + write, enters the cache hot
  void rewrite(ArrayId id);             // write an in-place mutation
  void cache_insert(ArrayId id) const;

  InsertResult insert_rec(ArrayId nid, const std::string& key,
                          const Value& value, VersionId v);
  void range_rec(ArrayId nid, const std::string& start_key,
                 const std::string& end_key, std::size_t limit,
                 std::vector<std::pair<std::string, Value>>& out) const;

  VersionTree* tree_;
  BlockDevice* dev_;
  int fanout_;
  std::size_t cache_cap_;

  std::map<VersionId, ArrayId> roots_;
  std::map<ArrayId, Node> nodes_;

  mutable std::list<ArrayId> lru_;
  mutable std::map<ArrayId, std::list<ArrayId>::iterator> cached_;
};

}  // namespace sda
