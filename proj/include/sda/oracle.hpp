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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sda/core.hpp"
#include "sda/version_tree.hpp"

namespace sda {

// Ground-truth dictionary: an append-only log of writes, queried by a full
// scan per lookup. Deliberately has no data structure to be wrong about.
// Issues no device I/O.
class OracleStore {
 public:
  explicit OracleStore(const VersionTree& tree) : tree_(&tree) {}

  void update(const std::string& key, const Value& value, VersionId version);

  // Value written at the closest ancestor of `version` that wrote `key`,
  // together with that ancestor. Later writes win within one version.
  std::optional<std::pair<Value, VersionId>> point_query(
      const std::string& key, VersionId version) const;

  // One result per live key in [start_key, end_key], key-ascending, at most
  // `limit` of them.
  std::vector<std::pair<std::string, Value>> range_query(
      const std::string& start_key, const std::string& end_key,
      VersionId version,
      std::size_t limit = std::numeric_limits<std::size_t>::max()) const;

  std::size_t write_count() const { return log_.size(); }

 private:
  struct Write {
    std::string key;
    VersionId version;
    Value value;
  };

  const VersionTree* tree_;
  std::vector<Write> log_;
};

}  // namespace sda
