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

#include "sda/oracle.hpp"

#include <map>
#include <stdexcept>

namespace sda {

void OracleStore::update(const std::string& key, const Value& value,
                         VersionId version) {
  if (!tree_->exists(version))
    throw std::invalid_argument("oracle update: unknown version");
  log_.push_back(Write{key, version, value});
}

std::optional<std::pair<Value, VersionId>> OracleStore::point_query(
    const std::string& key, VersionId version) const {
  VersionId best = kNoVersion;
  const Value* val = nullptr;
  for (const Write& w : log_) {
    if (w.key != key) continue;
    if (!tree_->is_ancestor(w.version, version)) continue;
    // A deeper writer shadows a shallower one; a later write at the same
    // version overwrites (is_ancestor is reflexive).
    if (!best.valid() || tree_->is_ancestor(best, w.version)) {
      best = w.version;
      val = &w.value;
    }
  }
  if (!best.valid()) return std::nullopt;
  return std::make_pair(*val, best);
}

std::vector<std::pair<std::string, Value>> OracleStore::range_query(
    const std::string& start_key, const std::string& end_key,
    VersionId version, std::size_t limit) const {
  std::map<std::string, std::pair<VersionId, const Value*>> best;
  for (const Write& w : log_) {
    if (w.key < start_key || w.key > end_key) continue;
    if (!tree_->is_ancestor(w.version, version)) continue;
    auto it = best.find(w.key);
    if (it == best.end() || tree_->is_ancestor(it->second.first, w.version))
      best[w.key] = {w.version, &w.value};
  }
  std::vector<std::pair<std::string, Value>> out;
  out.reserve(std::min(limit, best.size()));
  for (const auto& [k, v] : best) {
    if (out.size() >= limit) break;
    out.emplace_back(k, *v.second);
  }
  return out;
}

}  // namespace sda
