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

#include "sda/core.hpp"

#include <stdexcept>

namespace sda {

bool kv_sorted(const VersionTree& tree, std::span<const Entry> entries) {
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const Entry& a = entries[i - 1];
    const Entry& b = entries[i];
    auto c = kv_compare(tree, a.key, a.version, b.key, b.version);
    if (c == std::strong_ordering::greater) return false;
    if (c == std::strong_ordering::equal && !a.is_slot()) return false;
  }
  return true;
}

void SdaConfig::validate() const {
  if (sample_rate < 2)
    throw std::invalid_argument("sample_rate must be at least 2");
  if (redundant_fp_spacing <= 8)
    throw std::invalid_argument("redundant_fp_spacing must exceed 8");
}

}  // namespace sda
