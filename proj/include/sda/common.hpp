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
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace sda {

// Identifies a version in the version tree. Ids are dense, assigned in
// creation order, and never change; the DFS labels attached to them do.
struct VersionId {
  std::uint32_t value = std::numeric_limits<std::uint32_t>::max();

  constexpr bool valid() const {
    return value != std::numeric_limits<std::uint32_t>::max();
  }
  friend constexpr bool operator==(VersionId, VersionId) = default;
  friend constexpr auto operator<=>(VersionId, VersionId) = default;
};

inline constexpr VersionId kNoVersion{};

// Identifies a stored array on the block device.
struct ArrayId {
  std::uint64_t value = std::numeric_limits<std::uint64_t>::max();

  constexpr bool valid() const {
    return value != std::numeric_limits<std::uint64_t>::max();
  }
  friend constexpr bool operator==(ArrayId, ArrayId) = default;
  friend constexpr auto operator<=>(ArrayId, ArrayId) = default;
};

inline constexpr ArrayId kNoArray{};

// Thrown by the paranoid checker when a structural invariant is violated.
// Carries enough context to locate the offending array.
class InvariantViolation : public std::logic_error {
 public:
  explicit InvariantViolation(const std::string& what)
      : std::logic_error(what) {}
};

namespace detail {
[[noreturn]] inline void check_failed(const char* file, int line,
                                      const char* expr,
                                      const std::string& msg) {
  throw InvariantViolation(std::string(file) + ":" + std::to_string(line) +
                           ": check `" + expr + "` failed: " + msg);
}
}  // namespace detail

}  // namespace sda

// Structural invariant check, always compiled in; failures throw
// InvariantViolation. Plain assert() is reserved for states that are
// unreachable by construction.
#define SDA_CHECK(cond, msg)                                          \
  do {                                                                \
    if (!(cond))                                                      \
      ::sda::detail::check_failed(__FILE__, __LINE__, #cond, (msg)); \
  } while (0)

template <>
struct std::hash<sda::VersionId> {
  std::size_t operator()(sda::VersionId v) const noexcept {
    return std::hash<std::uint32_t>{}(v.value);
  }
};

template <>
struct std::hash<sda::ArrayId> {
  std::size_t operator()(sda::ArrayId a) const noexcept {
    return std::hash<std::uint64_t>{}(a.value);
  }
};
