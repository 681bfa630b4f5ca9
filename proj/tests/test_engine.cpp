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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sda/block_store.hpp"
#include "sda/engine.hpp"
#include "sda/oracle.hpp"
#include "sda/version_tree.hpp"

using sda::BlockDevice;
using sda::OracleStore;
using sda::SdaConfig;
using sda::SdaEngine;
using sda::VersionId;
using sda::VersionTree;

namespace {

constexpr std::size_t kKey = 6;
constexpr std::size_t kVal = 4;

std::string key_of(std::uint64_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "k%05llu",
                static_cast<unsigned long long>(i));
  return buf;
}

std::string val_of(std::uint64_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "v%03llu",
                static_cast<unsigned long long>(i % 1000));
  return buf;
}

struct Rig {
  VersionTree tree;
  BlockDevice dev;
  SdaEngine eng;

  explicit Rig(SdaConfig cfg = {}, int block = 16, std::size_t staging = 32)
      : dev(tree, block, staging, kKey, kVal), eng(tree, dev, cfg) {}
};

// Mixed random run compared against the oracle op by op.
void oracle_duel(SdaConfig cfg, int block, std::size_t staging, int n_ops,
                 std::uint64_t key_space, std::uint64_t seed) {
  Rig rig(cfg, block, staging);
  OracleStore oracle(rig.tree);
  std::mt19937_64 rng(seed);

  std::vector<VersionId> leaves{rig.tree.create_root()};
  std::vector<VersionId> all = leaves;

  for (int i = 0; i < n_ops; ++i) {
    std::uint64_t roll = rng() % 100;
    if (roll < 4) {
      VersionId parent = all[rng() % all.size()];
      bool was_leaf = rig.tree.is_leaf(parent);
      VersionId child = rig.eng.clone(parent);
      if (was_leaf)
        leaves.erase(std::find(leaves.begin(), leaves.end(), parent));
      leaves.push_back(child);
      all.push_back(child);
    } else if (roll < 72) {
      VersionId v = leaves[rng() % leaves.size()];
      std::string key = key_of(rng() % key_space);
      std::string value = val_of(rng());
      rig.eng.update(key, value, v);
      oracle.update(key, value, v);
    } else if (roll < 90) {
      VersionId v = all[rng() % all.size()];
      std::string key = key_of(rng() % key_space);
      auto got = rig.eng.point_query(key, v);
      auto want = oracle.point_query(key, v);
      REQUIRE(got == want);
    } else {
      VersionId v = all[rng() % all.size()];
      std::string lo = key_of(rng() % key_space);
      std::string hi = key_of(rng() % key_space);
      if (lo > hi) std::swap(lo, hi);
      std::size_t limit = 1 + rng() % 40;
      auto got = rig.eng.range_query(lo, hi, v, limit);
      auto want = oracle.range_query(lo, hi, v, limit);
      REQUIRE(got == want);
    }
  }

  // Full sweep at every version at the end.
  for (VersionId v : all) {
    auto got = rig.eng.range_query(key_of(0), key_of(key_space), v);
    auto want = oracle.range_query(key_of(0), key_of(key_space), v);
    REQUIRE(got == want);
  }
  rig.eng.check_invariants();
}

}  // namespace

TEST_CASE("empty engine answers empty") {
  Rig rig;
  VersionId r = rig.tree.create_root();
  CHECK(rig.eng.top_level() == -1);
  CHECK(rig.eng.array_count() == 0);
  CHECK_FALSE(rig.eng.point_query(key_of(1), r).has_value());
  CHECK(rig.eng.range_query(key_of(0), key_of(9), r).empty());
  rig.eng.check_invariants();
}

TEST_CASE("update validation") {
  Rig rig;
  VersionId r = rig.tree.create_root();
  VersionId c = rig.eng.clone(r);

  CHECK_THROWS_AS(rig.eng.update(key_of(1), val_of(1), VersionId{777}),
                  std::invalid_argument);
  // r has a child now, only leaves take writes.
  CHECK_THROWS_AS(rig.eng.update(key_of(1), val_of(1), r),
                  std::invalid_argument);
  CHECK_THROWS_AS(rig.eng.update("short", val_of(1), c),
                  std::invalid_argument);
  CHECK_THROWS_AS(rig.eng.update(key_of(1), "x", c), std::invalid_argument);
  CHECK_THROWS_AS(rig.eng.range_query(key_of(5), key_of(1), c),
                  std::invalid_argument);
}

TEST_CASE("closest-ancestor visibility across a clone") {
  Rig rig;
  VersionId r = rig.tree.create_root();
  rig.eng.update(key_of(1), val_of(10), r);
  rig.eng.update(key_of(2), val_of(20), r);

  VersionId c = rig.eng.clone(r);
  rig.eng.update(key_of(1), val_of(11), c);

  auto at_r = rig.eng.point_query(key_of(1), r);
  REQUIRE(at_r.has_value());
  CHECK(at_r->first == val_of(10));
  CHECK(at_r->second == r);

  auto at_c = rig.eng.point_query(key_of(1), c);
  REQUIRE(at_c.has_value());
  CHECK(at_c->first == val_of(11));
  CHECK(at_c->second == c);

  // The untouched key shows through from the parent.
  auto inherited = rig.eng.point_query(key_of(2), c);
  REQUIRE(inherited.has_value());
  CHECK(inherited->first == val_of(20));
  CHECK(inherited->second == r);

  auto range = rig.eng.range_query(key_of(0), key_of(9), c);
  REQUIRE(range.size() == 2);
  CHECK(range[0].first == key_of(1));
  CHECK(range[0].second == val_of(11));
  CHECK(range[1].second == val_of(20));

  CHECK(rig.eng.range_query(key_of(0), key_of(9), c, 1).size() == 1);
}

TEST_CASE("later writes win within one version") {
  Rig rig;
  VersionId r = rig.tree.create_root();
  rig.eng.update(key_of(3), val_of(1), r);
  rig.eng.update(key_of(3), val_of(2), r);
  auto got = rig.eng.point_query(key_of(3), r);
  REQUIRE(got.has_value());
  CHECK(got->first == val_of(2));
}

TEST_CASE("clone issues no device traffic") {
  Rig rig;
  VersionId v = rig.tree.create_root();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i)
    rig.eng.update(key_of(rng() % 64), val_of(rng()), v);

  auto before = rig.dev.io_counters();
  VersionId child = rig.eng.clone(v);
  auto after = rig.dev.io_counters();
  CHECK(after.reads == before.reads);
  CHECK(after.writes == before.writes);
  CHECK(after.bytes_read == before.bytes_read);
  CHECK(after.bytes_written == before.bytes_written);

  // The child sees the parent's data immediately.
  CHECK(rig.eng.point_query(key_of(1), child) ==
        rig.eng.point_query(key_of(1), v));
}

TEST_CASE("pipeline counters move on a busy run") {
  SdaConfig cfg;
  cfg.paranoid = true;
  Rig rig(cfg, /*block=*/8, /*staging=*/8);
  VersionId v = rig.tree.create_root();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 600; ++i)
    rig.eng.update(key_of(rng() % 40), val_of(rng()), v);

  const auto& c = rig.eng.counters();
  CHECK(c.updates == 600);
  CHECK(c.merges > 0);
  CHECK(c.promotions > 0);
  CHECK(c.split_calls > 0);
  CHECK(rig.eng.top_level() >= 3);
  CHECK(rig.eng.registered_at(rig.eng.top_level(), v) != sda::kNoArray);
  rig.eng.check_invariants();
}

TEST_CASE("oracle equivalence: default configuration") {
  oracle_duel(SdaConfig{}, 16, 32, 2500, 400, 1001);
}

TEST_CASE("oracle equivalence: paranoid, tiny blocks, narrow keys") {
  SdaConfig cfg;
  cfg.paranoid = true;
  oracle_duel(cfg, 4, 4, 1200, 48, 1002);
}

TEST_CASE("oracle equivalence: wide key space, bigger staging") {
  SdaConfig cfg;
  cfg.sample_rate = 4;
  cfg.redundant_fp_spacing = 9;
  oracle_duel(cfg, 32, 128, 2500, 20000, 1003);
}

TEST_CASE("oracle equivalence: splitting disabled") {
  SdaConfig cfg;
  cfg.version_split_enabled = false;
  oracle_duel(cfg, 16, 32, 2000, 300, 1004);
}

TEST_CASE("file backing leaves loadable arrays behind") {
  auto dir = std::filesystem::temp_directory_path() / "sda_engine_test";
  std::filesystem::remove_all(dir);

  Rig rig(SdaConfig{}, /*block=*/8, /*staging=*/8);
  rig.dev.enable_file_backing(dir);
  VersionId v = rig.tree.create_root();
  std::mt19937_64 rng(9);
  for (int i = 0; i < 400; ++i)
    rig.eng.update(key_of(rng() % 64), val_of(rng()), v);

  std::size_t on_disk = 0;
  for (sda::ArrayId id : rig.dev.alive_ids()) {
    const auto& arr = rig.dev.array(id);
    if (arr.staged) continue;
    ++on_disk;
    auto loaded = rig.dev.load_array(rig.dev.array_path(id));
    CHECK(loaded.kind == arr.kind);
    REQUIRE(loaded.records.size() == arr.records.size());
    for (std::size_t i = 0; i < loaded.records.size(); ++i) {
      CHECK(loaded.records[i].key == arr.records[i].key);
      CHECK(loaded.records[i].version == arr.records[i].version);
    }
  }
  CHECK(on_disk > 0);
  std::filesystem::remove_all(dir);
}
