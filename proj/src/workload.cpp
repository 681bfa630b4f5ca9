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

#include "sda/workload.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sda {

namespace {

std::uint64_t pow10_capped(std::size_t digits) {
  std::uint64_t m = 1;
  for (std::size_t i = 0; i < digits && i < 18; ++i) m *= 10;
  return m;
}

// tag character followed by a zero padded decimal, exactly `width` bytes.
std::string fixed_field(char tag, std::size_t width, std::uint64_t x) {
  std::string s(width, '0');
  s[0] = tag;
  for (std::size_t i = width; x != 0 && i-- > 1;) {
    s[i] = static_cast<char>('0' + x % 10);
    x /= 10;
  }
  return s;
}

std::string describe(const std::optional<std::pair<Value, VersionId>>& r) {
  if (!r) return "none";
  return "(" + r->first.substr(0, 12) + "..., v" +
         std::to_string(r->second.value) + ")";
}

class SdaDict final : public Dictionary {
 public:
  SdaDict(VersionTree& tree, BlockDevice& dev, SdaConfig cfg)
      : engine_(tree, dev, cfg) {}

  VersionId clone(VersionId parent) override { return engine_.clone(parent); }
  void update(const std::string& key, const Value& value,
              VersionId version) override {
    engine_.update(key, value, version);
  }
  std::optional<std::pair<Value, VersionId>> point_query(
      const std::string& key, VersionId version) const override {
    return engine_.point_query(key, version);
  }
  std::vector<std::pair<std::string, Value>> range_query(
      const std::string& start_key, const std::string& end_key,
      VersionId version, std::size_t limit) const override {
    return engine_.range_query(start_key, end_key, version, limit);
  }
  std::uint64_t levels() const override {
    return static_cast<std::uint64_t>(engine_.top_level() + 1);
  }
  std::uint64_t arrays() const override { return engine_.array_count(); }
  std::string stats_text() const override { return engine_.stats_text(); }
  SdaEngine* sda() override { return &engine_; }

 private:
  SdaEngine engine_;
};

class CowDict final : public Dictionary {
 public:
  CowDict(VersionTree& tree, BlockDevice& dev, std::size_t cache_nodes)
      : bt_(tree, dev, cache_nodes) {}

  VersionId clone(VersionId parent) override { return bt_.clone(parent); }
  void update(const std::string& key, const Value& value,
              VersionId version) override {
    bt_.update(key, value, version);
  }
  std::optional<std::pair<Value, VersionId>> point_query(
      const std::string& key, VersionId version) const override {
    return bt_.point_query(key, version);
  }
  std::vector<std::pair<std::string, Value>> range_query(
      const std::string& start_key, const std::string& end_key,
      VersionId version, std::size_t limit) const override {
    return bt_.range_query(start_key, end_key, version, limit);
  }
  std::uint64_t levels() const override { return bt_.height(); }
  std::uint64_t arrays() const override { return bt_.node_count(); }
  std::string stats_text() const override {
    std::ostringstream os;
    os << "structure=cow-btree\n"
       << "nodes=" << bt_.node_count() << "\n"
       << "height=" << bt_.height() << "\n"
       << "fanout=" << bt_.fanout() << "\n";
    return os.str();
  }
  CowBTree* cow() override { return &bt_; }

 private:
  CowBTree bt_;
};

const WorkloadSpec& validated(const WorkloadSpec& spec) {
  spec.validate();
  return spec;
}

}  // namespace

void WorkloadSpec::validate() const {
  if (structure != "sda" && structure != "sda-nosplit" &&
      structure != "cow-btree")
    throw std::invalid_argument("unknown structure: " + structure);
  if (n_inserts == 0)
    throw std::invalid_argument("n_inserts must be positive");
  if (!(p_leaf_clone >= 0.0 && p_leaf_clone <= 1.0))
    throw std::invalid_argument("p_leaf_clone must be a probability");
  if (key_size < 8 || key_size > 64)
    throw std::invalid_argument("key_size out of range [8, 64]");
  if (value_size < 2)
    throw std::invalid_argument("value_size too small");
  if (block_size <= 0)
    throw std::invalid_argument("block_size must be positive");
  if (range_every != 0 && range_size == 0)
    throw std::invalid_argument("range_size must be positive");
  if (key_space > pow10_capped(key_size - 1))
    throw std::invalid_argument("key_space wider than the key renders");
}

void write_csv(const std::vector<MetricsRow>& rows, std::ostream& os) {
  os << "ops_done,reads,writes,bytes,live_entries,levels,arrays,elapsed\n";
  for (const MetricsRow& r : rows)
    os << r.ops_done << ',' << r.reads << ',' << r.writes << ',' << r.bytes
       << ',' << r.live_entries << ',' << r.levels << ',' << r.arrays << ','
       << r.elapsed << '\n';
}

std::unique_ptr<Dictionary> open_structure(const WorkloadSpec& spec,
                                           VersionTree& tree,
                                           BlockDevice& dev) {
  if (spec.structure == "sda" || spec.structure == "sda-nosplit") {
    SdaConfig cfg;
    cfg.version_split_enabled = spec.structure == "sda";
    cfg.paranoid = spec.paranoid;
    return std::make_unique<SdaDict>(tree, dev, cfg);
  }
  if (spec.structure == "cow-btree")
    return std::make_unique<CowDict>(tree, dev, spec.cache_nodes);
  throw std::invalid_argument("unknown structure: " + spec.structure);
}

WorkloadRunner::WorkloadRunner(const WorkloadSpec& spec, bool verify)
    : spec_(validated(spec)),
      verify_(verify),
      dev_(tree_, spec_.block_size, spec_.staging_entries, spec_.key_size,
           spec_.value_size),
      dict_(open_structure(spec_, tree_, dev_)),
      oracle_(verify ? std::make_unique<OracleStore>(tree_) : nullptr),
      rng_(spec_.seed) {
  VersionId v0 = tree_.create_root();
  leaves_.push_back(v0);
  all_.push_back(v0);
}

std::string WorkloadRunner::make_key(std::uint64_t draw) const {
  std::uint64_t span =
      spec_.key_space ? spec_.key_space : pow10_capped(spec_.key_size - 1);
  return fixed_field('k', spec_.key_size, draw % span);
}

std::string WorkloadRunner::make_value(std::uint64_t draw) const {
  return fixed_field('v', spec_.value_size,
                     draw % pow10_capped(spec_.value_size - 1));
}

std::string WorkloadRunner::key_floor() const {
  return fixed_field('k', spec_.key_size, 0);
}

std::string WorkloadRunner::key_ceil() const {
  return std::string(spec_.key_size, 'z');
}

VersionId WorkloadRunner::pick(const std::vector<VersionId>& from) {
  return from[rng_() % from.size()];
}

MetricsRow WorkloadRunner::snapshot(std::uint64_t ops) const {
  IoCounters io = dev_.io_counters();
  MetricsRow r;
  r.ops_done = ops;
  r.reads = io.reads;
  r.writes = io.writes;
  r.bytes = io.bytes_read + io.bytes_written;
  r.live_entries = static_cast<std::uint64_t>(io.live_entries);
  r.levels = dict_->levels();
  r.arrays = dict_->arrays();
  r.elapsed = io.reads + io.writes;
  return r;
}

bool WorkloadRunner::fail(std::string what) {
  divergence_ = "op " + std::to_string(op_) + ": " + std::move(what);
  return false;
}

void WorkloadRunner::do_clone() {
  double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  bool leaf_clone = u < spec_.p_leaf_clone;
  const std::vector<VersionId>& pool =
      (leaf_clone || internals_.empty()) ? leaves_ : internals_;
  VersionId parent = pick(pool);
  bool was_leaf = tree_.is_leaf(parent);
  VersionId child = dict_->clone(parent);
  if (was_leaf) {
    leaves_.erase(std::find(leaves_.begin(), leaves_.end(), parent));
    internals_.push_back(parent);
  }
  leaves_.push_back(child);
  all_.push_back(child);
}

bool WorkloadRunner::do_range() {
  VersionId v = pick(all_);
  std::string start = make_key(rng_());
  auto got = dict_->range_query(start, key_ceil(), v, spec_.range_size);
  if (!verify_) return true;
  auto want = oracle_->range_query(start, key_ceil(), v, spec_.range_size);
  if (got == want) return true;
  std::size_t i = 0;
  while (i < got.size() && i < want.size() && got[i] == want[i]) ++i;
  std::ostringstream os;
  os << "range v" << v.value << " start=" << start << ": got " << got.size()
     << " rows, oracle " << want.size() << ", first difference at " << i;
  return fail(os.str());
}

bool WorkloadRunner::do_point() {
  VersionId v = pick(all_);
  std::string key = make_key(rng_());
  auto got = dict_->point_query(key, v);
  if (!verify_) return true;
  auto want = oracle_->point_query(key, v);
  if (got == want) return true;
  return fail("point v" + std::to_string(v.value) + " key=" + key + ": got " +
              describe(got) + ", oracle " + describe(want));
}

bool WorkloadRunner::audit() {
  std::size_t step = std::max<std::size_t>(1, all_.size() / 16);
  std::vector<std::size_t> picks;
  for (std::size_t idx = 0; idx < all_.size(); idx += step)
    picks.push_back(idx);
  if (picks.back() != all_.size() - 1) picks.push_back(all_.size() - 1);
  for (std::size_t idx : picks) {
    VersionId v = all_[idx];
    auto got = dict_->range_query(key_floor(), key_ceil(), v,
                                  std::numeric_limits<std::size_t>::max());
    auto want = oracle_->range_query(key_floor(), key_ceil(), v,
                                     std::numeric_limits<std::size_t>::max());
    if (got != want) {
      std::ostringstream os;
      os << "audit v" << v.value << ": got " << got.size()
         << " rows, oracle " << want.size();
      return fail(os.str());
    }
  }
  return true;
}

bool WorkloadRunner::run() {
  if (op_ != 0) throw std::logic_error("workload runner is single shot");
  bool ok = true;
  for (std::uint64_t i = 1; ok && i <= spec_.n_inserts; ++i) {
    op_ = i;
    VersionId v = pick(leaves_);
    std::string key = make_key(rng_());
    std::string value = make_value(rng_());
    if (verify_ && i == spec_.fault_op) {
      // Negative control: the structure and the oracle disagree on the
      // value from here on; the immediate probe must notice.
      std::string bad = value;
      bad[0] = 'w';
      dict_->update(key, bad, v);
      oracle_->update(key, value, v);
      auto got = dict_->point_query(key, v);
      auto want = oracle_->point_query(key, v);
      if (got != want)
        ok = fail("fault probe key=" + key + ": got " + describe(got) +
                  ", oracle " + describe(want));
    } else {
      dict_->update(key, value, v);
      if (verify_) oracle_->update(key, value, v);
    }
    if (ok && spec_.clone_every && i % spec_.clone_every == 0) do_clone();
    if (ok && spec_.range_every && i % spec_.range_every == 0)
      ok = do_range();
    if (ok && spec_.point_every && i % spec_.point_every == 0)
      ok = do_point();
    if (spec_.report_every && i % spec_.report_every == 0)
      rows_.push_back(snapshot(i));
  }
  // The audit below reads through the structure; snapshot first so its
  // traffic stays out of the metrics.
  if (rows_.empty() || rows_.back().ops_done != op_)
    rows_.push_back(snapshot(op_));
  if (ok && verify_) ok = audit();
  return ok;
}

}  // namespace sda
