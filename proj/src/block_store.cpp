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

#include "sda/block_store.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace sda {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'A', '1'};
constexpr std::size_t kHeaderBytes = 32;
// Slot payload on the wire: (present, index) twice.
constexpr std::size_t kHintWireBytes = 2 * (1 + 8);

void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(char((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(char((x >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t x = 0;
  for (int i = 3; i >= 0; --i) x = (x << 8) | std::uint8_t(s[at + i]);
  return x;
}

std::uint64_t get_u64(const std::string& s, std::size_t at) {
  std::uint64_t x = 0;
  for (int i = 7; i >= 0; --i) x = (x << 8) | std::uint8_t(s[at + i]);
  return x;
}

}  // namespace

// ---- ArrayIterator ----

const Entry* ArrayIterator::peek() {
  if (pos_ >= arr_->records.size()) return nullptr;
  std::size_t blk = pos_ / std::size_t(dev_->block_size());
  if (blk != charged_block_) {
    dev_->charge_iter_block(*arr_);
    charged_block_ = blk;
  }
  return &arr_->records[pos_];
}

void ArrayIterator::advance() {
  if (pos_ >= arr_->records.size())
    throw std::logic_error("ArrayIterator: advance past end");
  ++pos_;
}

bool ArrayIterator::at_end() const { return pos_ >= arr_->records.size(); }

// ---- BlockDevice ----

BlockDevice::BlockDevice(const VersionTree& tree, int block_size_entries,
                         std::size_t staging_limit, std::size_t key_size,
                         std::size_t value_size)
    : tree_(&tree),
      block_size_(block_size_entries),
      staging_limit_(staging_limit),
      key_size_(key_size),
      value_size_(value_size) {
  if (block_size_entries < 1)
    throw std::invalid_argument("block size must be at least 1 entry");
  if (key_size < 1) throw std::invalid_argument("key size must be positive");
  if (value_size < 1)
    throw std::invalid_argument("value size must be positive");
}

std::size_t BlockDevice::record_bytes() const {
  // key, dfs ordinal, payload tag, payload region.
  return key_size_ + 8 + 1 + std::max(value_size_, kHintWireBytes);
}

std::uint64_t BlockDevice::block_bytes() const {
  return std::uint64_t(block_size_) * record_bytes();
}

StoredArray& BlockDevice::arr_mut(ArrayId id) {
  auto it = arrays_.find(id);
  if (it == arrays_.end()) throw std::invalid_argument("unknown array id");
  return it->second;
}

const StoredArray& BlockDevice::array(ArrayId id) const {
  auto it = arrays_.find(id);
  if (it == arrays_.end()) throw std::invalid_argument("unknown array id");
  return it->second;
}

bool BlockDevice::exists(ArrayId id) const { return arrays_.count(id) != 0; }

bool BlockDevice::alive(ArrayId id) const {
  auto it = arrays_.find(id);
  return it != arrays_.end() && it->second.alive;
}

std::vector<ArrayId> BlockDevice::alive_ids() const {
  std::vector<ArrayId> out;
  for (const auto& [id, a] : arrays_)
    if (a.alive) out.push_back(id);
  return out;
}

void BlockDevice::charge_probe(const StoredArray& a, std::size_t index) const {
  if (a.staged) return;
  std::pair<ArrayId, std::size_t> blk{a.id, index / std::size_t(block_size_)};
  if (last_probe_ == blk) return;
  last_probe_ = blk;
  ++io_.reads;
  io_.bytes_read += block_bytes();
}

void BlockDevice::charge_iter_block(const StoredArray& a) const {
  if (a.staged) return;
  ++io_.reads;
  io_.bytes_read += block_bytes();
}

void BlockDevice::charge_pass(const StoredArray& a, bool write) {
  if (a.staged) return;
  std::uint64_t blocks =
      (a.records.size() + block_size_ - 1) / std::size_t(block_size_);
  if (write) {
    io_.writes += blocks;
    io_.bytes_written += blocks * block_bytes();
  } else {
    io_.reads += blocks;
    io_.bytes_read += blocks * block_bytes();
  }
}

ArrayId BlockDevice::write_array(std::vector<Entry> records,
                                 std::vector<VersionId> valid, int level,
                                 ArrayKind kind, ArrayId next) {
  if (records.empty())
    throw std::invalid_argument("write_array: empty entry set");
  if (level < 0) throw std::invalid_argument("write_array: negative level");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Entry& e = records[i];
    if (e.key.size() != key_size_)
      throw std::invalid_argument("write_array: key width mismatch");
    if (e.is_value() && e.value().size() != value_size_)
      throw std::invalid_argument("write_array: value width mismatch");
    if (e.is_slot()) {
      // A slot mirrors the data record that follows it.
      if (i + 1 >= records.size() || records[i + 1].is_slot() ||
          records[i + 1].key != e.key || records[i + 1].version != e.version)
        throw std::invalid_argument(
            "write_array: slot does not mirror its successor");
    }
  }
  if (!kv_sorted(*tree_, records))
    throw std::invalid_argument("write_array: records out of kv order");

  // Range-check forward pointers aimed at the declared next array. Other
  // targets are legitimate (inherited pointers) but unverifiable here; the
  // target may already be gone.
  const StoredArray* next_arr = nullptr;
  if (next != kNoArray) {
    auto it = arrays_.find(next);
    if (it != arrays_.end()) next_arr = &it->second;
  }
  for (const Entry& e : records) {
    if (!e.is_fp()) continue;
    if (e.fp().target == next && next_arr &&
        e.fp().index >= next_arr->records.size())
      throw std::invalid_argument(
          "write_array: forward pointer out of range of next_array");
  }

  std::sort(valid.begin(), valid.end(), [&](VersionId a, VersionId b) {
    return tree_->dfs(a) < tree_->dfs(b);
  });

  std::vector<Entry> data;
  data.reserve(records.size());
  for (const Entry& e : records)
    if (!e.is_slot()) data.push_back(e);
  if (data.empty())
    throw std::invalid_argument("write_array: no data records");

  StoredArray a;
  {
    StatsContext ctx(*tree_, data);
    ValidStats vs(ctx, valid);
    if (kind == ArrayKind::data)
      SDA_CHECK(vs.is_stratum(), "data array valid set must be a stratum");
    for (VersionId v : vs.versions()) {
      a.stats[v] = VersionCounts{vs.lead(v), vs.live(v), vs.lead_below(v)};
      a.lambda_t[v] = std::uint64_t(vs.lambda_subtree_size(v));
    }
    if (vs.is_stratum()) {
      VersionId p = vs.stratum_parent();
      a.parent_live = p.valid() ? std::uint64_t(ctx.live_at(p)) : 0;
    }
  }
  {
    std::set<std::uint32_t> seen;
    for (const Entry& e : data) seen.insert(tree_->dfs(e.version));
    a.entry_versions.reserve(seen.size());
    for (std::uint32_t d : seen)
      a.entry_versions.push_back(tree_->version_at_dfs(d));
  }

  a.id = ArrayId{next_id_++};
  a.level = level;
  a.kind = kind;
  a.records = std::move(records);
  a.valid = std::move(valid);
  a.next = next;
  a.data_count = data.size();
  a.staged = a.records.size() <= staging_limit_;

  io_.live_entries += std::int64_t(a.records.size());
  io_.total_entries_ever += a.records.size();
  charge_pass(a, /*write=*/true);
  if (dir_ && !a.staged) write_file(a);

  ArrayId id = a.id;
  arrays_.emplace(id, std::move(a));
  return id;
}

void BlockDevice::fill_redundant_fps(ArrayId id) {
  StoredArray& a = arr_mut(id);
  if (!a.alive) throw std::invalid_argument("fill_redundant_fps: dead array");

  // Nearest real FP (aimed at next_array) at an index < / > each slot, in
  // two sweeps.
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    if (a.records[i].is_slot()) slots.push_back(i);

  std::optional<ForwardPointer> last;
  std::size_t s = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    while (s < slots.size() && slots[s] == i) {
      std::get<RedundantHint>(a.records[i].payload).left = last;
      ++s;
    }
    const Entry& e = a.records[i];
    if (e.is_fp() && e.fp().target == a.next) last = e.fp();
  }
  last.reset();
  s = slots.size();
  for (std::size_t i = a.records.size(); i-- > 0;) {
    const Entry& e = a.records[i];
    if (e.is_fp() && e.fp().target == a.next) last = e.fp();
    while (s > 0 && slots[s - 1] == i) {
      std::get<RedundantHint>(a.records[i].payload).right = last;
      --s;
    }
  }

  charge_pass(a, /*write=*/false);
  charge_pass(a, /*write=*/true);
  if (dir_ && !a.staged) write_file(a);
}

SearchResult BlockDevice::search(ArrayId id, const std::string& key,
                                 VersionId version,
                                 std::optional<std::size_t> lb,
                                 std::optional<std::size_t> ub,
                                 bool want_fps) const {
  const StoredArray& a = array(id);
  if (!a.alive) throw std::invalid_argument("search: array is not alive");
  std::size_t n = a.records.size();
  std::size_t lo = lb.value_or(0);
  std::size_t hi = ub.value_or(n);
  if (lo > hi || hi > n) throw std::invalid_argument("search: invalid bounds");

  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    charge_probe(a, mid);
    const Entry& e = a.records[mid];
    if (kv_compare(*tree_, e.key, e.version, key, version) < 0)
      lo = mid + 1;
    else
      hi = mid;
  }

  SearchResult r;
  r.loc = lo;
  if (want_fps) {
    r.fp_below = scan_for_fp(a, lo, /*upward=*/false);
    r.fp_above = scan_for_fp(a, lo, /*upward=*/true);
  }
  return r;
}

std::optional<ForwardPointer> BlockDevice::scan_for_fp(const StoredArray& a,
                                                       std::size_t from,
                                                       bool upward) const {
  // Stops at the first pointer-bearing record: a real FP answers directly,
  // a slot answers through its precomputed hint (covering everything past
  // itself in the scan direction). Slot spacing keeps this short once the
  // fill pass has run.
  if (!upward) {
    for (std::size_t i = from; i-- > 0;) {
      charge_probe(a, i);
      const Entry& e = a.records[i];
      if (e.is_fp()) return e.fp();
      if (e.is_slot()) return e.hint().left;
    }
    return std::nullopt;
  }
  for (std::size_t i = from; i < a.records.size(); ++i) {
    charge_probe(a, i);
    const Entry& e = a.records[i];
    if (e.is_fp()) return e.fp();
    if (e.is_slot()) return e.hint().right;
  }
  return std::nullopt;
}

ArrayIterator BlockDevice::iterate(ArrayId id, std::size_t loc) const {
  const StoredArray& a = array(id);
  if (!a.alive) throw std::invalid_argument("iterate: array is not alive");
  if (loc > a.records.size())
    throw std::invalid_argument("iterate: position out of range");
  return ArrayIterator(this, &a, loc);
}

void BlockDevice::mark_dead(ArrayId id) {
  StoredArray& a = arr_mut(id);
  if (!a.alive) throw std::invalid_argument("mark_dead: array already dead");
  a.alive = false;
}

void BlockDevice::free_array(ArrayId id) {
  auto it = arrays_.find(id);
  if (it == arrays_.end())
    throw std::invalid_argument("free_array: unknown array id");
  if (it->second.alive)
    throw std::invalid_argument("free_array: array is still alive");
  io_.live_entries -= std::int64_t(it->second.records.size());
  if (dir_ && !it->second.staged) {
    std::error_code ec;
    std::filesystem::remove(array_path(id), ec);
  }
  arrays_.erase(it);
}

void BlockDevice::drop_valid(ArrayId id, VersionId v) {
  StoredArray& a = arr_mut(id);
  auto it = std::find(a.valid.begin(), a.valid.end(), v);
  if (it == a.valid.end())
    throw std::invalid_argument("drop_valid: version not in valid set");
  a.valid.erase(it);
  a.stats.erase(v);
  a.lambda_t.erase(v);
}

void BlockDevice::add_valid(ArrayId id, VersionId v) {
  StoredArray& a = arr_mut(id);
  if (!tree_->exists(v))
    throw std::invalid_argument("add_valid: unknown version");
  std::uint32_t d = tree_->dfs(v);
  auto it = std::lower_bound(
      a.valid.begin(), a.valid.end(), d,
      [&](VersionId x, std::uint32_t dd) { return tree_->dfs(x) < dd; });
  if (it != a.valid.end() && *it == v)
    throw std::invalid_argument("add_valid: version already in valid set");
  a.valid.insert(it, v);
}

void BlockDevice::set_sampled_by(ArrayId id, ArrayId sample) {
  if (sample != kNoArray && !exists(sample))
    throw std::invalid_argument("set_sampled_by: unknown sample array");
  arr_mut(id).sampled_by = sample;
}

// ---- node blobs ----

ArrayId BlockDevice::alloc_node() {
  ArrayId id{next_id_++};
  nodes_.insert(id);
  io_.live_entries += block_size_;
  io_.total_entries_ever += std::uint64_t(block_size_);
  return id;
}

void BlockDevice::node_write(ArrayId id) {
  if (!nodes_.count(id))
    throw std::invalid_argument("node_write: unknown node");
  ++io_.writes;
  io_.bytes_written += block_bytes();
}

void BlockDevice::node_read(ArrayId id) const {
  if (!nodes_.count(id)) throw std::invalid_argument("node_read: unknown node");
  ++io_.reads;
  io_.bytes_read += block_bytes();
}

void BlockDevice::node_free(ArrayId id) {
  if (nodes_.erase(id) == 0)
    throw std::invalid_argument("node_free: unknown node");
  io_.live_entries -= block_size_;
}

// ---- file backing ----

void BlockDevice::enable_file_backing(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  dir_ = dir;
}

std::filesystem::path BlockDevice::array_path(ArrayId id) const {
  if (!dir_) throw std::logic_error("file backing not enabled");
  char name[32];
  std::snprintf(name, sizeof name, "arr_%010llu.sda",
                static_cast<unsigned long long>(id.value));
  return *dir_ / name;
}

void BlockDevice::write_file(const StoredArray& a) const {
  std::string blob;
  blob.reserve(kHeaderBytes + a.records.size() * record_bytes());
  blob.append(kMagic, 4);
  put_u32(blob, std::uint32_t(a.records.size()));
  put_u32(blob, std::uint32_t(key_size_));
  put_u32(blob, std::uint32_t(value_size_));
  blob.push_back(char(a.kind));
  blob.resize(kHeaderBytes, '\0');

  const std::size_t payload_w = std::max(value_size_, kHintWireBytes);
  for (const Entry& e : a.records) {
    blob.append(e.key);
    put_u64(blob, tree_->dfs(e.version));
    blob.push_back(char(e.payload.index()));
    const std::size_t base = blob.size();
    if (e.is_value()) {
      blob.append(e.value());
    } else if (e.is_fp()) {
      // Only pointers into the declared next array survive on disk.
      put_u64(blob, e.fp().target == a.next ? e.fp().index : kFpDeadIndex);
    } else {
      const RedundantHint& h = e.hint();
      blob.push_back(h.left ? 1 : 0);
      put_u64(blob, h.left ? h.left->index : 0);
      blob.push_back(h.right ? 1 : 0);
      put_u64(blob, h.right ? h.right->index : 0);
    }
    blob.resize(base + payload_w, '\0');
  }

  std::ofstream out(array_path(a.id), std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open array file for writing");
  out.write(blob.data(), std::streamsize(blob.size()));
  if (!out) throw std::runtime_error("short write to array file");
}

BlockDevice::LoadedArray BlockDevice::load_array(
    const std::filesystem::path& path) const {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::invalid_argument("load_array: cannot open " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());

  if (blob.size() < kHeaderBytes || std::memcmp(blob.data(), kMagic, 4) != 0)
    throw std::invalid_argument("load_array: bad magic");
  const std::uint32_t n = get_u32(blob, 4);
  const std::size_t ks = get_u32(blob, 8);
  const std::size_t vs = get_u32(blob, 12);
  const std::uint8_t kind = std::uint8_t(blob[16]);
  if (kind > 1) throw std::invalid_argument("load_array: bad array kind");

  const std::size_t payload_w = std::max(vs, kHintWireBytes);
  const std::size_t rec_w = ks + 8 + 1 + payload_w;
  if (blob.size() != kHeaderBytes + std::size_t(n) * rec_w)
    throw std::invalid_argument("load_array: truncated file");

  LoadedArray out;
  out.kind = ArrayKind(kind);
  out.records.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = kHeaderBytes + std::size_t(i) * rec_w;
    Entry e;
    e.key = blob.substr(at, ks);
    const std::uint64_t dfs = get_u64(blob, at + ks);
    e.version = tree_->version_at_dfs(std::uint32_t(dfs));
    const std::uint8_t tag = std::uint8_t(blob[at + ks + 8]);
    const std::size_t pay = at + ks + 9;
    switch (tag) {
      case 0:
        e.payload = blob.substr(pay, vs);
        break;
      case 1:
        e.payload = ForwardPointer{kNoArray, get_u64(blob, pay)};
        break;
      case 2: {
        RedundantHint h;
        if (blob[pay]) h.left = ForwardPointer{kNoArray, get_u64(blob, pay + 1)};
        if (blob[pay + 9])
          h.right = ForwardPointer{kNoArray, get_u64(blob, pay + 10)};
        e.payload = h;
        break;
      }
      default:
        throw std::invalid_argument("load_array: bad payload tag");
    }
    out.records.push_back(std::move(e));
  }
  return out;
}

}  // namespace sda
