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

#include "sda/engine.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace sda {

namespace {

// Paranoid full sweeps run every this many engine operations.
constexpr std::uint64_t kSweepEvery = 4096;

const std::set<ArrayId> kNoExclusions;

}  // namespace

SdaEngine::SdaEngine(VersionTree& tree, BlockDevice& dev, SdaConfig cfg)
    : tree_(&tree), dev_(&dev), cfg_(cfg) {
  cfg_.validate();
  SDA_CHECK(&dev.tree() == &tree, "device is bound to a different version tree");
}

void SdaEngine::ensure_levels(int level) {
  while (static_cast<int>(levels_.size()) <= level) levels_.emplace_back();
}

void SdaEngine::register_at(int level, VersionId v, ArrayId id) {
  auto [it, fresh] = levels_[level].reg.emplace(v, id);
  SDA_CHECK(fresh, "version already registered at this level");
  (void)it;
}

VersionId SdaEngine::clone(VersionId parent) {
  IoCounters before = dev_->io_counters();
  VersionId child = tree_->clone(parent);
  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    auto it = levels_[l].reg.find(parent);
    if (it == levels_[l].reg.end()) continue;
    dev_->add_valid(it->second, child);
    register_at(l, child, it->second);
  }
  IoCounters after = dev_->io_counters();
  SDA_CHECK(after.reads == before.reads && after.writes == before.writes,
            "clone must not touch the device");
  ++counters_.clones;
  ++ops_since_sweep_;
  maybe_sweep();
  return child;
}

void SdaEngine::update(const std::string& key, const Value& value,
                       VersionId version) {
  if (!tree_->exists(version))
    throw std::invalid_argument("update: unknown version");
  if (!tree_->is_leaf(version))
    throw std::invalid_argument("update: version is not a leaf");
  if (key.size() != dev_->key_size())
    throw std::invalid_argument("update: key width mismatch");
  if (value.size() != dev_->value_size())
    throw std::invalid_argument("update: value width mismatch");
  Candidate c;
  c.entries.push_back(Entry{key, version, value});
  c.versions.push_back(version);
  c.orphan = version;
  promote(std::move(c), 0);
  ++counters_.updates;
  ++ops_since_sweep_;
  maybe_sweep();
}

// ---- promotion / merge pipeline ----

void SdaEngine::promote(Candidate c, int level) {
  SDA_CHECK(level <= 60, "level out of range");
  ensure_levels(level);
  ++counters_.promotions;
  if (!cfg_.version_split_enabled) {
    merge_nosplit(std::move(c), level);
    return;
  }
  TargetPlan plan = plan_targets(c.versions, c.orphan, c.next_hint, level);
  if (plan.absorb.size() > 1) ++counters_.multi_target_merges;
  std::set<ArrayId> absorbed(plan.absorb.begin(), plan.absorb.end());
  assert_promotion(c, level, absorbed);
  merge_split(std::move(c), plan, level);
}

SdaEngine::TargetPlan SdaEngine::plan_targets(
    const std::vector<VersionId>& versions, VersionId lookup_orphan,
    ArrayId next_hint, int level) const {
  const Level& lv = levels_[level];
  TargetPlan plan;
  // Only data arrays carry source content; a sample registration is a stale
  // mirror of a higher level and is shed rather than merged (its pointers
  // would masquerade as ancestor keys and corrupt promotion statistics).
  // Rule 1: the data array registered to the promoted orphan.
  if (auto it = lv.reg.find(lookup_orphan);
      it != lv.reg.end() && dev_->array(it->second).kind == ArrayKind::data) {
    plan.primary = it->second;
  } else if (next_hint.valid() && dev_->alive(next_hint) &&
             dev_->array(next_hint).level == level &&
             dev_->array(next_hint).kind == ArrayKind::data) {
    // Rule 2: the candidate's next-array hint, when it sits here.
    plan.primary = next_hint;
  }
  // Every other data array registered to a candidate version must join the
  // merge or the level would end up with two arrays valid for one version.
  std::set<ArrayId> extra;
  for (VersionId v : versions) {
    auto it = lv.reg.find(v);
    if (it == lv.reg.end() || it->second == plan.primary) continue;
    if (dev_->array(it->second).kind == ArrayKind::data)
      extra.insert(it->second);
  }
  if (plan.primary.valid()) plan.absorb.push_back(plan.primary);
  plan.absorb.insert(plan.absorb.end(), extra.begin(), extra.end());
  return plan;
}

void SdaEngine::assert_promotion(const Candidate& c, int level,
                                 const std::set<ArrayId>& absorbed) const {
  StatsContext ctx(*tree_, c.entries);
  ValidStats vs(ctx, c.versions);
  SDA_CHECK(vs.orphans().size() == 1 && vs.orphans().front() == c.orphan,
            "candidate must have its orphan as unique minimal version");
  SDA_CHECK(vs.lead(c.orphan) > 0, "candidate orphan has no lead");
  std::int64_t m = std::int64_t{1} << level;
  std::int64_t n = ctx.entry_count();
  SDA_CHECK(n >= m, "candidate below the minimum size for its level");
  SDA_CHECK(n <= 2 * m, "candidate above the maximum size for its level");
  VersionId p = tree_->parent(c.orphan);
  if (p.valid())
    SDA_CHECK(3 * ctx.live_at(p) < 2 * m,
              "candidate too live at the stratum parent");
  SDA_CHECK(3 * vs.lead_below(c.orphan) >= 2 * m, "candidate short on lead");
  SDA_CHECK(3 * vs.live(c.orphan) >= m, "candidate short on liveness");
  SDA_CHECK(!entry_strictly_below(c.orphan, level, absorbed),
            "a level at or above the target already holds fresher content");
}

std::vector<std::vector<Entry>> SdaEngine::absorb_inputs(
    const Candidate& c, const TargetPlan& plan,
    std::vector<VersionId>& merged_versions) {
  std::vector<std::vector<Entry>> inputs;
  inputs.reserve(plan.absorb.size() + 1);
  inputs.push_back(c.entries);

  std::vector<VersionId> vv = c.versions;
  for (ArrayId id : plan.absorb) {
    const StoredArray& a = dev_->array(id);
    SDA_CHECK(a.alive, "merge target is not alive");
    std::vector<Entry> snap;
    snap.reserve(a.data_count);
    for (ArrayIterator it = dev_->iterate(id, 0); !it.at_end(); it.advance()) {
      const Entry& e = *it.peek();
      if (!e.is_slot()) snap.push_back(e);
    }
    inputs.push_back(std::move(snap));
    vv.insert(vv.end(), a.valid.begin(), a.valid.end());
  }
  std::sort(vv.begin(), vv.end(), [&](VersionId a, VersionId b) {
    return tree_->dfs(a) < tree_->dfs(b);
  });
  vv.erase(std::unique(vv.begin(), vv.end()), vv.end());
  merged_versions = std::move(vv);

  for (ArrayId id : plan.absorb) kill_chain(id);
  return inputs;
}

void SdaEngine::shed_stale_registrations(const std::vector<VersionId>& vv,
                                         int level) {
  // Any registration left at this level for a merged version is a stale
  // sample mirror (data arrays were absorbed); the new piece supersedes it.
  Level& lv = levels_[level];
  for (VersionId v : vv) {
    auto it = lv.reg.find(v);
    if (it == lv.reg.end()) continue;
    ArrayId sid = it->second;
    SDA_CHECK(dev_->array(sid).kind == ArrayKind::sample,
              "merged version still registered to a data array");
    lv.reg.erase(it);
    dev_->drop_valid(sid, v);
    if (dev_->array(sid).valid.empty()) {
      lv.arrays.erase(sid);
      dev_->mark_dead(sid);
      dev_->free_array(sid);
    }
  }
}

void SdaEngine::kill_chain(ArrayId id) {
  ArrayId walk = id;
  while (walk.valid() && dev_->exists(walk)) {
    const StoredArray& a = dev_->array(walk);
    if (!a.alive) break;
    ArrayId next_walk = a.sampled_by;
    Level& lv = levels_[a.level];
    for (VersionId v : a.valid) {
      auto it = lv.reg.find(v);
      SDA_CHECK(it != lv.reg.end() && it->second == walk,
                "registration out of sync with a dying array");
      lv.reg.erase(it);
    }
    lv.arrays.erase(walk);
    dev_->mark_dead(walk);
    dev_->free_array(walk);
    walk = next_walk;
  }
}

std::vector<Entry> SdaEngine::merge_dedup(
    const std::vector<std::vector<Entry>>& inputs) const {
  struct Tagged {
    const Entry* e;
    std::size_t pri;  // input index; the fresh candidate is 0
  };
  std::size_t total = 0;
  for (const auto& in : inputs) total += in.size();
  std::vector<Tagged> all;
  all.reserve(total);
  for (std::size_t p = 0; p < inputs.size(); ++p)
    for (const Entry& e : inputs[p]) all.push_back(Tagged{&e, p});
  std::sort(all.begin(), all.end(), [&](const Tagged& a, const Tagged& b) {
    auto c = kv_compare(*tree_, a.e->key, a.e->version, b.e->key, b.e->version);
    if (c != 0) return c < 0;
    return a.pri < b.pri;
  });
  // Duplicate (key, version) pairs collapse to one record. A value beats a
  // forward pointer (the pointer is just a locator for the same write);
  // among equals the freshest input wins, so a re-insert overwrites.
  std::vector<Entry> out;
  out.reserve(all.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    const Entry* winner = all[i].e;
    for (++j; j < all.size() && all[j].e->key == all[i].e->key &&
              all[j].e->version == all[i].e->version;
         ++j) {
      if (!winner->is_value() && all[j].e->is_value()) winner = all[j].e;
    }
    out.push_back(*winner);
    i = j;
  }
  return out;
}

std::vector<Entry> SdaEngine::extract_interval(const StatsContext& ctx,
                                               const ValidStats& vs,
                                               std::uint32_t lo,
                                               std::uint32_t hi) const {
  std::vector<Entry> out;
  std::span<const Entry> es = ctx.entries();
  for (std::size_t i = 0; i < es.size(); ++i) {
    for (const StatsContext::Piece& p : ctx.pieces_of(i)) {
      std::uint32_t a = std::max(p.lo, lo);
      std::uint32_t b = std::min(p.hi, hi);
      if (a <= b && vs.valid_count_in(a, b) > 0) {
        out.push_back(es[i]);
        break;
      }
    }
  }
  return out;
}

void SdaEngine::merge_split(Candidate c, const TargetPlan& plan, int level) {
  ++counters_.merges;
  std::int64_t cap = std::int64_t{1} << (level + 1);

  ArrayId next2 = c.next_hint;
  if (plan.primary.valid()) next2 = dev_->array(plan.primary).next;

  std::vector<VersionId> vv;
  std::vector<std::vector<Entry>> inputs = absorb_inputs(c, plan, vv);
  std::vector<Entry> merged = merge_dedup(inputs);
  inputs.clear();
  shed_stale_registrations(vv, level);

  StatsContext ctx(*tree_, merged);
  ValidStats vs(ctx, vv);
  bool stratum_in = vs.is_stratum();
  if (!stratum_in) ++counters_.nonstratum_merges;
  if (stratum_in) {
    VersionId p = vs.stratum_parent();
    if (p.valid() && 3 * ctx.live_at(p) >= cap) ++counters_.strong_parent_live;
  }

  // Take out one promotable subtree. It is written last: the remainder must
  // already hold its data registrations at this level when the promotion's
  // sample chains walk back down, or they would double-register versions
  // shared between the two.
  std::vector<VersionId> remainder = vv;
  std::optional<VersionId> w;
  {
    VersionId z = kNoVersion;
    std::uint32_t d = tree_->dfs(c.orphan);
    for (VersionId o : vs.orphans()) {
      auto [lo, hi] = tree_->interval(o);
      if (lo <= d && d <= hi) {
        z = o;
        break;
      }
    }
    SDA_CHECK(z.valid(), "merged orphan not covered by the version union");
    w = find_promotable(vs, z, cap);
  }
  Candidate up;
  if (w) {
    SDA_CHECK(tree_->is_ancestor(*w, c.orphan),
              "promotable version must be a weak ancestor of the orphan");
    auto [lo, hi] = tree_->interval(*w);
    std::vector<VersionId> vp;
    std::vector<VersionId> vr;
    for (VersionId v : vv) {
      std::uint32_t dv = tree_->dfs(v);
      (dv >= lo && dv <= hi ? vp : vr).push_back(v);
    }
    if (!vr.empty()) {
      ValidStats rs(ctx, vr);
      for (VersionId v : rs.versions()) {
        std::int64_t lam = rs.lambda_subtree_size(v);
        std::int64_t lv = rs.live(v);
        SDA_CHECK(
            !(lam >= cap && 3 * rs.lead_below(v) >= 2 * cap && 3 * lv >= cap),
            "remainder keeps a promotable version");
        if (3 * lv >= cap)
          SDA_CHECK(lam < cap, "live remainder version with oversized subtree");
      }
    }
    up.entries = extract_interval(ctx, vs, lo, hi);
    up.versions = std::move(vp);
    up.orphan = *w;
    up.next_hint = next2;
    remainder = std::move(vr);
  }
  if (!remainder.empty()) {
    std::vector<SplitPiece> pieces =
        version_split(ctx, remainder, level, cfg_.paranoid);
    std::vector<ArrayId> written;
    for (SplitPiece& p : pieces) {
      if (p.entries.empty()) continue;
      written.push_back(write_piece(std::move(p.versions), std::move(p.entries),
                                    level, next2, true));
    }
    std::int64_t up_lead = w ? vs.lead_below(*w) : 0;
    std::int64_t up_size = static_cast<std::int64_t>(up.entries.size());
    note_split(written, stratum_in, up_lead, up_size);
  }
  if (w) promote(std::move(up), level + 1);
}

void SdaEngine::merge_nosplit(Candidate c, int level) {
  ++counters_.merges;
  TargetPlan plan = plan_targets(c.versions, tree_->root(), c.next_hint, level);
  if (plan.absorb.size() > 1) ++counters_.multi_target_merges;

  ArrayId next2 = c.next_hint;
  if (plan.primary.valid()) next2 = dev_->array(plan.primary).next;

  std::vector<VersionId> vv;
  std::vector<std::vector<Entry>> inputs = absorb_inputs(c, plan, vv);
  std::vector<Entry> merged = merge_dedup(inputs);

  // The root anchors every array of this variant, so an arbitrary union of
  // leaf versions still forms a stratum.
  VersionId root = tree_->root();
  if (std::find(vv.begin(), vv.end(), root) == vv.end())
    vv.insert(vv.begin(), root);
  shed_stale_registrations(vv, level);

  if (static_cast<std::int64_t>(merged.size()) >
      (std::int64_t{1} << (level + 1))) {
    Candidate up;
    up.entries = std::move(merged);
    up.versions = std::move(vv);
    up.orphan = root;
    up.next_hint = next2;
    promote(std::move(up), level + 1);
    return;
  }
  write_piece(std::move(vv), std::move(merged), level, next2, false);
}

ArrayId SdaEngine::write_piece(std::vector<VersionId> versions,
                               std::vector<Entry> entries, int level,
                               ArrayId next, bool check_conditions) {
  // Reserve a redundant-FP slot before every k-th data record. The slot
  // copies the key/version of its successor so kv order is undisturbed.
  std::vector<Entry> records;
  const std::size_t spacing = static_cast<std::size_t>(cfg_.redundant_fp_spacing);
  records.reserve(entries.size() + entries.size() / spacing + 1);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0 && i % spacing == 0)
      records.push_back(Entry{entries[i].key, entries[i].version, RedundantHint{}});
    records.push_back(std::move(entries[i]));
  }

  ArrayId id = dev_->write_array(records, versions, level, ArrayKind::data, next);
  dev_->fill_redundant_fps(id);
  levels_[level].arrays.insert(id);
  for (VersionId v : versions) register_at(level, v, id);
  if (check_conditions) {
    check_piece(id, level);
    if (cfg_.paranoid) reverse_edge_check(id);
  }

  // Back-propagation: every version walks down level by level, registering
  // a sample of the chain above it, until it meets fresher data. Stale
  // sample registrations on the way are displaced; data registrations
  // below are never touched.
  std::vector<VersionId> walking = std::move(versions);
  std::vector<Entry> chain = std::move(records);
  ArrayId prev = id;
  for (int m = level - 1; m >= 0 && !walking.empty(); --m) {
    std::vector<VersionId> regset;
    for (VersionId v : walking) {
      auto it = levels_[m].reg.find(v);
      if (it != levels_[m].reg.end()) {
        ArrayId sid = it->second;
        if (dev_->array(sid).kind == ArrayKind::data) continue;
        levels_[m].reg.erase(it);
        dev_->drop_valid(sid, v);
        if (dev_->array(sid).valid.empty()) {
          levels_[m].arrays.erase(sid);
          dev_->mark_dead(sid);
          dev_->free_array(sid);
        }
      }
      regset.push_back(v);
    }
    if (regset.empty()) break;

    std::vector<Entry> sample;
    std::size_t data_idx = 0;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const Entry& e = chain[i];
      if (e.is_slot()) continue;
      if (data_idx % static_cast<std::size_t>(cfg_.sample_rate) == 0)
        sample.push_back(Entry{e.key, e.version, ForwardPointer{prev, i}});
      ++data_idx;
    }
    ArrayId sid = dev_->write_array(sample, regset, m, ArrayKind::sample, prev);
    dev_->set_sampled_by(prev, sid);
    levels_[m].arrays.insert(sid);
    for (VersionId v : regset) register_at(m, v, sid);
    prev = sid;
    chain = std::move(sample);
    walking = std::move(regset);
  }
  return id;
}

// ---- always-on output checks ----

void SdaEngine::check_piece(ArrayId id, int level) const {
  const StoredArray& a = dev_->array(id);
  std::int64_t cap = std::int64_t{1} << (level + 1);
  std::int64_t floor_live = std::int64_t{1} << level;
  std::int64_t n = static_cast<std::int64_t>(a.data_count);
  SDA_CHECK(n <= cap, "piece exceeds its level capacity");
  SDA_CHECK(3 * static_cast<std::int64_t>(a.parent_live) < cap,
            "stratum parent too live for this level");
  for (const auto& [v, cnt] : a.stats) {
    SDA_CHECK(3 * cnt.live >= n, "piece version below density threshold");
    if (cnt.lead > 0)
      SDA_CHECK(3 * cnt.live >= floor_live, "real version below live floor");
    std::int64_t lam = static_cast<std::int64_t>(a.lambda_t.at(v));
    SDA_CHECK(!(lam >= cap && 3 * cnt.lead_below >= 2 * cap &&
                3 * cnt.live >= cap),
              "piece keeps a promotable version");
    if (3 * cnt.live >= cap) {
      SDA_CHECK(lam < cap, "live piece version with oversized subtree");
      SDA_CHECK(!entry_strictly_below(v, level + 1, kNoExclusions),
                "older level shadows a live version of this piece");
    }
  }
}

bool SdaEngine::entry_strictly_below(VersionId v, int min_level,
                                     const std::set<ArrayId>& exclude) const {
  auto [lo, hi] = tree_->interval(v);
  if (lo == hi) return false;
  for (int l = min_level; l < static_cast<int>(levels_.size()); ++l) {
    for (ArrayId id : levels_[l].arrays) {
      if (exclude.count(id) != 0) continue;
      const StoredArray& a = dev_->array(id);
      if (a.kind != ArrayKind::data) continue;
      auto it = std::lower_bound(
          a.entry_versions.begin(), a.entry_versions.end(), lo + 1,
          [&](VersionId x, std::uint32_t d) { return tree_->dfs(x) < d; });
      if (it != a.entry_versions.end() && tree_->dfs(*it) <= hi) return true;
    }
  }
  return false;
}

void SdaEngine::reverse_edge_check(ArrayId id) const {
  // The mirror of the edge condition: content this new array holds must not
  // shadow a version some lower-level array still protects.
  const StoredArray& a = dev_->array(id);
  for (VersionId u : a.entry_versions) {
    for (VersionId anc = tree_->parent(u); anc.valid();
         anc = tree_->parent(anc)) {
      for (int m = 0; m < a.level; ++m) {
        auto it = levels_[m].reg.find(anc);
        if (it == levels_[m].reg.end()) continue;
        const StoredArray& b = dev_->array(it->second);
        if (b.kind != ArrayKind::data) continue;
        auto sit = b.stats.find(anc);
        if (sit == b.stats.end()) continue;
        SDA_CHECK(3 * sit->second.live < (std::int64_t{1} << (m + 1)),
                  "new content shadows a protected version below");
      }
    }
  }
}

void SdaEngine::note_split(const std::vector<ArrayId>& written,
                           bool stratum_input, std::int64_t promoted_lead,
                           std::int64_t promoted_size) {
  ++counters_.split_calls;
  counters_.split_pieces += written.size();
  counters_.max_pieces_per_split =
      std::max<std::uint64_t>(counters_.max_pieces_per_split, written.size());

  // The lead bound covers every output of the merge, and the promoted
  // candidate is one of them: it leaves with the freshest lead, so pieces
  // alone can be arbitrarily lead-poor.
  std::int64_t agg_lead = promoted_lead;
  std::int64_t agg_size = promoted_size;
  int poor = 0;
  for (ArrayId id : written) {
    const StoredArray& a = dev_->array(id);
    std::int64_t lead = 0;
    for (const auto& [v, cnt] : a.stats) lead += cnt.lead;
    std::int64_t n = static_cast<std::int64_t>(a.data_count);
    agg_lead += lead;
    agg_size += n;
    if (2 * lead < n) ++poor;
  }
  if (poor > 1) ++counters_.multi_lead_poor_splits;
  if (agg_size > 0 &&
      static_cast<std::uint64_t>(agg_lead) * counters_.worst_lead_den <
          counters_.worst_lead_num * static_cast<std::uint64_t>(agg_size)) {
    counters_.worst_lead_num = static_cast<std::uint64_t>(agg_lead);
    counters_.worst_lead_den = static_cast<std::uint64_t>(agg_size);
  }
  // Split-shape guarantees only bind when the input was one stratum; a
  // disjoint-subtree union splits per sibling group and may exceed them.
  if (stratum_input && cfg_.paranoid) {
    SDA_CHECK(written.size() <= 13, "version split produced too many strata");
    SDA_CHECK(poor <= 1, "version split produced two lead-poor strata");
    if (agg_size > 0)
      SDA_CHECK(39 * agg_lead >= agg_size,
                "aggregate lead fraction fell below 1/39");
  }
}

// ---- queries ----

std::optional<std::pair<Value, VersionId>> SdaEngine::point_query(
    const std::string& key, VersionId version) const {
  if (!tree_->exists(version))
    throw std::invalid_argument("point_query: unknown version");
  if (key.size() != dev_->key_size())
    throw std::invalid_argument("point_query: key width mismatch");
  std::optional<ForwardPointer> below;
  std::optional<ForwardPointer> above;
  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    auto rit = levels_[l].reg.find(version);
    if (rit == levels_[l].reg.end()) continue;
    ArrayId aid = rit->second;
    const StoredArray& arr = dev_->array(aid);
    std::optional<std::size_t> lb;
    std::optional<std::size_t> ub;
    if (below && below->target == aid)
      lb = static_cast<std::size_t>(below->index) + 1;
    if (above && above->target == aid)
      ub = static_cast<std::size_t>(above->index) + 1;

    if (arr.kind == ArrayKind::sample) {
      // A sample is a sparse mirror of the next array in its chain: a match
      // here may skip a closer ancestor that was not sampled, so it never
      // answers. Its pointers around the probe bracket the next search.
      SearchResult res =
          dev_->search(aid, key, version, lb, ub, arr.next.valid());
      if (res.fp_below) below = res.fp_below;
      if (res.fp_above) above = res.fp_above;
      continue;
    }
    SearchResult res = dev_->search(aid, key, version, lb, ub, false);
    for (ArrayIterator it = dev_->iterate(aid, res.loc); !it.at_end();
         it.advance()) {
      const Entry& e = *it.peek();
      if (e.key != key) break;
      if (e.is_slot()) continue;
      if (tree_->is_ancestor(e.version, version)) {
        assert(e.is_value());
        return std::make_pair(e.value(), e.version);
      }
    }
  }
  return std::nullopt;
}

std::vector<std::pair<std::string, Value>> SdaEngine::range_query(
    const std::string& start_key, const std::string& end_key,
    VersionId version, std::size_t limit) const {
  if (!tree_->exists(version))
    throw std::invalid_argument("range_query: unknown version");
  if (start_key.size() != dev_->key_size() ||
      end_key.size() != dev_->key_size())
    throw std::invalid_argument("range_query: key width mismatch");
  if (end_key < start_key)
    throw std::invalid_argument("range_query: bounds out of order");

  struct Cursor {
    ArrayIterator it;
    int level;
  };
  std::vector<Cursor> curs;
  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    auto rit = levels_[l].reg.find(version);
    if (rit == levels_[l].reg.end()) continue;
    // Samples never feed results: everything they mirror is covered by the
    // data array of their chain, which the version is also registered to.
    if (dev_->array(rit->second).kind == ArrayKind::sample) continue;
    SearchResult res = dev_->search(rit->second, start_key, version);
    curs.push_back(Cursor{dev_->iterate(rit->second, res.loc), l});
  }

  std::vector<std::pair<std::string, Value>> out;
  std::string cur_key;
  bool have_key = false;
  bool emitted = false;
  while (!curs.empty()) {
    // Drop exhausted cursors and cursors past the range end.
    for (std::size_t i = 0; i < curs.size();) {
      const Entry* e = curs[i].it.peek();
      if (e == nullptr || e->key > end_key)
        curs.erase(curs.begin() + static_cast<std::ptrdiff_t>(i));
      else
        ++i;
    }
    if (curs.empty()) break;
    // Pick the kv-least head; ties go to the lowest level for determinism.
    std::size_t best = 0;
    const Entry* best_e = curs[0].it.peek();
    for (std::size_t i = 1; i < curs.size(); ++i) {
      const Entry* e = curs[i].it.peek();
      auto c = kv_compare(*tree_, e->key, e->version, best_e->key,
                          best_e->version);
      if (c < 0 || (c == 0 && curs[i].level < curs[best].level)) {
        best = i;
        best_e = e;
      }
    }
    const Entry e = *best_e;
    if (!have_key || e.key != cur_key) {
      cur_key = e.key;
      have_key = true;
      emitted = false;
    }
    if (!e.is_slot() && !emitted && tree_->is_ancestor(e.version, version)) {
      assert(e.is_value());
      out.emplace_back(e.key, e.value());
      if (out.size() >= limit) break;
      emitted = true;
    }
    curs[best].it.advance();
  }
  return out;
}

// ---- introspection ----

int SdaEngine::top_level() const {
  for (int l = static_cast<int>(levels_.size()) - 1; l >= 0; --l)
    if (!levels_[l].arrays.empty()) return l;
  return -1;
}

std::size_t SdaEngine::array_count() const {
  std::size_t n = 0;
  for (const Level& lv : levels_) n += lv.arrays.size();
  return n;
}

ArrayId SdaEngine::registered_at(int level, VersionId v) const {
  if (level < 0 || level >= static_cast<int>(levels_.size())) return kNoArray;
  auto it = levels_[level].reg.find(v);
  return it == levels_[level].reg.end() ? kNoArray : it->second;
}

std::string SdaEngine::stats_text() const {
  std::ostringstream os;
  os << "levels=" << levels_.size() << "\n";
  os << "top_level=" << top_level() << "\n";
  os << "arrays=" << array_count() << "\n";
  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    std::size_t data = 0;
    std::size_t samples = 0;
    std::uint64_t recs = 0;
    for (ArrayId id : levels_[l].arrays) {
      const StoredArray& a = dev_->array(id);
      (a.kind == ArrayKind::data ? data : samples) += 1;
      recs += a.records.size();
    }
    os << "level." << l << ".data=" << data << "\n";
    os << "level." << l << ".samples=" << samples << "\n";
    os << "level." << l << ".records=" << recs << "\n";
  }
  os << "updates=" << counters_.updates << "\n";
  os << "clones=" << counters_.clones << "\n";
  os << "merges=" << counters_.merges << "\n";
  os << "promotions=" << counters_.promotions << "\n";
  os << "split_calls=" << counters_.split_calls << "\n";
  os << "split_pieces=" << counters_.split_pieces << "\n";
  os << "max_pieces_per_split=" << counters_.max_pieces_per_split << "\n";
  os << "multi_lead_poor_splits=" << counters_.multi_lead_poor_splits << "\n";
  os << "multi_target_merges=" << counters_.multi_target_merges << "\n";
  os << "nonstratum_merges=" << counters_.nonstratum_merges << "\n";
  os << "strong_parent_live=" << counters_.strong_parent_live << "\n";
  os << "full_sweeps=" << counters_.full_sweeps << "\n";
  os << "worst_lead_fraction=" << counters_.worst_lead_num << "/"
     << counters_.worst_lead_den << "\n";

  std::size_t half = 0;
  std::size_t quarter = 0;
  std::size_t small = 0;
  std::size_t below = 0;
  for (const Level& lv : levels_) {
    for (ArrayId id : lv.arrays) {
      const StoredArray& a = dev_->array(id);
      if (a.kind != ArrayKind::data) continue;
      std::int64_t lead = 0;
      for (const auto& [v, cnt] : a.stats) lead += cnt.lead;
      std::int64_t n = static_cast<std::int64_t>(a.data_count);
      if (2 * lead >= n)
        ++half;
      else if (4 * lead >= n)
        ++quarter;
      else if (39 * lead >= n)
        ++small;
      else
        ++below;
    }
  }
  os << "lead_fraction.half_or_more=" << half << "\n";
  os << "lead_fraction.quarter_to_half=" << quarter << "\n";
  os << "lead_fraction.to_one_39th=" << small << "\n";
  os << "lead_fraction.below_one_39th=" << below << "\n";
  return os.str();
}

// ---- structural sweep ----

void SdaEngine::maybe_sweep() {
  if (!cfg_.paranoid || ops_since_sweep_ < kSweepEvery) return;
  ops_since_sweep_ = 0;
  check_invariants();
}

void SdaEngine::check_invariants() const {
  std::set<ArrayId> seen;
  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    const Level& lv = levels_[l];
    for (ArrayId id : lv.arrays) {
      SDA_CHECK(dev_->alive(id), "level directory holds a dead array");
      const StoredArray& a = dev_->array(id);
      SDA_CHECK(a.level == l, "array filed at the wrong level");
      SDA_CHECK(seen.insert(id).second, "array filed at two levels");
      for (VersionId v : a.valid) {
        auto it = lv.reg.find(v);
        SDA_CHECK(it != lv.reg.end() && it->second == id,
                  "valid version not registered to its array");
      }
    }
    for (const auto& [v, id] : lv.reg) {
      SDA_CHECK(lv.arrays.count(id) != 0,
                "registration to an array missing from its level");
      const StoredArray& a = dev_->array(id);
      SDA_CHECK(std::find(a.valid.begin(), a.valid.end(), v) != a.valid.end(),
                "registration to an array that does not hold the version");
    }
  }
  for (ArrayId id : dev_->alive_ids())
    SDA_CHECK(seen.count(id) != 0, "alive array missing from the directory");

  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    for (ArrayId id : levels_[l].arrays) {
      const StoredArray& a = dev_->array(id);
      SDA_CHECK(kv_sorted(*tree_, a.records), "records out of kv order");

      if (a.kind == ArrayKind::sample) {
        if (!dev_->alive(a.next)) continue;  // mirror died; chase falls back
        const StoredArray& up = dev_->array(a.next);
        for (const Entry& e : a.records) {
          SDA_CHECK(e.is_fp(), "sample holds a non-pointer record");
          SDA_CHECK(e.fp().target == a.next, "sample points off its mirror");
          SDA_CHECK(e.fp().index < up.records.size(),
                    "sample pointer out of range");
          const Entry& m = up.records[e.fp().index];
          SDA_CHECK(m.key == e.key && m.version == e.version,
                    "sample pointer does not mirror its record");
        }
        continue;
      }

      std::vector<Entry> data;
      data.reserve(a.data_count);
      for (const Entry& e : a.records)
        if (!e.is_slot()) data.push_back(e);
      StatsContext ctx(*tree_, data);
      ValidStats vs(ctx, a.valid);
      SDA_CHECK(vs.is_stratum(), "data array valid set is not a stratum");

      for (const auto& [v, cnt] : a.stats) {
        SDA_CHECK(vs.contains(v), "stored stats for a non-valid version");
        SDA_CHECK(cnt.lead == vs.lead(v) && cnt.live == vs.live(v) &&
                      cnt.lead_below == vs.lead_below(v),
                  "stored stats drifted from recomputation");
      }
      for (const auto& [v, lam] : a.lambda_t)
        SDA_CHECK(static_cast<std::int64_t>(lam) == vs.lambda_subtree_size(v),
                  "stored subtree size drifted from recomputation");

      if (!cfg_.version_split_enabled) continue;
      bool any_real = false;
      for (VersionId v : a.valid)
        if (vs.lead(v) > 0) any_real = true;
      if (!any_real) continue;

      std::int64_t cap = std::int64_t{1} << (l + 1);
      std::int64_t floor_live = std::int64_t{1} << l;
      std::int64_t n = static_cast<std::int64_t>(a.data_count);
      SDA_CHECK(n <= cap, "level size condition violated");
      VersionId p = vs.stratum_parent();
      if (p.valid())
        SDA_CHECK(3 * ctx.live_at(p) < cap, "level parent-live condition violated");
      for (VersionId v : a.valid) {
        std::int64_t lv_live = ctx.live_at(v);
        if (vs.lead(v) > 0) {
          SDA_CHECK(3 * lv_live >= n, "level density condition violated");
          SDA_CHECK(3 * lv_live >= floor_live, "level live condition violated");
        }
        SDA_CHECK(!(vs.lambda_subtree_size(v) >= cap &&
                    3 * vs.lead_below(v) >= 2 * cap && 3 * lv_live >= cap),
                  "level no-promotable condition violated");
        if (3 * lv_live >= cap)
          SDA_CHECK(!entry_strictly_below(v, l + 1, kNoExclusions),
                    "level edge condition violated");
      }
    }
  }
  ++counters_.full_sweeps;
}

}  // namespace sda
