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

#include "sda/stats.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace sda {

int rat_cmp(Rational a, Rational b) {
  assert(a.den > 0 && b.den > 0);
  __int128 lhs = static_cast<__int128>(a.num) * b.den;
  __int128 rhs = static_cast<__int128>(b.num) * a.den;
  if (lhs < rhs) return -1;
  if (lhs > rhs) return 1;
  return 0;
}

StatsContext::StatsContext(const VersionTree& tree,
                           std::span<const Entry> entries)
    : tree_(&tree), entries_(entries) {
  const std::size_t n = entries.size();
  const std::uint32_t t = static_cast<std::uint32_t>(tree.version_count());

  entry_run_.resize(n);
  entry_dfs_.resize(n);
  piece_begin_.assign(n + 1, 0);
  live_at_dfs_.assign(t, 0);
  lead_at_dfs_.assign(t, 0);
  run_begin_.push_back(0);

  for (std::size_t i = 0; i < n; ++i) {
    const Entry& e = entries[i];
    if (e.is_slot())
      throw std::invalid_argument("slot record in stats input");
    entry_dfs_[i] = tree.dfs(e.version);
    if (i > 0) {
      const Entry& p = entries[i - 1];
      auto c = kv_compare(tree, p.key, p.version, e.key, e.version);
      if (c == std::strong_ordering::greater)
        throw std::invalid_argument("entries not kv-sorted");
      if (c == std::strong_ordering::equal)
        throw std::invalid_argument("duplicate (key, version) entry");
      if (p.key != e.key)
        run_begin_.push_back(static_cast<std::uint32_t>(i));
    }
    entry_run_[i] = static_cast<std::uint32_t>(run_begin_.size()) - 1;
    lead_at_dfs_[entry_dfs_[i]] += 1;
  }
  if (n > 0) run_begin_.push_back(static_cast<std::uint32_t>(n));

  // Piece computation. Within a run versions appear DFS-descending, so
  // every previously seen same-key version is either inside the current
  // version's interval (a proper descendant, hence an overwriter) or
  // entirely to its right. The stack holds the maximal already-covered
  // intervals; gaps between them inside the current interval are exactly
  // the versions at which the current entry stays visible.
  std::vector<Piece> stack;
  pieces_.reserve(n);
  for (std::size_t r = 0; r + 1 < run_begin_.size(); ++r) {
    stack.clear();
    for (std::uint32_t i = run_begin_[r]; i < run_begin_[r + 1]; ++i) {
      auto [lo, hi] = tree.interval(entries[i].version);
      piece_begin_[i] = static_cast<std::uint32_t>(pieces_.size());
      std::uint32_t prev = lo;
      while (!stack.empty() && stack.back().lo <= hi) {
        Piece topmost = stack.back();
        stack.pop_back();
        assert(topmost.lo > lo && topmost.hi <= hi);
        if (topmost.lo > prev) pieces_.push_back({prev, topmost.lo - 1});
        prev = topmost.hi + 1;
      }
      if (prev <= hi) pieces_.push_back({prev, hi});
      stack.push_back({lo, hi});
    }
  }
  piece_begin_[n] = static_cast<std::uint32_t>(pieces_.size());

  // live_at via interval deltas over all pieces.
  std::vector<std::int64_t> delta(t + 1, 0);
  for (const Piece& p : pieces_) {
    delta[p.lo] += 1;
    delta[p.hi + 1] -= 1;
  }
  std::int64_t acc = 0;
  for (std::uint32_t d = 0; d < t; ++d) {
    acc += delta[d];
    live_at_dfs_[d] = acc;
  }
}

ValidStats::ValidStats(const StatsContext& ctx,
                       std::span<const VersionId> valid)
    : ctx_(&ctx) {
  if (valid.empty()) throw std::invalid_argument("empty version set");
  const VersionTree& tree = *ctx.tree_;
  const std::uint32_t t = static_cast<std::uint32_t>(tree.version_count());

  mask_.assign(t, 0);
  for (VersionId v : valid) {
    std::uint32_t d = tree.dfs(v);
    if (mask_[d]) throw std::invalid_argument("duplicate version in set");
    mask_[d] = 1;
  }
  versions_.reserve(valid.size());
  for (std::uint32_t d = 0; d < t; ++d)
    if (mask_[d]) versions_.push_back(tree.version_at_dfs(d));

  pref_valid_.assign(t + 1, 0);
  pref_lead_.assign(t + 1, 0);
  for (std::uint32_t d = 0; d < t; ++d) {
    pref_valid_[d + 1] = pref_valid_[d] + (mask_[d] ? 1 : 0);
    pref_lead_[d + 1] = pref_lead_[d] + (mask_[d] ? ctx.lead_at_dfs_[d] : 0);
  }

  const std::size_t n = ctx.entries_.size();
  surv_.assign(n, 0);
  std::vector<std::int64_t> surv_at(t, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const StatsContext::Piece& p : ctx.pieces_of(i)) {
      if (valid_count_in(p.lo, p.hi) > 0) {
        surv_[i] = 1;
        break;
      }
    }
    if (surv_[i]) {
      ++survivor_count_;
      surv_at[ctx.entry_dfs_[i]] += 1;
    }
  }
  pref_surv_.assign(t + 1, 0);
  for (std::uint32_t d = 0; d < t; ++d)
    pref_surv_[d + 1] = pref_surv_[d] + surv_at[d];

  // Orphans: scanning valid versions in DFS order, a version starts a new
  // orphan exactly when it lies past the rightmost subtree seen so far.
  std::uint32_t covered_hi = 0;
  bool any = false;
  for (VersionId v : versions_) {
    auto [lo, hi] = tree.interval(v);
    if (!any || lo > covered_hi) {
      orphans_.push_back(v);
      covered_hi = hi;
      any = true;
    }
  }

  stratum_parent_ = tree.parent(orphans_.front());
  is_stratum_ = true;
  for (VersionId o : orphans_)
    if (tree.parent(o) != stratum_parent_) is_stratum_ = false;
}

std::int64_t ValidStats::lead_below(VersionId v) const {
  auto [lo, hi] = ctx_->tree_->interval(v);
  return pref_lead_[hi + 1] - pref_lead_[lo];
}

std::int64_t ValidStats::lambda_subtree_size(VersionId v) const {
  if (!contains(v))
    throw std::invalid_argument(
        "lambda_subtree_size requires a valid version");
  auto [lo, hi] = ctx_->tree_->interval(v);
  std::int64_t cnt_below = pref_surv_[hi + 1] - pref_surv_[lo];
  // Entries from outside the subtree survive into the extraction exactly
  // when they are live at v itself; entries written inside it survive
  // exactly when their survivor flag is set.
  return ctx_->live_at(v) - lead(v) + cnt_below;
}

SubtreeAggregates ValidStats::subtree_aggregates(VersionId u) const {
  const VersionTree& tree = *ctx_->tree_;
  auto [ulo, uhi] = tree.interval(u);
  SubtreeAggregates agg;
  const std::size_t n = ctx_->entries_.size();
  std::size_t i = 0;
  for (std::size_t r = 0; r + 1 < ctx_->run_begin_.size(); ++r) {
    bool run_covers_u = false;
    for (i = ctx_->run_begin_[r]; i < ctx_->run_begin_[r + 1]; ++i) {
      bool in_lambda = false;
      for (const StatsContext::Piece& p : ctx_->pieces_of(i)) {
        std::uint32_t lo = std::max(p.lo, ulo);
        std::uint32_t hi = std::min(p.hi, uhi);
        if (lo <= hi && valid_count_in(lo, hi) > 0) {
          in_lambda = true;
          break;
        }
      }
      if (!in_lambda) continue;
      agg.lambda_size += 1;
      if (!run_covers_u)
        run_covers_u = tree.is_ancestor(ctx_->entries_[i].version, u);
    }
    // A run contributes to u's liveness inside the extraction iff it has a
    // surviving entry at an ancestor of u: the kv-first such entry is the
    // visible write of this key at u within the extraction.
    if (run_covers_u) agg.live_in_lambda += 1;
  }
  (void)n;
  return agg;
}

Rational ValidStats::subtree_density(VersionId u) const {
  std::int64_t lam, liv;
  if (contains(u)) {
    lam = lambda_subtree_size(u);
    liv = ctx_->live_at(u);
  } else {
    SubtreeAggregates agg = subtree_aggregates(u);
    lam = agg.lambda_size;
    liv = agg.live_in_lambda;
  }
  if (lam == 0) return Rational{1, 1};
  return Rational{liv, lam};
}

VersionId ValidStats::stratum_parent() const {
  if (!is_stratum_)
    throw std::invalid_argument("version set is not a stratum");
  return stratum_parent_;
}

VersionStats compute_stats(const VersionTree& tree,
                           std::span<const Entry> entries,
                           std::span<const VersionId> versions) {
  StatsContext ctx(tree, entries);
  ValidStats vs(ctx, versions);
  VersionStats out;
  for (VersionId v : vs.versions()) {
    VersionCounts c;
    c.lead = vs.lead(v);
    c.live = vs.live(v);
    c.lead_below = vs.lead_below(v);
    out.emplace(v, c);
  }
  return out;
}

Rational density(const VersionStats& stats, VersionId v,
                 std::int64_t array_len) {
  if (array_len <= 0) throw std::invalid_argument("empty array");
  auto it = stats.find(v);
  if (it == stats.end())
    throw std::invalid_argument("version not tracked in stats");
  return Rational{it->second.live, array_len};
}

std::vector<Entry> split_extract(const VersionTree& tree,
                                 std::span<const Entry> entries,
                                 std::span<const VersionId> w) {
  StatsContext ctx(tree, entries);
  ValidStats vs(ctx, w);
  std::vector<Entry> out;
  out.reserve(static_cast<std::size_t>(vs.survivor_count()));
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (vs.survives(i)) out.push_back(entries[i]);
  return out;
}

std::int64_t arr_size(const StatsContext& ctx, const ValidStats& w) {
  if (!w.is_stratum())
    throw std::invalid_argument("version set is not a stratum");
  std::int64_t total = 0;
  VersionId parent = w.stratum_parent();
  if (parent.valid()) total += ctx.live_at(parent);
  for (VersionId o : w.orphans()) total += w.lead_below(o);
  return total;
}

std::int64_t arr_size(const VersionTree& tree, std::span<const Entry> entries,
                      std::span<const VersionId> w) {
  StatsContext ctx(tree, entries);
  ValidStats vs(ctx, w);
  return arr_size(ctx, vs);
}

}  // namespace sda
