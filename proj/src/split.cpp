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

#include "sda/split.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sda {

namespace {

std::optional<VersionId> promotable_in(const ValidStats& vs, VersionId u,
                                       std::int64_t m) {
  if (3 * vs.lead_below(u) < 2 * m) return std::nullopt;
  std::int64_t lam = vs.contains(u)
                         ? vs.lambda_subtree_size(u)
                         : vs.subtree_aggregates(u).lambda_size;
  if (lam < m) return std::nullopt;
  if (vs.lead(u) > 0 && 3 * vs.live(u) >= m) return u;
  for (VersionId c : vs.ctx().tree().children(u))
    if (auto r = promotable_in(vs, c, m)) return r;
  return std::nullopt;
}

void check_split_preconditions(const ValidStats& vs, std::int64_t m) {
  if (vs.is_stratum()) {
    VersionId p = vs.stratum_parent();
    if (p.valid())
      SDA_CHECK(3 * vs.live(p) < m, "split input: stratum parent too live");
  }
  for (VersionId v : vs.versions()) {
    std::int64_t lam = vs.lambda_subtree_size(v);
    Rational d = vs.subtree_density(v);
    if (rat_cmp(d, Rational{1, 3}) >= 0) {
      SDA_CHECK(lam < m, "split input: dense subtree too large");
    } else {
      SDA_CHECK(3 * vs.live(v) < m,
                "split input: non-dense version too live");
    }
    SDA_CHECK(
        !(lam >= m && 3 * vs.lead_below(v) >= 2 * m && 3 * vs.live(v) >= m),
        "split input: promotable version present");
  }
}

std::vector<SplitPiece> split_rec(const StatsContext& ctx,
                                  std::vector<VersionId> valid,
                                  std::int64_t m, bool check) {
  const VersionTree& tree = ctx.tree();
  ValidStats vs(ctx, valid);
  if (check) check_split_preconditions(vs, m);

  std::vector<VersionId> kids = find_dense_kids(vs, vs.orphans());
  // Kids with empty valid subtrees contribute no versions or entries to
  // any piece; drop them so emitted pieces are never empty.
  std::erase_if(kids, [&](VersionId u) {
    auto [lo, hi] = tree.interval(u);
    return vs.valid_count_in(lo, hi) == 0;
  });
  assert(!kids.empty());

  struct Cand {
    VersionId v;
    std::uint32_t lo, hi;
    std::int64_t live;
  };
  std::vector<Cand> cands;
  cands.reserve(kids.size());
  for (VersionId u : kids) {
    auto [lo, hi] = tree.interval(u);
    cands.push_back({u, lo, hi, vs.live(u)});
  }
  const std::size_t r = cands.size();

  // Candidates are pairwise disjoint subtrees (siblings), so an index
  // sorted by interval makes per-piece overlap lookups logarithmic.
  std::vector<std::size_t> by_lo(r);
  std::iota(by_lo.begin(), by_lo.end(), std::size_t{0});
  std::sort(by_lo.begin(), by_lo.end(), [&](std::size_t a, std::size_t b) {
    return cands[a].lo < cands[b].lo;
  });

  // branch[e]: first candidate (in lead_below order) whose restricted
  // valid subtree keeps entry e alive; r when none does. The entry then
  // belongs to lambda(A, split(j)) exactly for j > branch[e].
  const std::size_t n = static_cast<std::size_t>(ctx.entry_count());
  std::vector<std::size_t> branch(n, r);
  for (std::size_t e = 0; e < n; ++e) {
    for (const StatsContext::Piece& p : ctx.pieces_of(e)) {
      auto it = std::lower_bound(
          by_lo.begin(), by_lo.end(), p.lo,
          [&](std::size_t ci, std::uint32_t lo) { return cands[ci].hi < lo; });
      for (; it != by_lo.end() && cands[*it].lo <= p.hi; ++it) {
        std::uint32_t lo = std::max(p.lo, cands[*it].lo);
        std::uint32_t hi = std::min(p.hi, cands[*it].hi);
        if (lo <= hi && vs.valid_count_in(lo, hi) > 0)
          branch[e] = std::min(branch[e], *it);
      }
    }
  }

  std::vector<std::int64_t> pref(r + 1, 0);
  for (std::size_t e = 0; e < n; ++e)
    if (branch[e] < r) pref[branch[e] + 1] += 1;
  for (std::size_t j = 0; j < r; ++j) pref[j + 1] += pref[j];

  std::size_t take = r;
  std::int64_t min_live = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 1; i <= r; ++i) {
    min_live = std::min(min_live, cands[i - 1].live);
    if (pref[i] > std::min(m, 3 * min_live)) {
      if (check) SDA_CHECK(i > 1, "split overflow at the first kid");
      take = (i == 1) ? 1 : i - 1;
      break;
    }
  }

  SplitPiece piece;
  for (std::size_t k = 0; k < take; ++k) {
    // valid versions inside cands[k]'s interval, via the DFS-sorted list
    const auto& vers = vs.versions();
    auto first = std::lower_bound(
        vers.begin(), vers.end(), cands[k].lo,
        [&](VersionId v, std::uint32_t lo) { return tree.dfs(v) < lo; });
    for (auto v = first; v != vers.end() && tree.dfs(*v) <= cands[k].hi; ++v)
      piece.versions.push_back(*v);
  }
  std::sort(piece.versions.begin(), piece.versions.end(),
            [&](VersionId a, VersionId b) { return tree.dfs(a) < tree.dfs(b); });
  for (std::size_t e = 0; e < n; ++e)
    if (branch[e] < take) piece.entries.push_back(ctx.entries()[e]);

  std::vector<char> taken(tree.version_count(), 0);
  for (VersionId v : piece.versions) taken[tree.dfs(v)] = 1;
  std::vector<VersionId> rest;
  for (VersionId v : vs.versions())
    if (!taken[tree.dfs(v)]) rest.push_back(v);

  std::vector<SplitPiece> out;
  out.push_back(std::move(piece));
  if (!rest.empty()) {
    auto tail = split_rec(ctx, std::move(rest), m, check);
    out.insert(out.end(), std::make_move_iterator(tail.begin()),
               std::make_move_iterator(tail.end()));
  }
  return out;
}

}  // namespace

std::optional<VersionId> find_promotable(const ValidStats& vs, VersionId w,
                                         std::int64_t m) {
  if (m < 1) throw std::invalid_argument("threshold must be positive");
  if (!vs.contains(w))
    throw std::invalid_argument("start version not in the valid set");
  return promotable_in(vs, w, m);
}

std::vector<VersionId> find_dense_kids(const ValidStats& vs,
                                       std::vector<VersionId> candidates) {
  if (candidates.empty())
    throw std::invalid_argument("empty candidate list");
  const VersionTree& tree = vs.ctx().tree();
  for (;;) {
    std::size_t best = 0;
    Rational best_d = vs.subtree_density(candidates[0]);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      Rational d = vs.subtree_density(candidates[i]);
      int c = rat_cmp(d, best_d);
      if (c < 0 || (c == 0 && tree.dfs(candidates[i]) <
                                  tree.dfs(candidates[best]))) {
        best = i;
        best_d = d;
      }
    }
    if (rat_cmp(best_d, Rational{1, 3}) > 0) {
      std::sort(candidates.begin(), candidates.end(),
                [&](VersionId a, VersionId b) {
                  std::int64_t la = vs.lead_below(a);
                  std::int64_t lb = vs.lead_below(b);
                  if (la != lb) return la > lb;
                  return tree.dfs(a) < tree.dfs(b);
                });
      return candidates;
    }
    // Not dense in its subtree, hence some valid version sits strictly
    // below it and the child list cannot be empty.
    candidates = tree.children(candidates[best]);
    assert(!candidates.empty());
  }
}

std::vector<SplitPiece> version_split(const StatsContext& ctx,
                                      std::span<const VersionId> valid,
                                      int level, bool check_preconditions) {
  if (level < 0 || level > 60)
    throw std::invalid_argument("level out of range");
  std::int64_t m = std::int64_t{1} << (level + 1);
  std::vector<VersionId> vv(valid.begin(), valid.end());
  ValidStats vs(ctx, vv);
  if (vs.is_stratum())
    return split_rec(ctx, std::move(vv), m, check_preconditions);

  // A merge can union disjoint subtrees (next-array targets), and then the
  // input is not a stratum. Orphans with different parents can never share
  // an output stratum, so each sibling group splits independently.
  const VersionTree& tree = ctx.tree();
  std::map<std::int64_t, std::size_t> group_of;  // parent dfs, -1 for roots
  std::vector<std::vector<VersionId>> groups;
  for (VersionId o : vs.orphans()) {
    VersionId p = tree.parent(o);
    std::int64_t key = p.valid() ? std::int64_t(tree.dfs(p)) : -1;
    auto [it, fresh] = group_of.try_emplace(key, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(o);
  }

  std::vector<SplitPiece> out;
  const auto& vers = vs.versions();
  for (const auto& g : groups) {
    std::vector<VersionId> sub;
    for (VersionId o : g) {
      auto [lo, hi] = tree.interval(o);
      auto first = std::lower_bound(
          vers.begin(), vers.end(), lo,
          [&](VersionId v, std::uint32_t x) { return tree.dfs(v) < x; });
      for (auto v = first; v != vers.end() && tree.dfs(*v) <= hi; ++v)
        sub.push_back(*v);
    }
    std::sort(sub.begin(), sub.end(), [&](VersionId a, VersionId b) {
      return tree.dfs(a) < tree.dfs(b);
    });
    auto part = split_rec(ctx, std::move(sub), m, check_preconditions);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace sda
