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

// Brute-force reference implementations of the definitional operations,
// written straight from the definitions with quadratic scans and no shared
// machinery with the library (only the version tree and the entry type).
// The tests compare library results against these on random instances.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sda/core.hpp"
#include "sda/version_tree.hpp"

namespace brute {

using sda::Entry;
using sda::VersionId;
using sda::VersionTree;

// (k, x) at index i is live at v iff x is a weak ancestor of v and no
// other entry of the same key sits strictly between x and v.
inline bool entry_live_at(const VersionTree& tree,
                          const std::vector<Entry>& entries, std::size_t i,
                          VersionId v) {
  if (!tree.is_ancestor(entries[i].version, v)) return false;
  for (std::size_t j = 0; j < entries.size(); ++j) {
    if (j == i || entries[j].key != entries[i].key) continue;
    VersionId y = entries[j].version;
    if (y != entries[i].version && tree.is_ancestor(entries[i].version, y) &&
        tree.is_ancestor(y, v))
      return false;
  }
  return true;
}

inline std::int64_t live_count(const VersionTree& tree,
                               const std::vector<Entry>& entries,
                               VersionId v) {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entry_live_at(tree, entries, i, v)) ++n;
  return n;
}

inline std::int64_t entries_at(const std::vector<Entry>& entries,
                               VersionId v) {
  std::int64_t n = 0;
  for (const Entry& e : entries)
    if (e.version == v) ++n;
  return n;
}

inline bool in_set(const std::vector<VersionId>& set, VersionId v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

// Members of `set` inside v's subtree (weak descendants of v).
inline std::vector<VersionId> subtree_members(const VersionTree& tree,
                                              const std::vector<VersionId>& set,
                                              VersionId v) {
  std::vector<VersionId> out;
  for (VersionId u : set)
    if (tree.is_ancestor(v, u)) out.push_back(u);
  return out;
}

// lambda(A, W): entries live at some version of W, original order.
inline std::vector<Entry> lambda(const VersionTree& tree,
                                 const std::vector<Entry>& entries,
                                 const std::vector<VersionId>& w) {
  std::vector<Entry> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (VersionId v : w)
      if (entry_live_at(tree, entries, i, v)) {
        out.push_back(entries[i]);
        break;
      }
  return out;
}

// lead_below for a valid set: lead summed over valid versions in v's
// subtree. v itself need not be valid.
inline std::int64_t lead_below(const VersionTree& tree,
                               const std::vector<Entry>& entries,
                               const std::vector<VersionId>& valid,
                               VersionId v) {
  std::int64_t n = 0;
  for (VersionId u : subtree_members(tree, valid, v))
    n += entries_at(entries, u);
  return n;
}

struct Counts {
  std::int64_t lead = 0;
  std::int64_t live = 0;
  std::int64_t lead_below = 0;
};

// compute_stats: per-version lead/live/lead_below over the given set.
inline std::map<VersionId, Counts> stats(const VersionTree& tree,
                                         const std::vector<Entry>& entries,
                                         const std::vector<VersionId>& versions) {
  std::map<VersionId, Counts> out;
  for (VersionId v : versions) {
    Counts c;
    c.lead = entries_at(entries, v);
    c.live = live_count(tree, entries, v);
    c.lead_below = lead_below(tree, entries, versions, v);
    out[v] = c;
  }
  return out;
}

// Minimal members of `set` (no strict ancestor inside the set), DFS
// ascending.
inline std::vector<VersionId> orphans(const VersionTree& tree,
                                      const std::vector<VersionId>& set) {
  std::vector<VersionId> out;
  for (VersionId v : set) {
    bool minimal = true;
    for (VersionId u : set)
      if (u != v && tree.is_ancestor(u, v)) {
        minimal = false;
        break;
      }
    if (minimal) out.push_back(v);
  }
  std::sort(out.begin(), out.end(), [&](VersionId a, VersionId b) {
    return tree.dfs(a) < tree.dfs(b);
  });
  return out;
}

inline bool is_stratum(const VersionTree& tree,
                       const std::vector<VersionId>& set) {
  std::vector<VersionId> os = orphans(tree, set);
  for (std::size_t i = 1; i < os.size(); ++i)
    if (tree.parent(os[i]) != tree.parent(os[0])) return false;
  return true;
}

// arr_size: live(parent of the orphans) + sum of lead_below over orphans;
// the parent of a root orphan counts as live 0.
inline std::int64_t arr_size(const VersionTree& tree,
                             const std::vector<Entry>& entries,
                             const std::vector<VersionId>& w) {
  std::vector<VersionId> os = orphans(tree, w);
  std::int64_t n = 0;
  VersionId p = tree.parent(os[0]);
  if (p.valid()) n += live_count(tree, entries, p);
  for (VersionId o : os) n += lead_below(tree, entries, w, o);
  return n;
}

// delta_T(u) as a (num, den) pair: liveness of u measured inside the
// extraction of u's valid subtree, over the extraction size. Empty
// extractions count as dense (1, 1).
inline std::pair<std::int64_t, std::int64_t> subtree_density(
    const VersionTree& tree, const std::vector<Entry>& entries,
    const std::vector<VersionId>& valid, VersionId u) {
  std::vector<Entry> ex =
      lambda(tree, entries, subtree_members(tree, valid, u));
  if (ex.empty()) return {1, 1};
  std::int64_t lv = live_count(tree, ex, u);
  return {lv, static_cast<std::int64_t>(ex.size())};
}

inline int frac_cmp(std::pair<std::int64_t, std::int64_t> a,
                    std::pair<std::int64_t, std::int64_t> b) {
  // small numbers only (counts bounded by the entry cap), no overflow
  std::int64_t l = a.first * b.second;
  std::int64_t r = b.first * a.second;
  return l < r ? -1 : l > r ? 1 : 0;
}

inline std::vector<VersionId> children_by_dfs(const VersionTree& tree,
                                              VersionId v) {
  std::vector<VersionId> kids = tree.children(v);
  std::sort(kids.begin(), kids.end(), [&](VersionId a, VersionId b) {
    return tree.dfs(a) < tree.dfs(b);
  });
  return kids;
}

// Algorithm: take the candidate least dense in its subtree (ties by
// ascending dfs); if even that one has density strictly above 1/3 return
// the candidates sorted by lead_below descending (ties ascending dfs);
// else replace the candidate list by that version's children.
inline std::vector<VersionId> find_dense_kids(
    const VersionTree& tree, const std::vector<Entry>& entries,
    const std::vector<VersionId>& valid, std::vector<VersionId> candidates) {
  for (;;) {
    std::size_t best = 0;
    auto best_d = subtree_density(tree, entries, valid, candidates[0]);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      auto d = subtree_density(tree, entries, valid, candidates[i]);
      int c = frac_cmp(d, best_d);
      if (c < 0 ||
          (c == 0 && tree.dfs(candidates[i]) < tree.dfs(candidates[best]))) {
        best = i;
        best_d = d;
      }
    }
    if (frac_cmp(best_d, {1, 3}) > 0) {
      std::sort(candidates.begin(), candidates.end(),
                [&](VersionId a, VersionId b) {
                  std::int64_t la = lead_below(tree, entries, valid, a);
                  std::int64_t lb = lead_below(tree, entries, valid, b);
                  if (la != lb) return la > lb;
                  return tree.dfs(a) < tree.dfs(b);
                });
      return candidates;
    }
    candidates = children_by_dfs(tree, candidates[best]);
  }
}

// Algorithm: prune when the subtree extraction is below m or the valid
// lead below w is under 2m/3; accept w when it has own lead and m/3 live
// keys; else first hit among the children in ascending dfs.
inline std::optional<VersionId> find_promotable(
    const VersionTree& tree, const std::vector<Entry>& entries,
    const std::vector<VersionId>& valid, VersionId w, std::int64_t m) {
  std::vector<VersionId> sub = subtree_members(tree, valid, w);
  std::int64_t lam = static_cast<std::int64_t>(lambda(tree, entries, sub).size());
  std::int64_t lb = lead_below(tree, entries, valid, w);
  if (lam < m || 3 * lb < 2 * m) return std::nullopt;
  std::int64_t lead_w = in_set(valid, w) ? entries_at(entries, w) : 0;
  if (lead_w > 0 && 3 * live_count(tree, entries, w) >= m) return w;
  for (VersionId u : children_by_dfs(tree, w))
    if (auto hit = find_promotable(tree, entries, valid, u, m)) return hit;
  return std::nullopt;
}

struct Piece {
  std::vector<VersionId> versions;
  std::vector<Entry> entries;
};

// One split step over a sibling stratum: kid search from the orphans,
// prefix growth bounded by min(2^{l+1}, 3 * running-min live), emit the
// last fitting prefix (never an empty one) and pass the rest on.
inline void split_rec(const VersionTree& tree,
                      const std::vector<Entry>& entries,
                      std::vector<VersionId> valid, std::int64_t m,
                      std::vector<Piece>& out) {
  std::vector<VersionId> kids =
      find_dense_kids(tree, entries, valid, orphans(tree, valid));
  std::erase_if(kids, [&](VersionId u) {
    return subtree_members(tree, valid, u).empty();
  });

  std::size_t r = kids.size();
  std::size_t take = r;
  std::int64_t min_live = std::numeric_limits<std::int64_t>::max();
  std::vector<VersionId> prefix;
  for (std::size_t i = 1; i <= r; ++i) {
    min_live = std::min(min_live, live_count(tree, entries, kids[i - 1]));
    for (VersionId v : subtree_members(tree, valid, kids[i - 1]))
      prefix.push_back(v);
    std::int64_t lam =
        static_cast<std::int64_t>(lambda(tree, entries, prefix).size());
    if (lam > std::min(m, 3 * min_live)) {
      take = i == 1 ? 1 : i - 1;
      break;
    }
  }

  Piece piece;
  for (std::size_t k = 0; k < take; ++k)
    for (VersionId v : subtree_members(tree, valid, kids[k]))
      piece.versions.push_back(v);
  std::sort(piece.versions.begin(), piece.versions.end(),
            [&](VersionId a, VersionId b) {
              return tree.dfs(a) < tree.dfs(b);
            });
  piece.entries = lambda(tree, entries, piece.versions);

  std::vector<VersionId> rest;
  for (VersionId v : valid)
    if (!in_set(piece.versions, v)) rest.push_back(v);
  out.push_back(std::move(piece));
  if (!rest.empty()) split_rec(tree, entries, std::move(rest), m, out);
}

// version_split: sibling strata split directly; a non-stratum set splits
// independently per orphan-parent group.
inline std::vector<Piece> version_split(const VersionTree& tree,
                                        const std::vector<Entry>& entries,
                                        const std::vector<VersionId>& valid,
                                        int level) {
  std::int64_t m = std::int64_t{1} << (level + 1);
  std::vector<Piece> out;
  if (is_stratum(tree, valid)) {
    split_rec(tree, entries, valid, m, out);
    return out;
  }
  std::vector<std::vector<VersionId>> groups;
  for (VersionId o : orphans(tree, valid)) {
    VersionId p = tree.parent(o);
    bool found = false;
    for (auto& g : groups)
      if (tree.parent(g.front()) == p) {
        g.push_back(o);
        found = true;
        break;
      }
    if (!found) groups.push_back({o});
  }
  for (auto& g : groups) {
    std::vector<VersionId> part;
    for (VersionId o : g)
      for (VersionId v : subtree_members(tree, valid, o)) part.push_back(v);
    split_rec(tree, entries, part, m, out);
  }
  return out;
}

// --- random instance generation ---

struct Instance {
  VersionTree tree;
  std::vector<VersionId> versions;  // all of them, creation order
  std::vector<Entry> entries;       // kv sorted, no duplicate (key, version)
  std::vector<VersionId> valid;     // nonempty subset
};

// Random tree of <= max_versions, random entries over <= max_entries with
// a small key alphabet (forcing overwrite chains), random nonempty valid
// subset.
inline Instance make_instance(std::mt19937_64& rng, int max_versions = 20,
                              int max_entries = 200) {
  Instance ins;
  int nv = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_versions));
  ins.versions.push_back(ins.tree.create_root());
  for (int i = 1; i < nv; ++i)
    ins.versions.push_back(
        ins.tree.clone(ins.versions[rng() % ins.versions.size()]));

  int nkeys = 1 + static_cast<int>(rng() % 12);
  int ne = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_entries));
  std::vector<std::pair<std::string, VersionId>> seen;
  for (int i = 0; i < ne; ++i) {
    std::string key = "k" + std::to_string(rng() % static_cast<std::uint64_t>(nkeys));
    VersionId v = ins.versions[rng() % ins.versions.size()];
    if (std::find(seen.begin(), seen.end(), std::make_pair(key, v)) !=
        seen.end())
      continue;
    seen.emplace_back(key, v);
    ins.entries.push_back(
        Entry{key, v, sda::Value("x" + std::to_string(i))});
  }
  std::sort(ins.entries.begin(), ins.entries.end(),
            sda::KvLess{&ins.tree});

  for (VersionId v : ins.versions)
    if (rng() % 2) ins.valid.push_back(v);
  if (ins.valid.empty())
    ins.valid.push_back(ins.versions[rng() % ins.versions.size()]);
  std::sort(ins.valid.begin(), ins.valid.end(),
            [&](VersionId a, VersionId b) {
              return ins.tree.dfs(a) < ins.tree.dfs(b);
            });
  return ins;
}

}  // namespace brute
