#pragma once

// Merges sibling shortcuts whose final words are close in embedding space
// into aggregate shortcuts (complete-linkage clustering on cosine distance).

#include "shortcutlens/artifact.hpp"
#include "shortcutlens/corpus.hpp"
#include "shortcutlens/template.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace shortcutlens {

inline constexpr double kDefaultMergeCut = 0.75;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct MergeGroup {
  std::vector<std::string> members;  // node ids
  std::vector<std::string> words;    // final word of each member
  std::string parent;
  std::string representative;        // medoid word
  std::vector<std::uint32_t> covered;  // union over members
  std::vector<double> distances;     // members x members, row-major
};

/// 1 - cosine similarity.
inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double sim = dot / (std::sqrt(na) * std::sqrt(nb));
  return 1.0 - std::clamp(sim, -1.0, 1.0);
}

namespace detail {

/// Template with the word on its right-most slot dropped, when that slot
/// carries a plain word literal.
inline std::optional<Template> merge_parent_template(const Template& t) {
  if (t.is_root() || !t.final_slot().has_word()) return std::nullopt;
  return t.with_slot(t.arity() - 1, t.final_slot().pos_only());
}

/// Id of the hierarchy parent a node would merge under, if it has one.
inline std::optional<std::string> merge_parent_id(const ShortcutNode& n) {
  auto pt = merge_parent_template(n.templ);
  if (!pt) return std::nullopt;
  auto pid = template_id(*pt);
  if (std::find(n.parents.begin(), n.parents.end(), pid) == n.parents.end()) return std::nullopt;
  return pid;
}

}  // namespace detail

/// Siblings under the same parent, predicting the same label, differing only
/// in the word of the final slot, with embeddings for both words.
inline bool mergeable(const ShortcutNode& a, const ShortcutNode& b, const EmbeddingTable* embeddings) {
  if (a.id == b.id || !embeddings) return false;
  auto pa = detail::merge_parent_id(a);
  auto pb = detail::merge_parent_id(b);
  if (!pa || !pb || *pa != *pb) return false;
  auto la = a.whole.prediction();
  auto lb = b.whole.prediction();
  if (!la || la != lb) return false;
  return embeddings->find(*a.templ.final_slot().word) && embeddings->find(*b.templ.final_slot().word);
}

/// Cosine distance of the final words, or infinity for non-mergeable pairs.
inline double pair_distance(const ShortcutNode& a, const ShortcutNode& b, const EmbeddingTable* embeddings) {
  if (!mergeable(a, b, embeddings)) return kInfinity;
  return cosine_distance(*embeddings->find(*a.templ.final_slot().word),
                         *embeddings->find(*b.templ.final_slot().word));
}

/// Agglomerative complete-linkage clustering of `n` items from a row-major
/// distance matrix, stopping once every inter-cluster distance exceeds `cut`.
/// Uses the nearest-neighbour chain; distances above the cut never merge.
/// Clusters come back sorted internally and ordered by smallest member.
inline std::vector<std::vector<std::size_t>> complete_linkage_cluster(std::size_t n, std::vector<double> dist,
                                                                      double cut = kDefaultMergeCut) {
  for (auto& d : dist) {
    if (!(d <= cut)) d = kInfinity;
  }
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  std::vector<bool> active(n, true);
  std::vector<std::size_t> chain;
  auto D = [&](std::size_t i, std::size_t j) -> double& { return dist[i * n + j]; };

  while (true) {
    if (chain.empty()) {
      auto start = std::find(active.begin(), active.end(), true);
      if (start == active.end()) break;
      chain.push_back(static_cast<std::size_t>(start - active.begin()));
    }
    const std::size_t a = chain.back();
    const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
    std::size_t b = n;
    double best = kInfinity;
    for (std::size_t c = 0; c < n; ++c) {
      if (c == a || !active[c]) continue;
      if (D(a, c) < best) {
        best = D(a, c);
        b = c;
      }
    }
    if (b == n) {
      // Nothing within the cut; distances only grow, so `a` is final.
      active[a] = false;
      chain.pop_back();
      continue;
    }
    if (prev != n && D(a, prev) == best) b = prev;
    if (b != prev) {
      chain.push_back(b);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    const std::size_t keep = std::min(a, b), drop = std::max(a, b);
    for (std::size_t c = 0; c < n; ++c) {
      if (c == keep || c == drop) continue;
      D(keep, c) = D(c, keep) = std::max(D(keep, c), D(drop, c));
    }
    members[keep].insert(members[keep].end(), members[drop].begin(), members[drop].end());
    members[drop].clear();
    active[drop] = false;
  }

  std::vector<std::vector<std::size_t>> out;
  for (auto& m : members) {
    if (m.empty()) continue;
    std::sort(m.begin(), m.end());
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Index of the member with the smallest average distance to the others;
/// ties go to the lexicographically smallest word.
inline std::size_t medoid(const std::vector<std::string>& words, const std::vector<double>& dist) {
  const std::size_t n = words.size();
  std::size_t best = 0;
  double best_avg = kInfinity;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum += dist[i * n + j];
    }
    double avg = n > 1 ? sum / static_cast<double>(n - 1) : 0.0;
    if (avg < best_avg || (avg == best_avg && words[i] < words[best])) {
      best = i;
      best_avg = avg;
    }
  }
  return best;
}

/// Adds one aggregate node per group: it takes the members' shared parent,
/// the members move beneath it, and its statistics are recounted from the
/// union of covered instances. Groups whose aggregate already exists are
/// skipped.
inline MinedArtifact insert_aggregates(MinedArtifact art, const Dataset& ds, const std::vector<MergeGroup>& groups) {
  require_fresh(art, ds);
  std::set<std::string> added;
  for (const auto& g : groups) {
    if (g.members.size() < 2) continue;
    const auto& first = art.at(g.members.front());
    const Slot& fin = first.templ.final_slot();
    Template agg_t = first.templ.with_slot(first.templ.arity() - 1, Slot::of_set(fin.pos, g.words, g.representative));
    ShortcutNode agg;
    agg.templ = std::move(agg_t);
    agg.id = template_id(agg.templ);
    if (art.find(agg.id) || !added.insert(agg.id).second) continue;
    agg.aggregated = true;
    agg.covered = g.covered;
    std::tie(agg.whole, agg.per_split) = count_labels(ds, agg.covered);
    agg.selected = agg.whole.meets(art.config.min_coverage, art.config.min_productivity);
    for (const auto& [split, th] : art.config.per_split) {
      auto s = art.split_index(split);
      if (!s || !agg.per_split[*s].meets(th.min_coverage, th.min_productivity)) agg.selected = false;
    }
    agg.parents = {g.parent};
    agg.children = g.members;

    auto* parent = art.find(g.parent);
    if (!parent) throw ReferenceError("unknown parent", g.parent);
    auto& pc = parent->children;
    pc.erase(std::remove_if(pc.begin(), pc.end(),
                            [&](const std::string& c) {
                              return std::find(g.members.begin(), g.members.end(), c) != g.members.end();
                            }),
             pc.end());
    pc.push_back(agg.id);
    for (const auto& m : g.members) {
      auto& mp = art.find(m)->parents;
      std::replace(mp.begin(), mp.end(), g.parent, agg.id);
    }
    art.nodes.push_back(std::move(agg));
  }
  art.finalize();
  return art;
}

/// Groups mergeable siblings by (parent, prediction label) and clusters each
/// bucket. Only clusters of two or more shortcuts are returned.
inline std::vector<MergeGroup> find_merge_groups(const MinedArtifact& art, const EmbeddingTable* embeddings,
                                                 double cut = kDefaultMergeCut) {
  std::vector<MergeGroup> groups;
  if (!embeddings) return groups;
  std::map<std::pair<std::string, std::size_t>, std::vector<const ShortcutNode*>> buckets;
  for (const auto& n : art.nodes) {
    auto pid = detail::merge_parent_id(n);
    auto pred = n.whole.prediction();
    if (!pid || !pred) continue;
    buckets[{*pid, *pred}].push_back(&n);
  }
  for (const auto& [key, nodes] : buckets) {
    const std::size_t n = nodes.size();
    if (n < 2) continue;
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = pair_distance(*nodes[i], *nodes[j], embeddings);
    }
    for (const auto& cluster : complete_linkage_cluster(n, dist, cut)) {
      if (cluster.size() < 2) continue;
      MergeGroup g;
      g.parent = key.first;
      std::set<std::uint32_t> pooled;
      for (auto i : cluster) {
        g.members.push_back(nodes[i]->id);
        g.words.push_back(*nodes[i]->templ.final_slot().word);
        pooled.insert(nodes[i]->covered.begin(), nodes[i]->covered.end());
      }
      for (auto i : cluster) {
        for (auto j : cluster) g.distances.push_back(dist[i * n + j]);
      }
      g.representative = g.words[medoid(g.words, g.distances)];
      g.covered.assign(pooled.begin(), pooled.end());
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

/// Clusters and inserts aggregates in one step.
inline MinedArtifact aggregate(MinedArtifact art, const Dataset& ds, const EmbeddingTable* embeddings,
                               double cut = kDefaultMergeCut, std::vector<MergeGroup>* groups_out = nullptr) {
  auto groups = find_merge_groups(art, embeddings, cut);
  art = insert_aggregates(std::move(art), ds, groups);
  if (groups_out) *groups_out = std::move(groups);
  return art;
}

}  // namespace shortcutlens
