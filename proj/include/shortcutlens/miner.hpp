#pragma once

// Exhaustive shortcut mining: enumerate every one- and two-slot template an
// instance supports, count covered instances per split and label, keep the
// templates meeting the thresholds and organize them into a hierarchy.

#include "shortcutlens/artifact.hpp"
#include "shortcutlens/corpus.hpp"
#include "shortcutlens/template.hpp"

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace shortcutlens {

namespace detail {

inline constexpr std::uint32_t kNone = 0;

/// Interned template. Ids start at 1; pos2 == kNone marks a one-slot template.
struct TemplateKey {
  std::uint32_t pos1 = kNone;
  std::uint32_t word1 = kNone;
  std::uint32_t pos2 = kNone;
  std::uint32_t word2 = kNone;
  std::uint32_t gap = 0;

  bool single() const noexcept { return pos2 == kNone; }
  bool operator==(const TemplateKey&) const = default;
  auto operator<=>(const TemplateKey&) const = default;
};

struct TemplateKeyHash {
  std::size_t operator()(const TemplateKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.pos1} << 40) ^ (std::uint64_t{k.word1} << 20) ^ k.word2;
    h ^= (std::uint64_t{k.pos2} << 52) ^ (std::uint64_t{k.gap} << 32) ^ 0x9e3779b97f4a7c15ULL;
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return static_cast<std::size_t>(h);
  }
};

class Vocabulary {
public:
  std::uint32_t intern(const std::string& s) {
    auto [it, fresh] = ids_.try_emplace(s, static_cast<std::uint32_t>(names_.size() + 1));
    if (fresh) names_.push_back(s);
    return it->second;
  }
  std::optional<std::uint32_t> find(const std::string& s) const {
    auto it = ids_.find(s);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& name(std::uint32_t id) const { return names_.at(id - 1); }

private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> names_;
};

template <class Emit>
void for_each_key(std::span<const std::pair<std::uint32_t, std::uint32_t>> toks, std::optional<std::size_t> max_gap,
                  Emit&& emit) {
  const std::size_t n = toks.size();
  for (std::size_t p = 0; p < n; ++p) {
    const auto [pa, wa] = toks[p];
    emit({pa, kNone, kNone, kNone, 0});
    emit({pa, wa, kNone, kNone, 0});
    std::size_t last = n - 1;
    if (max_gap && p + 1 + *max_gap < last) last = p + 1 + *max_gap;
    for (std::size_t q = p + 1; q <= last; ++q) {
      const auto [pb, wb] = toks[q];
      const auto gap = static_cast<std::uint32_t>(q - p - 1);
      emit({pa, kNone, pb, kNone, gap});
      emit({pa, kNone, pb, wb, gap});
      emit({pa, wa, pb, kNone, gap});
      emit({pa, wa, pb, wb, gap});
    }
  }
}

inline std::vector<TemplateKey> key_parents(const TemplateKey& k) {
  std::vector<TemplateKey> out;
  if (k.single()) {
    if (k.word1 != kNone) out.push_back({k.pos1, kNone, kNone, kNone, 0});
    return out;
  }
  if (k.word1 != kNone) out.push_back({k.pos1, kNone, k.pos2, k.word2, k.gap});
  if (k.word2 != kNone) out.push_back({k.pos1, k.word1, k.pos2, kNone, k.gap});
  out.push_back({k.pos1, k.word1, kNone, kNone, 0});
  out.push_back({k.pos2, k.word2, kNone, kNone, 0});
  if (out[out.size() - 1] == out[out.size() - 2]) out.pop_back();
  return out;
}

}  // namespace detail

/// Per-template label counts gathered over a dataset. Only templates that
/// cover at least one instance are present.
class Accumulation {
public:
  std::size_t size() const noexcept { return keys_.size(); }
  std::size_t labels() const noexcept { return labels_; }
  std::size_t splits() const noexcept { return splits_; }

  Template templ(std::size_t entry) const { return to_template(keys_[entry]); }

  LabelCounts whole(std::size_t entry) const {
    LabelCounts c{std::vector<std::uint32_t>(labels_, 0)};
    const auto* cell = &cells_[entry * labels_ * splits_];
    for (std::size_t s = 0; s < splits_; ++s) {
      for (std::size_t l = 0; l < labels_; ++l) c.counts[l] += cell[s * labels_ + l];
    }
    return c;
  }
  LabelCounts split(std::size_t entry, std::size_t s) const {
    const auto* cell = &cells_[entry * labels_ * splits_ + s * labels_];
    return LabelCounts{std::vector<std::uint32_t>(cell, cell + labels_)};
  }
  std::uint32_t coverage(std::size_t entry) const {
    std::uint32_t c = 0;
    const auto* cell = &cells_[entry * labels_ * splits_];
    for (std::size_t i = 0; i < labels_ * splits_; ++i) c += cell[i];
    return c;
  }

  std::optional<std::size_t> find(const Template& t) const {
    auto key = to_key(t);
    if (!key) return std::nullopt;
    auto it = index_.find(*key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Internal access for the miner.
  const detail::TemplateKey& key(std::size_t entry) const { return keys_[entry]; }
  std::optional<std::size_t> find(const detail::TemplateKey& k) const {
    auto it = index_.find(k);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>>& instance_tokens() const {
    return tokens_;
  }

  Template to_template(const detail::TemplateKey& k) const {
    auto slot = [&](std::uint32_t pos, std::uint32_t word) {
      return word == detail::kNone ? Slot::of(pos_.name(pos)) : Slot::of(pos_.name(pos), words_.name(word));
    };
    if (k.single()) return Template::single(slot(k.pos1, k.word1));
    return Template::pair(slot(k.pos1, k.word1), k.gap, slot(k.pos2, k.word2));
  }

  std::optional<detail::TemplateKey> to_key(const Template& t) const {
    if (t.is_root() || t.arity() > 2) return std::nullopt;
    detail::TemplateKey k;
    auto fill = [&](const Slot& s, std::uint32_t& pos, std::uint32_t& word) {
      if (s.is_aggregate()) return false;
      auto p = pos_.find(s.pos);
      if (!p) return false;
      pos = *p;
      if (s.word) {
        auto w = words_.find(case_fold_ ? ascii_fold(*s.word) : *s.word);
        if (!w) return false;
        word = *w;
      }
      return true;
    };
    if (!fill(t.slot(0), k.pos1, k.word1)) return std::nullopt;
    if (t.arity() == 2) {
      if (!fill(t.slot(1), k.pos2, k.word2)) return std::nullopt;
      k.gap = static_cast<std::uint32_t>(*t.gap());
    }
    return k;
  }

private:
  friend Accumulation accumulate(const Dataset&, const MiningConfig&, unsigned);

  std::size_t labels_ = 0;
  std::size_t splits_ = 0;
  bool case_fold_ = false;
  detail::Vocabulary pos_;
  detail::Vocabulary words_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> tokens_;
  std::vector<detail::TemplateKey> keys_;
  std::vector<std::uint32_t> cells_;  // entry-major, then split, then label
  std::unordered_map<detail::TemplateKey, std::size_t, detail::TemplateKeyHash> index_;
};

/// Every template the instance supports: for each token its POS-only and
/// POS+word one-slot templates; for each ordered token pair within max_gap
/// the four word-specificity variants of the two-slot template.
inline std::set<Template> enumerate_templates(const AnnotatedInstance& inst, const MiningConfig& config) {
  std::set<Template> out;
  const auto& toks = inst.tokens;
  auto word = [&](const Token& t) { return config.case_fold ? ascii_fold(t.surface) : t.surface; };
  for (std::size_t p = 0; p < toks.size(); ++p) {
    out.insert(Template::single(Slot::of(toks[p].pos)));
    out.insert(Template::single(Slot::of(toks[p].pos, word(toks[p]))));
    for (std::size_t q = p + 1; q < toks.size(); ++q) {
      const std::size_t gap = q - p - 1;
      if (config.max_gap && gap > *config.max_gap) break;
      for (bool wa : {false, true}) {
        for (bool wb : {false, true}) {
          out.insert(Template::pair(wa ? Slot::of(toks[p].pos, word(toks[p])) : Slot::of(toks[p].pos), gap,
                                    wb ? Slot::of(toks[q].pos, word(toks[q])) : Slot::of(toks[q].pos)));
        }
      }
    }
  }
  return out;
}

/// Counts, for every template, the covered instances per split and label.
/// An instance contributes once per template no matter how often it matches.
/// Work is sharded by key hash across `threads` workers (0 = hardware).
inline Accumulation accumulate(const Dataset& ds, const MiningConfig& config, unsigned threads = 0) {
  using detail::TemplateKey;
  Accumulation acc;
  acc.labels_ = ds.labels().size();
  acc.splits_ = ds.splits().size();
  acc.case_fold_ = config.case_fold;
  acc.tokens_.reserve(ds.size());
  for (const auto& inst : ds.instances()) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ids;
    ids.reserve(inst.tokens.size());
    for (const auto& t : inst.tokens) {
      ids.emplace_back(acc.pos_.intern(t.pos), acc.words_.intern(config.case_fold ? ascii_fold(t.surface) : t.surface));
    }
    acc.tokens_.push_back(std::move(ids));
  }

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t cells = acc.labels_ * acc.splits_;
  struct Shard {
    std::unordered_map<TemplateKey, std::uint32_t, detail::TemplateKeyHash> index;
    std::vector<TemplateKey> keys;
    std::vector<std::uint32_t> cells;
  };
  std::vector<Shard> shards(threads);
  auto work = [&](unsigned t) {
    auto& shard = shards[t];
    detail::TemplateKeyHash hasher;
    std::vector<TemplateKey> local;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      local.clear();
      detail::for_each_key(acc.tokens_[i], config.max_gap, [&](const TemplateKey& k) {
        if (threads == 1 || hasher(k) % threads == t) local.push_back(k);
      });
      std::sort(local.begin(), local.end());
      local.erase(std::unique(local.begin(), local.end()), local.end());
      const std::size_t cell = ds.split_of(i) * acc.labels_ + ds.label_of(i);
      for (const auto& k : local) {
        auto [it, fresh] = shard.index.try_emplace(k, static_cast<std::uint32_t>(shard.keys.size()));
        if (fresh) {
          shard.keys.push_back(k);
          shard.cells.resize(shard.cells.size() + cells, 0);
        }
        ++shard.cells[it->second * cells + cell];
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  std::size_t total = 0;
  for (const auto& s : shards) total += s.keys.size();
  acc.keys_.reserve(total);
  acc.cells_.reserve(total * cells);
  acc.index_.reserve(total);
  for (auto& s : shards) {
    for (std::size_t e = 0; e < s.keys.size(); ++e) {
      acc.index_.emplace(s.keys[e], acc.keys_.size());
      acc.keys_.push_back(s.keys[e]);
    }
    acc.cells_.insert(acc.cells_.end(), s.cells.begin(), s.cells.end());
    s = Shard{};
  }
  return acc;
}

/// Entries meeting the whole-set minima and every configured per-split
/// minimum, in entry order.
inline std::vector<std::size_t> filter_shortcuts(const Accumulation& acc, const MiningConfig& config,
                                                 const Dataset& ds) {
  std::vector<std::pair<std::size_t, SplitThreshold>> split_checks;
  for (const auto& [split, th] : config.per_split) {
    auto idx = ds.split_index(split);
    if (!idx) throw ReferenceError("per-split threshold for unknown split", split);
    split_checks.emplace_back(*idx, th);
  }
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < acc.size(); ++e) {
    if (acc.coverage(e) < config.min_coverage) continue;
    if (!acc.whole(e).meets(config.min_coverage, config.min_productivity)) continue;
    bool ok = true;
    for (const auto& [s, th] : split_checks) {
      if (!acc.split(e, s).meets(th.min_coverage, th.min_productivity)) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(e);
  }
  return out;
}

/// Hierarchy over the selected entries: the selected nodes, every ancestor up
/// to the virtual root, and the direct children of selected nodes whose
/// coverage reaches the floor. Covered instance lists are filled by a second
/// pass over the corpus.
inline MinedArtifact build_hierarchy(const Accumulation& acc, std::span<const std::size_t> selected,
                                     const Dataset& ds, const MiningConfig& config) {
  using detail::TemplateKey;
  MinedArtifact art;
  art.dataset = DatasetInfo::of(ds);
  art.config = config;
  if (selected.empty()) return art;

  std::unordered_set<std::size_t> chosen(selected.begin(), selected.end());
  std::unordered_set<std::size_t> graph(selected.begin(), selected.end());
  std::vector<std::size_t> stack(selected.begin(), selected.end());
  while (!stack.empty()) {
    auto e = stack.back();
    stack.pop_back();
    for (const auto& pk : detail::key_parents(acc.key(e))) {
      auto p = acc.find(pk);
      if (!p) throw Error("internal: ancestor template missing from accumulation");
      if (graph.insert(*p).second) stack.push_back(*p);
    }
  }
  for (std::size_t e = 0; e < acc.size(); ++e) {
    if (graph.count(e) || acc.coverage(e) < config.coverage_floor) continue;
    for (const auto& pk : detail::key_parents(acc.key(e))) {
      auto p = acc.find(pk);
      if (p && chosen.count(*p)) {
        graph.insert(e);
        break;
      }
    }
  }

  std::vector<std::size_t> entries(graph.begin(), graph.end());
  std::sort(entries.begin(), entries.end());
  std::unordered_map<TemplateKey, std::size_t, detail::TemplateKeyHash> node_of;
  node_of.reserve(entries.size());
  art.nodes.reserve(entries.size() + 1);

  ShortcutNode root;
  root.id = kRootId;
  std::tie(root.whole, root.per_split) = count_labels(ds, ds.all_members());
  root.covered.assign(ds.all_members().begin(), ds.all_members().end());

  for (auto e : entries) {
    ShortcutNode n;
    n.templ = acc.templ(e);
    n.id = template_id(n.templ);
    n.whole = acc.whole(e);
    for (std::size_t s = 0; s < acc.splits(); ++s) n.per_split.push_back(acc.split(e, s));
    n.selected = chosen.count(e) > 0;
    node_of.emplace(acc.key(e), art.nodes.size());
    art.nodes.push_back(std::move(n));
  }
  for (auto e : entries) {
    auto& child = art.nodes[node_of.at(acc.key(e))];
    auto pks = detail::key_parents(acc.key(e));
    if (pks.empty()) {
      child.parents.push_back(kRootId);
      root.children.push_back(child.id);
    }
    for (const auto& pk : pks) {
      auto it = node_of.find(pk);
      if (it == node_of.end()) continue;
      child.parents.push_back(art.nodes[it->second].id);
      art.nodes[it->second].children.push_back(child.id);
    }
  }

  std::vector<std::size_t> hits;
  for (std::uint32_t i = 0; i < ds.size(); ++i) {
    hits.clear();
    detail::for_each_key(acc.instance_tokens()[i], config.max_gap, [&](const TemplateKey& k) {
      auto it = node_of.find(k);
      if (it != node_of.end()) hits.push_back(it->second);
    });
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    for (auto h : hits) art.nodes[h].covered.push_back(i);
  }

  art.nodes.push_back(std::move(root));
  art.finalize();
  return art;
}

/// Full pipeline. The result depends only on the dataset content and config.
inline MinedArtifact mine(const Dataset& ds, const MiningConfig& config, unsigned threads = 0) {
  config.validate();
  auto acc = accumulate(ds, config, threads);
  auto selected = filter_shortcuts(acc, config, ds);
  return build_hierarchy(acc, selected, ds, config);
}

}  // namespace shortcutlens
