#pragma once

// What-if analysis over a group of shortcuts: dirty/clean partition, group
// productivity with disagreement accounting, machine accuracy comparison and
// remove-then-remine.

#include "shortcutlens/artifact.hpp"
#include "shortcutlens/corpus.hpp"
#include "shortcutlens/miner.hpp"

#include <json.hpp>

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace shortcutlens {

/// Shortcut ids plus the split they are evaluated on ("" = whole dataset).
struct GroupSelection {
  std::vector<std::string> shortcut_ids;
  std::string split;

  /// Sorted, de-duplicated ids.
  std::vector<std::string> canonical_ids() const {
    std::vector<std::string> ids = shortcut_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }
};

struct Partition {
  std::vector<std::uint32_t> dirty;  // dataset order
  std::vector<std::uint32_t> clean;
};

struct GroupProductivity {
  std::optional<double> productivity;  // nullopt when no instance is agreed
  std::size_t disagreed = 0;
  std::size_t coverage = 0;
};

struct AccuracyRow {
  std::string model;  // empty for the averaged row
  std::optional<double> whole, dirty, clean;

  std::optional<double> delta_dirty() const {
    if (!whole || !dirty) return std::nullopt;
    return *dirty - *whole;
  }
  std::optional<double> delta_clean() const {
    if (!whole || !clean) return std::nullopt;
    return *clean - *whole;
  }
};

struct AccuracyReport {
  std::vector<AccuracyRow> models;
  AccuracyRow average;
  std::vector<std::string> omitted_models;  // lacking full coverage of the split
};

struct WhatIfReport {
  GroupSelection selection;
  Partition partition;
  GroupProductivity group;
  AccuracyReport accuracy;

  nlohmann::json to_json(const Dataset& ds) const;
};

namespace detail {

inline std::vector<const ShortcutNode*> resolve(const GroupSelection& sel, const MinedArtifact& art,
                                                const Dataset& ds) {
  require_fresh(art, ds);
  if (!sel.split.empty() && !ds.split_index(sel.split)) throw ReferenceError("unknown split", sel.split);
  std::vector<const ShortcutNode*> nodes;
  for (const auto& id : sel.canonical_ids()) nodes.push_back(&art.at(id));
  return nodes;
}

inline bool in_split(const Dataset& ds, std::uint32_t i, const std::string& split, std::optional<std::uint32_t> s) {
  return split.empty() || ds.split_of(i) == *s;
}

inline nlohmann::json maybe(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json("undefined");
}

}  // namespace detail

/// Dirty = instances of the split covered by any selected shortcut; clean =
/// the rest of the split.
inline Partition partition(const GroupSelection& sel, const MinedArtifact& art, const Dataset& ds) {
  auto nodes = detail::resolve(sel, art, ds);
  std::vector<bool> hit(ds.size(), false);
  for (const auto* n : nodes) {
    for (auto i : n->covered) hit[i] = true;
  }
  Partition p;
  for (auto i : ds.members(sel.split)) (hit[i] ? p.dirty : p.clean).push_back(i);
  return p;
}

/// An instance covered by selected shortcuts predicting different labels (on
/// the split) is disagreed. Productivity is the fraction of agreed instances
/// whose true label equals the shared prediction.
inline GroupProductivity group_productivity(const GroupSelection& sel, const MinedArtifact& art, const Dataset& ds) {
  auto nodes = detail::resolve(sel, art, ds);
  auto split = sel.split.empty() ? std::nullopt : ds.split_index(sel.split);
  std::vector<std::set<std::size_t>> predicted(ds.size());
  for (const auto* n : nodes) {
    auto pred = art.stats(*n, sel.split).prediction();
    if (!pred) continue;
    for (auto i : n->covered) {
      if (detail::in_split(ds, i, sel.split, split)) predicted[i].insert(*pred);
    }
  }
  GroupProductivity g;
  std::size_t agreed = 0, right = 0;
  for (auto i : ds.members(sel.split)) {
    if (predicted[i].empty()) continue;
    ++g.coverage;
    if (predicted[i].size() > 1) {
      ++g.disagreed;
      continue;
    }
    ++agreed;
    if (*predicted[i].begin() == ds.label_of(i)) ++right;
  }
  if (agreed) g.productivity = static_cast<double>(right) / static_cast<double>(agreed);
  return g;
}

/// Per-model accuracy on the whole split and on both partitions, plus the
/// unweighted mean over models that predict every instance of the split.
inline AccuracyReport accuracy_deltas(const Partition& p, const Dataset& ds, const std::string& split) {
  AccuracyReport r;
  auto whole = ds.members(split);
  std::vector<double> sw, sd, sc;
  bool dirty_ok = true, clean_ok = true;
  for (std::size_t m = 0; m < ds.models().size(); ++m) {
    auto w = model_accuracy(ds, m, whole);
    if (!w) {
      r.omitted_models.push_back(ds.models()[m].model_name);
      continue;
    }
    AccuracyRow row{ds.models()[m].model_name, w, model_accuracy(ds, m, p.dirty), model_accuracy(ds, m, p.clean)};
    sw.push_back(*w);
    if (row.dirty) sd.push_back(*row.dirty); else dirty_ok = false;
    if (row.clean) sc.push_back(*row.clean); else clean_ok = false;
    r.models.push_back(std::move(row));
  }
  auto mean = [](const std::vector<double>& v, bool ok) -> std::optional<double> {
    if (!ok || v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  r.average = {"", mean(sw, true), mean(sd, dirty_ok), mean(sc, clean_ok)};
  return r;
}

inline WhatIfReport what_if(const GroupSelection& sel, const MinedArtifact& art, const Dataset& ds) {
  WhatIfReport r;
  r.selection = sel;
  r.partition = partition(sel, art, ds);
  r.group = group_productivity(sel, art, ds);
  r.accuracy = accuracy_deltas(r.partition, ds, sel.split);
  return r;
}

inline nlohmann::json WhatIfReport::to_json(const Dataset& ds) const {
  auto row_json = [](const AccuracyRow& row) {
    nlohmann::json j{{"whole", detail::maybe(row.whole)},
                     {"dirty", detail::maybe(row.dirty)},
                     {"clean", detail::maybe(row.clean)},
                     {"delta_dirty", detail::maybe(row.delta_dirty())},
                     {"delta_clean", detail::maybe(row.delta_clean())}};
    if (!row.model.empty()) j["model"] = row.model;
    return j;
  };
  nlohmann::json j;
  j["split"] = selection.split;
  j["shortcut_ids"] = selection.canonical_ids();
  j["group_coverage"] = group.coverage;
  j["disagreed_count"] = group.disagreed;
  j["group_productivity"] = detail::maybe(group.productivity);
  auto ids = [&](const std::vector<std::uint32_t>& v) {
    auto arr = nlohmann::json::array();
    for (auto i : v) arr.push_back(ds[i].id);
    return arr;
  };
  j["dirty_ids"] = ids(partition.dirty);
  j["clean_ids"] = ids(partition.clean);
  auto& acc = j["accuracy"];
  acc["models"] = nlohmann::json::array();
  for (const auto& row : accuracy.models) acc["models"].push_back(row_json(row));
  acc["average"] = row_json(accuracy.average);
  acc["omitted_models"] = accuracy.omitted_models;
  return j;
}

// Removal ---------------------------------------------------------------------

struct ShortcutRef {
  std::string id;
  std::string canonical;
};

struct RemovalComparison {
  std::size_t removed_instances = 0;
  std::size_t shortcuts_before = 0;
  std::size_t shortcuts_after = 0;
  std::vector<ShortcutRef> disappeared;
  std::vector<ShortcutRef> appeared;
  std::vector<std::pair<std::string, bool>> selection_present_after;
  std::optional<double> accuracy_before;  // averaged models, evaluation split
  std::optional<double> accuracy_after;

  long shortcut_delta() const {
    return static_cast<long>(shortcuts_after) - static_cast<long>(shortcuts_before);
  }
  std::optional<double> accuracy_delta() const {
    if (!accuracy_before || !accuracy_after) return std::nullopt;
    return *accuracy_after - *accuracy_before;
  }
  nlohmann::json to_json() const;
};

struct RemovalResult {
  Dataset dataset;
  MinedArtifact artifact;
  RemovalComparison comparison;
  nlohmann::json provenance;
  std::vector<std::string> warnings;
};

/// Key identifying a removal: parent content, selection and config.
inline std::string removal_key(const GroupSelection& sel, const Dataset& ds, const MiningConfig& config) {
  nlohmann::json k{{"parent", ds.fingerprint()},
                   {"ids", sel.canonical_ids()},
                   {"split", sel.split},
                   {"config", config.to_json()}};
  return short_hash(k.dump());
}

namespace detail {

inline std::set<std::string> mined_selected(const MinedArtifact& a) {
  std::set<std::string> out;
  for (const auto& n : a.nodes) {
    if (n.selected && !n.aggregated && !n.is_root()) out.insert(n.id);
  }
  return out;
}

}  // namespace detail

/// Drops the dirty instances of the selection, re-mines the remainder with
/// `config` and compares selected (non-aggregate) shortcuts before and after.
inline RemovalResult remove_and_remine(const GroupSelection& sel, const MinedArtifact& art, const Dataset& ds,
                                       const MiningConfig& config, unsigned threads = 0) {
  RemovalResult r;
  auto part = partition(sel, art, ds);
  std::vector<bool> drop(ds.size(), false);
  for (auto i : part.dirty) drop[i] = true;
  std::vector<AnnotatedInstance> kept;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!drop[i]) kept.push_back(ds[i]);
  }
  const auto key = removal_key(sel, ds, config);
  r.dataset = Dataset::from_instances(ds.name() + "~rm-" + key.substr(0, 8), std::move(kept));
  for (const auto& split : ds.splits()) {
    if (!r.dataset.split_index(split)) r.warnings.push_back("removal empties split '" + split + "'");
  }
  std::vector<ModelPredictions> models;
  for (const auto& m : ds.models()) {
    ModelPredictions copy{m.model_name, {}};
    for (const auto& [id, label] : m.predicted) {
      if (r.dataset.find(id)) copy.predicted.emplace(id, label);
    }
    models.push_back(std::move(copy));
  }
  r.dataset.attach_models(std::move(models));
  r.dataset.attach_embeddings(ds.shared_embeddings());

  r.artifact = mine(r.dataset, config, threads);

  auto& c = r.comparison;
  c.removed_instances = part.dirty.size();
  auto before = detail::mined_selected(art);
  auto after = detail::mined_selected(r.artifact);
  c.shortcuts_before = before.size();
  c.shortcuts_after = after.size();
  for (const auto& id : before) {
    if (!after.count(id)) c.disappeared.push_back({id, to_string(art.at(id).templ)});
  }
  for (const auto& id : after) {
    if (!before.count(id)) c.appeared.push_back({id, to_string(r.artifact.at(id).templ)});
  }
  for (const auto& id : sel.canonical_ids()) {
    const auto* n = r.artifact.find(id);
    c.selection_present_after.emplace_back(id, n && n->selected);
  }
  c.accuracy_before = accuracy_deltas(Partition{}, ds, sel.split).average.whole;
  if (sel.split.empty() || r.dataset.split_index(sel.split)) {
    c.accuracy_after = accuracy_deltas(Partition{}, r.dataset, sel.split).average.whole;
  }

  r.provenance = {{"derived", r.dataset.name()},
                  {"parent", ds.name()},
                  {"parent_fingerprint", ds.fingerprint()},
                  {"fingerprint", r.dataset.fingerprint()},
                  {"removal_key", key},
                  {"selection", {{"shortcut_ids", sel.canonical_ids()}, {"split", sel.split}}},
                  {"config", config.to_json()},
                  {"removed_instances", part.dirty.size()}};
  return r;
}

inline nlohmann::json RemovalComparison::to_json() const {
  auto refs = [](const std::vector<ShortcutRef>& v) {
    auto arr = nlohmann::json::array();
    for (const auto& r : v) arr.push_back({{"id", r.id}, {"template", r.canonical}});
    return arr;
  };
  nlohmann::json present = nlohmann::json::object();
  for (const auto& [id, ok] : selection_present_after) present[id] = ok;
  return {{"removed_instances", removed_instances},
          {"shortcuts_before", shortcuts_before},
          {"shortcuts_after", shortcuts_after},
          {"shortcut_delta", shortcut_delta()},
          {"disappeared", refs(disappeared)},
          {"appeared", refs(appeared)},
          {"selection_present_after", present},
          {"accuracy_before", detail::maybe(accuracy_before)},
          {"accuracy_after", detail::maybe(accuracy_after)},
          {"accuracy_delta", detail::maybe(accuracy_delta())}};
}

}  // namespace shortcutlens
