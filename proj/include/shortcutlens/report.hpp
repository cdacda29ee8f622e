#pragma once

// Shortcut table rows shared by the HTTP service and the CLI export.

#include "shortcutlens/artifact.hpp"
#include "shortcutlens/template.hpp"

#include <json.hpp>

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

namespace shortcutlens {

struct ShortcutFilter {
  std::uint32_t min_coverage = 10;
  double min_productivity = 0.75;
};

inline nlohmann::json stats_json(const LabelCounts& c, const std::vector<std::string>& labels) {
  nlohmann::json dist = nlohmann::json::object();
  for (std::size_t l = 0; l < labels.size(); ++l) dist[labels[l]] = c.counts[l];
  auto pred = c.prediction();
  auto prod = c.productivity();
  return {{"coverage", c.coverage()},
          {"label_distribution", std::move(dist)},
          {"prediction", pred ? nlohmann::json(labels[*pred]) : nlohmann::json(nullptr)},
          {"productivity", prod ? nlohmann::json(*prod) : nlohmann::json("undefined")}};
}

/// One table row. `split` adds that split's statistics next to the whole-set
/// block.
inline nlohmann::json shortcut_row(const ShortcutNode& n, const MinedArtifact& art, std::string_view split = {}) {
  nlohmann::json row{{"id", n.id},
                     {"template", to_string(n.templ)},
                     {"display", display_string(n.templ)},
                     {"selected", n.selected},
                     {"aggregated", n.aggregated},
                     {"child_count", n.children.size()},
                     {"whole", stats_json(n.whole, art.dataset.labels)}};
  if (!split.empty()) {
    row["split"] = stats_json(art.stats(n, split), art.dataset.labels);
    row["split"]["name"] = std::string(split);
  }
  if (n.aggregated) {
    const Slot& fin = n.templ.final_slot();
    row["word_set"] = fin.word_set;
    row["representative"] = fin.representative;
    row["member_count"] = n.children.size();
  }
  return row;
}

/// Order used by every shortcut listing: coverage descending, then id.
inline void sort_by_coverage(std::vector<const ShortcutNode*>& nodes) {
  std::sort(nodes.begin(), nodes.end(), [](const ShortcutNode* a, const ShortcutNode* b) {
    if (a->whole.coverage() != b->whole.coverage()) return a->whole.coverage() > b->whole.coverage();
    return a->id < b->id;
  });
}

/// Selected shortcuts whose whole-set statistics pass the filter.
inline std::vector<const ShortcutNode*> filter_selected(const MinedArtifact& art, ShortcutFilter f) {
  std::vector<const ShortcutNode*> out;
  for (const auto& n : art.nodes) {
    if (n.is_root() || !n.selected) continue;
    if (n.whole.meets(f.min_coverage, f.min_productivity)) out.push_back(&n);
  }
  sort_by_coverage(out);
  return out;
}

inline nlohmann::json shortcut_table(const MinedArtifact& art, ShortcutFilter f, std::string_view split = {}) {
  auto rows = nlohmann::json::array();
  auto nodes = filter_selected(art, f);
  for (const auto* n : nodes) rows.push_back(shortcut_row(*n, art, split));
  nlohmann::json body{{"dataset", art.dataset.name},
                      {"min_coverage", f.min_coverage},
                      {"min_productivity", f.min_productivity},
                      {"count", nodes.size()},
                      {"shortcuts", std::move(rows)}};
  if (!split.empty()) body["split"] = std::string(split);
  return body;
}

}  // namespace shortcutlens
