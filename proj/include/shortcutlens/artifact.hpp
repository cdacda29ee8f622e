#pragma once

// Mined artifact: the shortcut hierarchy with per-split statistics and the
// covered-instance index, plus its on-disk form.

#include "shortcutlens/corpus.hpp"
#include "shortcutlens/error.hpp"
#include "shortcutlens/hash.hpp"
#include "shortcutlens/template.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace shortcutlens {

/// Covered-instance counts per label, in dataset label order.
struct LabelCounts {
  std::vector<std::uint32_t> counts;

  std::uint32_t coverage() const {
    std::uint32_t c = 0;
    for (auto v : counts) c += v;
    return c;
  }
  /// Dominant label; ties go to the label declared first.
  std::optional<std::size_t> prediction() const {
    if (coverage() == 0) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i) {
      if (counts[i] > counts[best]) best = i;
    }
    return best;
  }
  std::optional<double> productivity() const {
    auto pred = prediction();
    if (!pred) return std::nullopt;
    return static_cast<double>(counts[*pred]) / static_cast<double>(coverage());
  }
  bool meets(std::uint32_t min_coverage, double min_productivity) const {
    auto prod = productivity();
    return coverage() >= min_coverage && prod && *prod >= min_productivity;
  }

  bool operator==(const LabelCounts&) const = default;
};

struct SplitThreshold {
  std::uint32_t min_coverage = 1;
  double min_productivity = 0.0;

  bool operator==(const SplitThreshold&) const = default;
};

struct MiningConfig {
  std::uint32_t min_coverage = 10;
  double min_productivity = 0.75;
  std::map<std::string, SplitThreshold> per_split;  // disabled unless set
  std::optional<std::size_t> max_gap;               // unbounded by default
  bool case_fold = false;
  std::uint32_t coverage_floor = 2;  // for non-path children of selected nodes

  bool operator==(const MiningConfig&) const = default;

  void validate() const {
    auto check = [](std::uint32_t cov, double prod, const std::string& where) {
      if (cov < 1) throw Error(where + "minimum coverage must be >= 1");
      if (!(prod >= 0.0 && prod <= 1.0)) throw Error(where + "minimum productivity must be in [0, 1]");
    };
    check(min_coverage, min_productivity, "");
    for (const auto& [split, th] : per_split) check(th.min_coverage, th.min_productivity, "split " + split + ": ");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["min_coverage"] = min_coverage;
    j["min_productivity"] = min_productivity;
    j["max_gap"] = max_gap ? nlohmann::json(*max_gap) : nlohmann::json(nullptr);
    j["case_fold"] = case_fold;
    j["coverage_floor"] = coverage_floor;
    auto& ps = j["per_split"] = nlohmann::json::object();
    for (const auto& [split, th] : per_split) {
      ps[split] = {{"min_coverage", th.min_coverage}, {"min_productivity", th.min_productivity}};
    }
    return j;
  }

  static MiningConfig from_json(const nlohmann::json& j) {
    MiningConfig c;
    c.min_coverage = j.at("min_coverage").get<std::uint32_t>();
    c.min_productivity = j.at("min_productivity").get<double>();
    if (!j.at("max_gap").is_null()) c.max_gap = j.at("max_gap").get<std::size_t>();
    c.case_fold = j.at("case_fold").get<bool>();
    c.coverage_floor = j.at("coverage_floor").get<std::uint32_t>();
    for (const auto& [split, th] : j.at("per_split").items()) {
      c.per_split[split] = {th.at("min_coverage").get<std::uint32_t>(), th.at("min_productivity").get<double>()};
    }
    return c;
  }

  std::string hash() const { return short_hash(to_json().dump()); }
};

struct ShortcutNode {
  std::string id;
  Template templ;
  LabelCounts whole;
  std::vector<LabelCounts> per_split;  // dataset split order
  std::vector<std::string> parents;
  std::vector<std::string> children;
  bool selected = false;
  bool aggregated = false;
  std::vector<std::uint32_t> covered;  // sorted instance indices

  bool is_root() const noexcept { return templ.is_root(); }
};

struct DatasetInfo {
  std::string name;
  std::string fingerprint;
  std::vector<std::string> labels;
  std::vector<std::string> splits;
  std::vector<std::string> instance_ids;

  static DatasetInfo of(const Dataset& ds) {
    DatasetInfo info{ds.name(), ds.fingerprint(), ds.labels(), ds.splits(), {}};
    info.instance_ids.reserve(ds.size());
    for (const auto& inst : ds.instances()) info.instance_ids.push_back(inst.id);
    return info;
  }
};

/// Label counts for an arbitrary instance set, overall and per split.
inline std::pair<LabelCounts, std::vector<LabelCounts>> count_labels(const Dataset& ds,
                                                                      std::span<const std::uint32_t> members) {
  LabelCounts whole{std::vector<std::uint32_t>(ds.labels().size(), 0)};
  std::vector<LabelCounts> per_split(ds.splits().size(), whole);
  for (auto i : members) {
    ++whole.counts[ds.label_of(i)];
    ++per_split[ds.split_of(i)].counts[ds.label_of(i)];
  }
  return {std::move(whole), std::move(per_split)};
}

class MinedArtifact {
public:
  DatasetInfo dataset;
  MiningConfig config;
  std::vector<ShortcutNode> nodes;  // sorted by id

  bool empty() const noexcept { return nodes.empty(); }

  const ShortcutNode* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &nodes[it->second];
  }
  ShortcutNode* find(const std::string& id) {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &nodes[it->second];
  }
  const ShortcutNode& at(const std::string& id) const {
    if (auto* n = find(id)) return *n;
    throw ReferenceError("unknown shortcut id", id);
  }

  std::size_t selected_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const ShortcutNode& n) {
      return n.selected && !n.is_root();
    }));
  }

  std::optional<std::size_t> split_index(std::string_view split) const {
    for (std::size_t i = 0; i < dataset.splits.size(); ++i) {
      if (dataset.splits[i] == split) return i;
    }
    return std::nullopt;
  }

  /// Statistics of a node on a split; the empty split name selects the
  /// whole dataset.
  const LabelCounts& stats(const ShortcutNode& n, std::string_view split) const {
    if (split.empty()) return n.whole;
    auto idx = split_index(split);
    if (!idx) throw ReferenceError("unknown split", std::string(split));
    return n.per_split[*idx];
  }

  /// Sorts nodes and their edge lists by id and rebuilds the lookup index.
  void finalize() {
    std::sort(nodes.begin(), nodes.end(), [](const ShortcutNode& a, const ShortcutNode& b) { return a.id < b.id; });
    index_.clear();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto& n = nodes[i];
      std::sort(n.parents.begin(), n.parents.end());
      std::sort(n.children.begin(), n.children.end());
      if (!index_.emplace(n.id, i).second) throw Error("duplicate node id " + n.id);
    }
  }

  nlohmann::json to_json() const;
  static MinedArtifact from_json(const nlohmann::json& j);

  std::string serialize() const { return to_json().dump() + "\n"; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << serialize();
    if (!out) throw IoError("write failed for " + path);
  }

  static MinedArtifact load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid artifact ") + path + ": " + e.what());
    }
    return from_json(j);
  }

private:
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr const char* kArtifactFormat = "shortcutlens-artifact/1";

namespace detail {

inline nlohmann::json slot_json(const Slot& s) {
  nlohmann::json j{{"pos", s.pos}};
  if (s.word) j["word"] = *s.word;
  if (s.is_aggregate()) {
    j["words"] = s.word_set;
    j["repr"] = s.representative;
  }
  return j;
}

inline Slot slot_from_json(const nlohmann::json& j) {
  if (j.contains("words")) {
    return Slot::of_set(j.at("pos").get<std::string>(), j.at("words").get<std::vector<std::string>>(),
                        j.at("repr").get<std::string>());
  }
  if (j.contains("word")) return Slot::of(j.at("pos").get<std::string>(), j.at("word").get<std::string>());
  return Slot::of(j.at("pos").get<std::string>());
}

inline nlohmann::json counts_json(const LabelCounts& c, const std::vector<std::string>& labels) {
  nlohmann::json j{{"coverage", c.coverage()}, {"counts", c.counts}};
  auto pred = c.prediction();
  j["prediction"] = pred ? nlohmann::json(labels[*pred]) : nlohmann::json(nullptr);
  auto prod = c.productivity();
  j["productivity"] = prod ? nlohmann::json(*prod) : nlohmann::json("undefined");
  return j;
}

}  // namespace detail

inline nlohmann::json template_json(const Template& t) {
  nlohmann::json j;
  auto& slots = j["slots"] = nlohmann::json::array();
  for (const auto& s : t.slots()) slots.push_back(detail::slot_json(s));
  if (t.gap()) j["gap"] = *t.gap();
  return j;
}

inline Template template_from_json(const nlohmann::json& j) {
  const auto& slots = j.at("slots");
  if (slots.empty()) return {};
  if (slots.size() == 1) return Template::single(detail::slot_from_json(slots[0]));
  if (slots.size() == 2) {
    return Template::pair(detail::slot_from_json(slots[0]), j.at("gap").get<std::size_t>(),
                          detail::slot_from_json(slots[1]));
  }
  throw ParseError("template with more than two slots");
}

inline nlohmann::json MinedArtifact::to_json() const {
  nlohmann::json j;
  j["format"] = kArtifactFormat;
  j["config"] = config.to_json();
  j["dataset"] = {{"name", dataset.name},
                  {"fingerprint", dataset.fingerprint},
                  {"labels", dataset.labels},
                  {"splits", dataset.splits},
                  {"instance_ids", dataset.instance_ids}};
  auto& table = j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes) {
    nlohmann::json row;
    row["id"] = n.id;
    row["canonical"] = to_string(n.templ);
    row["template"] = template_json(n.templ);
    row["selected"] = n.selected;
    row["aggregated"] = n.aggregated;
    row["parents"] = n.parents;
    row["children"] = n.children;
    row["covered"] = n.covered;
    auto& st = row["stats"];
    st["whole"] = detail::counts_json(n.whole, dataset.labels);
    for (std::size_t s = 0; s < dataset.splits.size(); ++s) {
      st["splits"][dataset.splits[s]] = detail::counts_json(n.per_split[s], dataset.labels);
    }
    table.push_back(std::move(row));
  }
  return j;
}

inline MinedArtifact MinedArtifact::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kArtifactFormat) throw ParseError("unsupported artifact format");
    MinedArtifact a;
    a.config = MiningConfig::from_json(j.at("config"));
    const auto& d = j.at("dataset");
    a.dataset.name = d.at("name").get<std::string>();
    a.dataset.fingerprint = d.at("fingerprint").get<std::string>();
    a.dataset.labels = d.at("labels").get<std::vector<std::string>>();
    a.dataset.splits = d.at("splits").get<std::vector<std::string>>();
    a.dataset.instance_ids = d.at("instance_ids").get<std::vector<std::string>>();
    for (const auto& row : j.at("nodes")) {
      ShortcutNode n;
      n.id = row.at("id").get<std::string>();
      n.templ = template_from_json(row.at("template"));
      n.selected = row.at("selected").get<bool>();
      n.aggregated = row.at("aggregated").get<bool>();
      n.parents = row.at("parents").get<std::vector<std::string>>();
      n.children = row.at("children").get<std::vector<std::string>>();
      n.covered = row.at("covered").get<std::vector<std::uint32_t>>();
      const auto& st = row.at("stats");
      n.whole.counts = st.at("whole").at("counts").get<std::vector<std::uint32_t>>();
      for (const auto& split : a.dataset.splits) {
        n.per_split.push_back({st.at("splits").at(split).at("counts").get<std::vector<std::uint32_t>>()});
      }
      a.nodes.push_back(std::move(n));
    }
    a.finalize();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed artifact: ") + e.what());
  }
}

/// Throws unless the artifact was mined from exactly this dataset content.
inline void require_fresh(const MinedArtifact& a, const Dataset& ds) {
  if (a.dataset.fingerprint != ds.fingerprint()) {
    throw ReferenceError("artifact is stale for dataset", ds.name());
  }
}

}  // namespace shortcutlens
