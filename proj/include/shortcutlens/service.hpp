#pragma once

// Read-mostly HTTP-facing service over a data directory. `Service::handle`
// is transport-independent; server.hpp binds it to an HTTP listener.

#include "shortcutlens/aggregator.hpp"
#include "shortcutlens/artifact.hpp"
#include "shortcutlens/corpus.hpp"
#include "shortcutlens/miner.hpp"
#include "shortcutlens/projection.hpp"
#include "shortcutlens/report.hpp"
#include "shortcutlens/template.hpp"
#include "shortcutlens/whatif.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace shortcutlens {

namespace fs = std::filesystem;

struct ServiceOptions {
  fs::path data_dir;
  std::uint32_t default_min_coverage = 10;
  double default_min_productivity = 0.75;
  std::optional<std::size_t> max_gap;
  unsigned threads = 0;
  std::ostream* log = &std::clog;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json; charset=utf-8";
};

using Query = std::map<std::string, std::string, std::less<>>;

/// Error carrying an HTTP status and optional extra body fields.
class HttpError : public Error {
public:
  HttpError(int status, const std::string& what, nlohmann::json extra = nlohmann::json::object())
      : Error(what), status_(status), extra_(std::move(extra)) {}
  int status() const noexcept { return status_; }
  const nlohmann::json& extra() const noexcept { return extra_; }

private:
  int status_;
  nlohmann::json extra_;
};

/// On-disk cache record for one mined artifact.
struct ArtifactCacheEntry {
  std::string fingerprint;
  std::string config_hash;
  std::string artifact_path;
  std::string created_at;

  nlohmann::json to_json() const {
    return {{"fingerprint", fingerprint},
            {"config_hash", config_hash},
            {"artifact_path", artifact_path},
            {"created_at", created_at}};
  }
  static ArtifactCacheEntry from_json(const nlohmann::json& j) {
    return {j.at("fingerprint").get<std::string>(), j.at("config_hash").get<std::string>(),
            j.at("artifact_path").get<std::string>(), j.at("created_at").get<std::string>()};
  }
};

struct DatasetEntry {
  std::string id;
  std::shared_ptr<const Dataset> data;
  fs::path embeddings_path;      // empty when the dataset has none
  nlohmann::json provenance;     // null unless derived by removal
  nlohmann::json comparison;     // removal comparison, derived datasets only
};

namespace detail {

inline std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) out.push_back(path.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<std::string> query_value(const Query& q, std::string_view key) {
  auto it = q.find(key);
  if (it == q.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

inline std::uint64_t query_uint(const Query& q, std::string_view key, std::uint64_t fallback) {
  auto v = query_value(q, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  std::size_t used = 0;
  try {
    if ((*v)[0] == '-') throw std::invalid_argument(*v);
    out = std::stoull(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size()) throw HttpError(400, std::string(key) + " must be a non-negative integer");
  return out;
}

inline double query_double(const Query& q, std::string_view key, double fallback) {
  auto v = query_value(q, key);
  if (!v) return fallback;
  double out = 0;
  std::size_t used = 0;
  try {
    out = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size() || !std::isfinite(out) || out < 0.0) {
    throw HttpError(400, std::string(key) + " must be a non-negative number");
  }
  return out;
}

/// Token windows of +-3 around each highlighted span (gap included), merged.
inline std::vector<std::pair<std::size_t, std::size_t>> neighbor_windows(std::size_t n,
                                                                         const std::vector<MatchSpan>& spans,
                                                                         std::size_t radius = 3) {
  std::vector<std::pair<std::size_t, std::size_t>> w;
  for (const auto& s : spans) {
    if (s.indices.empty()) continue;
    auto [lo, hi] = std::minmax_element(s.indices.begin(), s.indices.end());
    w.emplace_back(*lo >= radius ? *lo - radius : 0, std::min(n - 1, *hi + radius));
  }
  std::sort(w.begin(), w.end());
  std::vector<std::pair<std::size_t, std::size_t>> merged;
  for (const auto& iv : w) {
    if (!merged.empty() && iv.first <= merged.back().second + 1) {
      merged.back().second = std::max(merged.back().second, iv.second);
    } else {
      merged.push_back(iv);
    }
  }
  return merged;
}

inline constexpr const char* kEllipsis = "…";

inline std::string render_neighbor(const AnnotatedInstance& inst,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& windows) {
  const std::size_t n = inst.tokens.size();
  if (windows.empty()) {
    std::string all;
    for (std::size_t i = 0; i < n; ++i) all += (i ? " " : "") + inst.tokens[i].surface;
    return all;
  }
  std::string out;
  if (windows.front().first > 0) out += kEllipsis;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (w > 0) out += std::string(" ") + kEllipsis;
    for (std::size_t i = windows[w].first; i <= windows[w].second; ++i) {
      if (!out.empty()) out += ' ';
      out += inst.tokens[i].surface;
    }
  }
  if (windows.back().second + 1 < n) out += std::string(" ") + kEllipsis;
  return out;
}

inline void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace detail

class Service {
public:
  explicit Service(ServiceOptions opt) : opt_(std::move(opt)) { rescan(); }

  /// Reloads every dataset from the data directory. Malformed datasets are
  /// logged and skipped.
  void rescan() {
    std::map<std::string, std::shared_ptr<const DatasetEntry>> found;
    std::error_code ec;
    if (!fs::is_directory(opt_.data_dir, ec)) {
      log("data directory " + opt_.data_dir.string() + " not found; serving no datasets");
    } else {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(opt_.data_dir, ec)) {
        const auto name = e.path().filename().string();
        if (!e.is_regular_file() || e.path().extension() != ".jsonl") continue;
        if (name.ends_with(".predictions.jsonl")) continue;
        files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        try {
          auto entry = load_entry(f);
          found[entry->id] = std::move(entry);
        } catch (const std::exception& ex) {
          log("skipping " + f.filename().string() + ": " + ex.what());
        }
      }
    }
    std::unique_lock lock(registry_mu_);
    datasets_ = std::move(found);
  }

  std::vector<std::string> dataset_ids() const {
    std::shared_lock lock(registry_mu_);
    std::vector<std::string> ids;
    for (const auto& [id, e] : datasets_) ids.push_back(id);
    return ids;
  }

  const ServiceOptions& options() const noexcept { return opt_; }

  /// Dispatches one request. Never throws.
  Response handle(std::string_view method, std::string_view path, const Query& query = {},
                  std::string_view body = {}) {
    try {
      return route(method, path, query, body);
    } catch (const HttpError& e) {
      nlohmann::json j = e.extra();
      j["error"] = e.what();
      return {e.status(), j.dump(2)};
    } catch (const LayoutLimitError& e) {
      return {409, nlohmann::json{{"error", e.what()}, {"count", e.count()}}.dump(2)};
    } catch (const ReferenceError& e) {
      return {404, nlohmann::json{{"error", e.what()}, {"name", e.name()}}.dump(2)};
    } catch (const Error& e) {
      return {400, nlohmann::json{{"error", e.what()}}.dump(2)};
    } catch (const std::exception& e) {
      log(std::string("internal error: ") + e.what());
      return {500, nlohmann::json{{"error", "internal error"}}.dump(2)};
    }
  }

  /// Mining config behind a request with these thresholds. Thresholds looser
  /// than the defaults mine at the requested level; stricter ones reuse the
  /// default artifact and filter.
  MiningConfig mining_config(const ShortcutFilter& f) const {
    MiningConfig c;
    c.min_coverage = std::max<std::uint32_t>(1, std::min(f.min_coverage, opt_.default_min_coverage));
    c.min_productivity = std::min(f.min_productivity, opt_.default_min_productivity);
    c.max_gap = opt_.max_gap;
    return c;
  }

  /// Mined (and, with embeddings, aggregated) artifact for a dataset.
  std::shared_ptr<const MinedArtifact> artifact(const std::string& dataset_id, const MiningConfig& config) {
    return artifact_for(*entry(dataset_id), config);
  }

private:
  ServiceOptions opt_;
  mutable std::shared_mutex registry_mu_;
  std::map<std::string, std::shared_ptr<const DatasetEntry>> datasets_;
  std::mutex artifacts_mu_;
  std::map<std::string, std::shared_ptr<const MinedArtifact>> artifacts_;
  std::mutex writer_mu_;  // serializes mining and removal
  std::mutex log_mu_;

  void log(const std::string& msg) {
    if (!opt_.log) return;
    std::lock_guard lock(log_mu_);
    *opt_.log << "[shortcutlens] " << msg << '\n';
  }

  std::shared_ptr<const DatasetEntry> load_entry(const fs::path& file) const {
    auto e = std::make_shared<DatasetEntry>();
    std::vector<std::string> warnings;
    auto ds = load_dataset(file.string(), &warnings);
    e->id = ds.name();
    const fs::path dir = file.parent_path();
    const auto preds = dir / (e->id + ".predictions.jsonl");
    if (fs::exists(preds)) ds.attach_models(load_predictions(preds.string(), ds));
    const auto emb = dir / (e->id + ".embeddings.tsv");
    if (fs::exists(emb)) {
      ds.attach_embeddings(std::make_shared<EmbeddingTable>(load_embeddings(emb.string())));
      e->embeddings_path = emb;
    }
    const auto prov = dir / (e->id + ".provenance.json");
    if (fs::exists(prov)) {
      std::ifstream in(prov);
      auto j = nlohmann::json::parse(in);
      e->provenance = j.at("provenance");
      e->comparison = j.at("comparison");
    }
    e->data = std::make_shared<const Dataset>(std::move(ds));
    return e;
  }

  std::shared_ptr<const DatasetEntry> entry(const std::string& id) const {
    std::shared_lock lock(registry_mu_);
    auto it = datasets_.find(id);
    if (it == datasets_.end()) throw HttpError(404, "unknown dataset: " + id);
    return it->second;
  }

  fs::path cache_dir() const { return opt_.data_dir / ".cache"; }

  std::shared_ptr<const MinedArtifact> artifact_for(const DatasetEntry& e, const MiningConfig& config) {
    const auto key = e.id + "." + e.data->fingerprint().substr(0, 16) + "." + config.hash();
    {
      std::lock_guard lock(artifacts_mu_);
      if (auto it = artifacts_.find(key); it != artifacts_.end()) return it->second;
    }
    std::lock_guard writer(writer_mu_);
    {
      std::lock_guard lock(artifacts_mu_);
      if (auto it = artifacts_.find(key); it != artifacts_.end()) return it->second;
    }
    auto art = read_cached(e, config, key);
    if (!art) {
      art = std::make_shared<const MinedArtifact>(build_artifact(*e.data, config));
      write_cached(e, config, key, *art);
    }
    std::lock_guard lock(artifacts_mu_);
    artifacts_[key] = art;
    return art;
  }

  MinedArtifact build_artifact(const Dataset& ds, const MiningConfig& config) const {
    auto art = mine(ds, config, opt_.threads);
    if (ds.embeddings()) art = aggregate(std::move(art), ds, ds.embeddings());
    return art;
  }

  std::shared_ptr<const MinedArtifact> read_cached(const DatasetEntry& e, const MiningConfig& config,
                                                   const std::string& key) {
    const auto meta_path = cache_dir() / (key + ".meta.json");
    std::error_code ec;
    if (!fs::exists(meta_path, ec)) return nullptr;
    try {
      std::ifstream in(meta_path);
      auto meta = ArtifactCacheEntry::from_json(nlohmann::json::parse(in));
      if (meta.fingerprint != e.data->fingerprint() || meta.config_hash != config.hash()) return nullptr;
      auto art = MinedArtifact::load((cache_dir() / meta.artifact_path).string());
      require_fresh(art, *e.data);
      if (art.config != config) return nullptr;
      return std::make_shared<const MinedArtifact>(std::move(art));
    } catch (const std::exception& ex) {
      log("ignoring cache entry " + key + ": " + ex.what());
      return nullptr;
    }
  }

  void write_cached(const DatasetEntry& e, const MiningConfig& config, const std::string& key,
                    const MinedArtifact& art) {
    try {
      std::error_code ec;
      fs::create_directories(cache_dir(), ec);
      const std::string blob = key + ".artifact.json";
      detail::write_file_atomic(cache_dir() / blob, art.serialize());
      ArtifactCacheEntry meta{e.data->fingerprint(), config.hash(), blob, detail::utc_now()};
      detail::write_file_atomic(cache_dir() / (key + ".meta.json"), meta.to_json().dump(2) + "\n");
    } catch (const std::exception& ex) {
      log("artifact cache not written for " + e.id + ": " + ex.what());
    }
  }

  ShortcutFilter filter_from(const Query& q) const {
    ShortcutFilter f;
    const auto cov = detail::query_uint(q, "min_coverage", opt_.default_min_coverage);
    f.min_coverage = static_cast<std::uint32_t>(std::min<std::uint64_t>(cov, UINT32_MAX));
    f.min_productivity = detail::query_double(q, "min_productivity", opt_.default_min_productivity);
    return f;
  }

  static std::string split_from(const Query& q, const Dataset& ds) {
    auto split = detail::query_value(q, "split").value_or("");
    if (!split.empty() && !ds.split_index(split)) {
      throw HttpError(400, "dataset " + ds.name() + " has no split '" + split + "'");
    }
    return split;
  }

  Response route(std::string_view method, std::string_view path, const Query& q, std::string_view body) {
    auto seg = detail::split_path(path);
    if (seg.empty() || seg[0] != "datasets") throw HttpError(404, "no route for " + std::string(path));
    auto expect = [&](std::string_view m) {
      if (method != m) throw HttpError(405, "method not allowed");
    };
    if (seg.size() == 1) {
      expect("GET");
      return ok(list_datasets());
    }
    const auto e = entry(std::string(seg[1]));
    if (seg.size() == 3 && seg[2] == "shortcuts") {
      expect("GET");
      return ok(get_shortcuts(*e, q));
    }
    if (seg.size() == 4 && seg[2] == "shortcuts") {
      expect("GET");
      return ok(get_shortcut(*e, std::string(seg[3]), q));
    }
    if (seg.size() == 5 && seg[2] == "shortcuts" && seg[4] == "instances") {
      expect("GET");
      return ok(get_instances(*e, std::string(seg[3]), q));
    }
    if (seg.size() == 3 && seg[2] == "whatif") {
      expect("POST");
      return ok(post_whatif(*e, body));
    }
    if (seg.size() == 3 && seg[2] == "projection") {
      expect("GET");
      return ok(get_projection(*e, q));
    }
    if (seg.size() == 3 && seg[2] == "removal") {
      expect("POST");
      return ok(post_removal(*e, body));
    }
    throw HttpError(404, "no route for " + std::string(path));
  }

  static Response ok(const nlohmann::json& j) { return {200, j.dump(2)}; }

  nlohmann::json list_datasets() const {
    std::vector<std::shared_ptr<const DatasetEntry>> entries;
    {
      std::shared_lock lock(registry_mu_);
      for (const auto& [id, e] : datasets_) entries.push_back(e);
    }
    auto out = nlohmann::json::array();
    for (const auto& e : entries) {
      const Dataset& ds = *e->data;
      const auto st = dataset_stats(ds);
      nlohmann::json labels = nlohmann::json::object(), splits = nlohmann::json::object();
      for (std::size_t l = 0; l < ds.labels().size(); ++l) labels[ds.labels()[l]] = st.whole.label_counts[l];
      for (const auto& s : st.splits) splits[s.split] = s.count;
      auto models = nlohmann::json::array();
      for (std::size_t m = 0; m < ds.models().size(); ++m) {
        models.push_back({{"name", ds.models()[m].model_name},
                          {"accuracy", detail::maybe(model_accuracy(ds, m, ds.all_members()))}});
      }
      out.push_back({{"id", e->id},
                     {"name", ds.name()},
                     {"fingerprint", ds.fingerprint()},
                     {"counts", {{"instances", ds.size()}, {"labels", labels}, {"splits", splits}}},
                     {"labels", ds.labels()},
                     {"splits", ds.splits()},
                     {"models", models},
                     {"has_embeddings", ds.embeddings() != nullptr},
                     {"derived_from", e->provenance.is_null() ? nlohmann::json(nullptr) : e->provenance.at("parent")},
                     {"provenance", e->provenance}});
    }
    return out;
  }

  nlohmann::json get_shortcuts(const DatasetEntry& e, const Query& q) {
    const auto f = filter_from(q);
    const auto split = split_from(q, *e.data);
    const auto art = artifact_for(e, mining_config(f));
    return shortcut_table(*art, f, split);
  }

  nlohmann::json get_shortcut(const DatasetEntry& e, const std::string& sid, const Query& q) {
    const auto f = filter_from(q);
    const auto split = split_from(q, *e.data);
    const auto art = artifact_for(e, mining_config(f));
    const auto* n = art->find(sid);
    if (!n) throw HttpError(404, "unknown shortcut id: " + sid, {{"name", sid}});
    auto detail = shortcut_row(*n, *art, split);
    nlohmann::json splits = nlohmann::json::object();
    for (const auto& s : art->dataset.splits) splits[s] = stats_json(art->stats(*n, s), art->dataset.labels);
    detail["splits"] = std::move(splits);
    detail["parents"] = n->parents;
    std::vector<const ShortcutNode*> kids;
    for (const auto& c : n->children) kids.push_back(&art->at(c));
    sort_by_coverage(kids);
    auto children = nlohmann::json::array();
    for (const auto* c : kids) children.push_back(shortcut_row(*c, *art, split));
    detail["children"] = std::move(children);
    return detail;
  }

  nlohmann::json get_instances(const DatasetEntry& e, const std::string& sid, const Query& q) {
    const Dataset& ds = *e.data;
    const auto f = filter_from(q);
    const auto split = split_from(q, ds);
    const auto art = artifact_for(e, mining_config(f));
    const auto* n = art->find(sid);
    if (!n) throw HttpError(404, "unknown shortcut id: " + sid, {{"name", sid}});

    const auto style = detail::query_value(q, "style").value_or("full");
    if (style != "full" && style != "neighbor") throw HttpError(400, "style must be 'full' or 'neighbor'");
    const auto sort = detail::query_value(q, "sort").value_or("");
    if (!sort.empty() && sort != "accuracy") throw HttpError(400, "sort must be 'accuracy'");
    const auto order = detail::query_value(q, "order").value_or("asc");
    if (order != "asc" && order != "desc") throw HttpError(400, "order must be 'asc' or 'desc'");
    std::optional<std::uint32_t> label;
    if (auto l = detail::query_value(q, "label")) {
      label = ds.label_index(*l);
      if (!label) throw HttpError(400, "dataset " + ds.name() + " has no label '" + *l + "'");
    }
    const auto search = detail::query_value(q, "search").value_or("");
    const auto page = detail::query_uint(q, "page", 1);
    const auto page_size = detail::query_uint(q, "page_size", 50);
    if (page < 1) throw HttpError(400, "page starts at 1");
    if (page_size < 1 || page_size > 1000) throw HttpError(400, "page_size must be in [1, 1000]");

    const auto split_idx = split.empty() ? std::nullopt : ds.split_index(split);
    struct Row {
      std::uint32_t index;
      std::optional<double> accuracy;
    };
    std::vector<Row> rows;
    for (auto i : n->covered) {
      const auto& inst = ds[i];
      if (split_idx && ds.split_of(i) != *split_idx) continue;
      if (label && ds.label_of(i) != *label) continue;
      if (!search.empty() && inst.text.find(search) == std::string::npos) continue;
      std::size_t right = 0, seen = 0;
      for (std::size_t m = 0; m < ds.models().size(); ++m) {
        auto c = ds.correctness(m)[i];
        if (c == Correctness::Missing) continue;
        ++seen;
        if (c == Correctness::Right) ++right;
      }
      rows.push_back({i, seen ? std::optional<double>(static_cast<double>(right) / static_cast<double>(seen))
                              : std::nullopt});
    }
    if (sort == "accuracy") {
      // Undefined accuracy ranks below every number; ties keep dataset order.
      auto key = [](const Row& r) { return r.accuracy.value_or(-1.0); };
      std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
        return order == "asc" ? key(a) < key(b) : key(a) > key(b);
      });
    } else if (order == "desc") {
      std::reverse(rows.begin(), rows.end());
    }

    const MatchOptions match{art->config.case_fold};
    auto out_rows = nlohmann::json::array();
    const std::size_t begin = std::min<std::size_t>(rows.size(), (page - 1) * page_size);
    const std::size_t end = std::min<std::size_t>(rows.size(), begin + page_size);
    for (std::size_t r = begin; r < end; ++r) {
      const auto i = rows[r].index;
      const auto& inst = ds[i];
      const auto spans = match_spans(n->templ, inst, match);
      nlohmann::json correctness = nlohmann::json::object();
      for (std::size_t m = 0; m < ds.models().size(); ++m) {
        auto c = ds.correctness(m)[i];
        correctness[ds.models()[m].model_name] =
            c == Correctness::Missing ? nlohmann::json(nullptr) : nlohmann::json(c == Correctness::Right);
      }
      auto span_json = nlohmann::json::array();
      for (const auto& s : spans) span_json.push_back(s.indices);
      auto tokens = nlohmann::json::array();
      for (const auto& t : inst.tokens) tokens.push_back(t.surface);
      nlohmann::json row{{"id", inst.id},
                         {"split", inst.split},
                         {"label", inst.label},
                         {"correctness", std::move(correctness)},
                         {"accuracy", detail::maybe(rows[r].accuracy)},
                         {"spans", std::move(span_json)},
                         {"tokens", std::move(tokens)}};
      if (style == "neighbor") {
        const auto windows = detail::neighbor_windows(inst.tokens.size(), spans);
        row["text"] = detail::render_neighbor(inst, windows);
        auto wj = nlohmann::json::array();
        for (const auto& [lo, hi] : windows) wj.push_back({lo, hi});
        row["windows"] = std::move(wj);
      } else {
        row["text"] = inst.text;
      }
      out_rows.push_back(std::move(row));
    }
    return {{"shortcut_id", sid},
            {"style", style},
            {"total", rows.size()},
            {"page", page},
            {"page_size", page_size},
            {"rows", std::move(out_rows)}};
  }

  struct SelectionRequest {
    GroupSelection selection;
    ShortcutFilter filter;
  };

  SelectionRequest parse_selection(std::string_view body) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body.empty() ? std::string_view("{}") : body);
    } catch (const nlohmann::json::parse_error& e) {
      throw HttpError(400, std::string("invalid request body: ") + e.what());
    }
    if (!j.is_object()) throw HttpError(400, "request body must be an object");
    SelectionRequest r;
    auto ids = j.value("shortcut_ids", nlohmann::json::array());
    if (!ids.is_array()) throw HttpError(400, "shortcut_ids must be an array");
    for (const auto& id : ids) {
      if (!id.is_string()) throw HttpError(400, "shortcut_ids must hold strings");
      r.selection.shortcut_ids.push_back(id.get<std::string>());
    }
    auto split = j.value("split", nlohmann::json(""));
    if (!split.is_string()) throw HttpError(400, "split must be a string");
    r.selection.split = split.get<std::string>();
    Query q;
    if (j.contains("min_coverage")) q["min_coverage"] = j["min_coverage"].dump();
    if (j.contains("min_productivity")) q["min_productivity"] = j["min_productivity"].dump();
    r.filter = filter_from(q);
    return r;
  }

  /// Resolves selection ids against the artifact, 404 naming the first miss.
  static void check_selection(const GroupSelection& sel, const MinedArtifact& art, const Dataset& ds) {
    if (!sel.split.empty() && !ds.split_index(sel.split)) {
      throw HttpError(400, "dataset " + ds.name() + " has no split '" + sel.split + "'");
    }
    for (const auto& id : sel.canonical_ids()) {
      if (!art.find(id)) throw HttpError(404, "unknown shortcut id: " + id, {{"name", id}});
    }
  }

  nlohmann::json post_whatif(const DatasetEntry& e, std::string_view body) {
    const auto req = parse_selection(body);
    const auto art = artifact_for(e, mining_config(req.filter));
    check_selection(req.selection, *art, *e.data);
    return what_if(req.selection, *art, *e.data).to_json(*e.data);
  }

  nlohmann::json get_projection(const DatasetEntry& e, const Query& q) {
    const auto f = filter_from(q);
    const auto art = artifact_for(e, mining_config(f));
    auto nodes = filter_selected(*art, f);
    if (nodes.size() > kMaxProjectedShortcuts) {
      throw HttpError(409, "too many shortcuts to project; tighten the filters", {{"count", nodes.size()}});
    }
    std::sort(nodes.begin(), nodes.end(), [](const ShortcutNode* a, const ShortcutNode* b) { return a->id < b->id; });
    const auto layout = project(*art, nodes);
    auto points = nlohmann::json::array();
    for (const auto& p : layout.points) {
      points.push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}, {"radius", p.radius}, {"arc", p.arc}, {"label", p.label}});
    }
    return {{"dataset", art->dataset.name},
            {"min_coverage", f.min_coverage},
            {"min_productivity", f.min_productivity},
            {"count", layout.points.size()},
            {"max_residual", layout.max_residual},
            {"points", std::move(points)}};
  }

  nlohmann::json post_removal(const DatasetEntry& e, std::string_view body) {
    const auto req = parse_selection(body);
    const auto config = mining_config(req.filter);
    const auto art = artifact_for(e, config);
    check_selection(req.selection, *art, *e.data);
    const auto key = removal_key(req.selection, *e.data, config);

    std::lock_guard writer(writer_mu_);
    {
      std::shared_lock lock(registry_mu_);
      for (const auto& [id, other] : datasets_) {
        if (!other->provenance.is_null() && other->provenance.value("removal_key", "") == key) {
          return {{"dataset_id", id}, {"cached", true}, {"provenance", other->provenance},
                  {"comparison", other->comparison}};
        }
      }
    }
    auto result = remove_and_remine(req.selection, *art, *e.data, config, opt_.threads);
    for (const auto& w : result.warnings) log(e.id + " removal: " + w);
    auto derived = std::make_shared<DatasetEntry>();
    derived->id = result.dataset.name();
    derived->provenance = result.provenance;
    derived->comparison = result.comparison.to_json();
    try {
      persist_derived(e, *derived, result.dataset);
    } catch (const std::exception& ex) {
      throw HttpError(507, std::string("could not persist derived dataset: ") + ex.what());
    }
    if (!e.embeddings_path.empty()) derived->embeddings_path = opt_.data_dir / (derived->id + ".embeddings.tsv");
    derived->data = std::make_shared<const Dataset>(std::move(result.dataset));
    auto mined = std::make_shared<const MinedArtifact>(
        derived->data->embeddings() ? aggregate(std::move(result.artifact), *derived->data, derived->data->embeddings())
                                    : std::move(result.artifact));
    {
      std::lock_guard lock(artifacts_mu_);
      artifacts_[derived->id + "." + derived->data->fingerprint().substr(0, 16) + "." + config.hash()] = mined;
    }
    nlohmann::json out{{"dataset_id", derived->id}, {"cached", false}, {"provenance", derived->provenance},
                       {"comparison", derived->comparison}};
    std::unique_lock lock(registry_mu_);
    datasets_[derived->id] = std::move(derived);
    return out;
  }

  void persist_derived(const DatasetEntry& parent, const DatasetEntry& derived, const Dataset& ds) const {
    const auto base = opt_.data_dir / derived.id;
    std::ostringstream data;
    ds.write(data);
    std::string preds;
    for (const auto& m : ds.models()) {
      nlohmann::ordered_json rec{{"model", m.model_name}, {"predictions", m.predicted}};
      preds += rec.dump() + "\n";
    }
    if (!ds.models().empty()) detail::write_file_atomic(fs::path(base) += ".predictions.jsonl", preds);
    if (!parent.embeddings_path.empty()) {
      std::ifstream in(parent.embeddings_path, std::ios::binary);
      std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (!in.good() && !in.eof()) throw IoError("cannot read " + parent.embeddings_path.string());
      detail::write_file_atomic(fs::path(base) += ".embeddings.tsv", content);
    }
    nlohmann::json prov{{"provenance", derived.provenance}, {"comparison", derived.comparison}};
    detail::write_file_atomic(fs::path(base) += ".provenance.json", prov.dump(2) + "\n");
    // The dataset file goes last: a rescan only sees complete derived sets.
    detail::write_file_atomic(fs::path(base) += ".jsonl", data.str());
  }
};

}  // namespace shortcutlens
