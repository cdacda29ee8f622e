#pragma once

// Loading and indexing of pre-annotated corpora, model predictions and word
// embedding tables. A Dataset is immutable once loading finishes.

#include "shortcutlens/error.hpp"
#include "shortcutlens/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace shortcutlens {

struct Token {
  std::string surface;
  std::string pos;

  bool operator==(const Token&) const = default;
};

struct AnnotatedInstance {
  std::string id;
  std::string text;
  std::vector<Token> tokens;
  std::string label;
  std::string split;

  bool operator==(const AnnotatedInstance&) const = default;
};

struct ModelPredictions {
  std::string model_name;
  std::map<std::string, std::string> predicted;  // instance id -> label
};

/// Exact-match surface form -> vector lookup. Zero vectors are never stored.
class EmbeddingTable {
public:
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  const std::vector<double>* find(const std::string& word) const {
    auto it = vectors_.find(word);
    return it == vectors_.end() ? nullptr : &it->second;
  }

  /// Returns false when the word was already present (the new vector wins).
  bool insert(std::string word, std::vector<double> vec) {
    if (vec.empty()) throw ParseError("empty embedding vector for '" + word + "'");
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_) {
      throw ParseError("embedding dimension mismatch for '" + word + "': expected " +
                       std::to_string(dim_) + ", got " + std::to_string(vec.size()));
    }
    if (std::all_of(vec.begin(), vec.end(), [](double v) { return v == 0.0; })) {
      throw ParseError("zero embedding vector for '" + word + "'");
    }
    auto [it, fresh] = vectors_.insert_or_assign(std::move(word), std::move(vec));
    return fresh;
  }

private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Per-model correctness flag for one instance.
enum class Correctness : std::int8_t { Missing = -1, Wrong = 0, Right = 1 };

class Dataset {
public:
  Dataset() = default;

  /// Validates the records and derives label/split sets (in order of first
  /// appearance) plus the id index.
  static Dataset from_instances(std::string name, std::vector<AnnotatedInstance> instances) {
    Dataset ds;
    ds.name_ = std::move(name);
    ds.instances_ = std::move(instances);
    ds.label_of_.reserve(ds.instances_.size());
    ds.split_of_.reserve(ds.instances_.size());
    for (std::size_t i = 0; i < ds.instances_.size(); ++i) {
      const auto& inst = ds.instances_[i];
      if (inst.id.empty()) throw ParseError("empty instance id", i + 1);
      if (inst.tokens.empty()) throw ParseError("empty token list for '" + inst.id + "'", i + 1);
      for (const auto& tok : inst.tokens) {
        if (tok.surface.empty() || tok.pos.empty()) {
          throw ParseError("token with empty surface or pos in '" + inst.id + "'", i + 1);
        }
      }
      if (inst.label.empty()) throw ParseError("empty label for '" + inst.id + "'", i + 1);
      if (inst.split.empty()) throw ParseError("empty split for '" + inst.id + "'", i + 1);
      if (!ds.index_.emplace(inst.id, static_cast<std::uint32_t>(i)).second) {
        throw ReferenceError("duplicate instance id", inst.id);
      }
      ds.label_of_.push_back(intern(ds.labels_, inst.label));
      ds.split_of_.push_back(intern(ds.splits_, inst.split));
    }
    ds.split_members_.resize(ds.splits_.size());
    for (std::uint32_t i = 0; i < ds.split_of_.size(); ++i) {
      ds.split_members_[ds.split_of_[i]].push_back(i);
    }
    ds.all_members_.resize(ds.instances_.size());
    for (std::uint32_t i = 0; i < ds.all_members_.size(); ++i) ds.all_members_[i] = i;
    std::ostringstream canon;
    ds.write(canon);
    ds.fingerprint_ = sha256_hex(canon.str());
    return ds;
  }

  const std::string& name() const noexcept { return name_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  std::size_t size() const noexcept { return instances_.size(); }
  bool empty() const noexcept { return instances_.empty(); }
  const std::vector<AnnotatedInstance>& instances() const noexcept { return instances_; }
  const AnnotatedInstance& operator[](std::size_t i) const { return instances_[i]; }

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& splits() const noexcept { return splits_; }
  std::uint32_t label_of(std::size_t i) const { return label_of_[i]; }
  std::uint32_t split_of(std::size_t i) const { return split_of_[i]; }

  std::optional<std::uint32_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::uint32_t> label_index(std::string_view label) const { return position(labels_, label); }
  std::optional<std::uint32_t> split_index(std::string_view split) const { return position(splits_, split); }

  /// Instance indices of one split, in dataset order.
  std::span<const std::uint32_t> split_members(std::uint32_t split) const { return split_members_.at(split); }
  std::span<const std::uint32_t> all_members() const noexcept { return all_members_; }

  /// Members of a split by name; the empty name selects the whole dataset.
  std::span<const std::uint32_t> members(std::string_view split) const {
    if (split.empty()) return all_members();
    auto idx = split_index(split);
    if (!idx) throw ReferenceError("unknown split", std::string(split));
    return split_members(*idx);
  }

  const std::vector<ModelPredictions>& models() const noexcept { return models_; }
  const std::vector<Correctness>& correctness(std::size_t model) const { return correct_.at(model); }

  /// Validates predictions against this dataset and precomputes per-instance
  /// correctness.
  void attach_models(std::vector<ModelPredictions> models) {
    std::vector<std::vector<Correctness>> correct;
    for (const auto& m : models) {
      for (const auto& other : models_) {
        if (other.model_name == m.model_name) throw ReferenceError("duplicate model", m.model_name);
      }
      std::vector<Correctness> flags(instances_.size(), Correctness::Missing);
      for (const auto& [id, label] : m.predicted) {
        auto idx = find(id);
        if (!idx) throw ReferenceError("unknown instance id", id);
        if (!label_index(label)) throw ReferenceError("label outside dataset label set", label);
        flags[*idx] = label == instances_[*idx].label ? Correctness::Right : Correctness::Wrong;
      }
      correct.push_back(std::move(flags));
    }
    for (std::size_t i = 0; i < models.size(); ++i) {
      models_.push_back(std::move(models[i]));
      correct_.push_back(std::move(correct[i]));
    }
  }

  const EmbeddingTable* embeddings() const noexcept { return embeddings_.get(); }
  std::shared_ptr<const EmbeddingTable> shared_embeddings() const noexcept { return embeddings_; }
  void attach_embeddings(std::shared_ptr<const EmbeddingTable> table) { embeddings_ = std::move(table); }

  /// Line-delimited serialization in the input format.
  void write(std::ostream& out) const {
    for (const auto& inst : instances_) {
      nlohmann::ordered_json rec;
      rec["id"] = inst.id;
      rec["text"] = inst.text;
      auto& toks = rec["tokens"] = nlohmann::ordered_json::array();
      for (const auto& t : inst.tokens) toks.push_back({{"t", t.surface}, {"pos", t.pos}});
      rec["label"] = inst.label;
      rec["split"] = inst.split;
      out << rec.dump() << '\n';
    }
  }

private:
  static std::uint32_t intern(std::vector<std::string>& set, const std::string& value) {
    if (auto p = position(set, value)) return *p;
    set.push_back(value);
    return static_cast<std::uint32_t>(set.size() - 1);
  }
  static std::optional<std::uint32_t> position(const std::vector<std::string>& set, std::string_view value) {
    auto it = std::find(set.begin(), set.end(), value);
    if (it == set.end()) return std::nullopt;
    return static_cast<std::uint32_t>(it - set.begin());
  }

  std::string name_;
  std::string fingerprint_;
  std::vector<AnnotatedInstance> instances_;
  std::vector<std::string> labels_;
  std::vector<std::string> splits_;
  std::vector<std::uint32_t> label_of_;
  std::vector<std::uint32_t> split_of_;
  std::vector<std::vector<std::uint32_t>> split_members_;
  std::vector<std::uint32_t> all_members_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<ModelPredictions> models_;
  std::vector<std::vector<Correctness>> correct_;
  std::shared_ptr<const EmbeddingTable> embeddings_;
};

namespace detail {

inline std::string require_string(const nlohmann::json& rec, const char* field, std::size_t line) {
  auto it = rec.find(field);
  if (it == rec.end()) throw ParseError(std::string("missing field '") + field + "'", line);
  if (!it->is_string()) throw ParseError(std::string("field '") + field + "' must be a string", line);
  return it->get<std::string>();
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

inline std::string stem_of(const std::string& path) {
  auto slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace detail

inline Dataset parse_dataset(std::istream& in, std::string name, std::vector<std::string>* warnings = nullptr) {
  std::vector<AnnotatedInstance> instances;
  std::string line;
  std::size_t lineno = 0;
  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid record: ") + e.what(), lineno);
    }
    if (!rec.is_object()) throw ParseError("record must be an object", lineno);
    AnnotatedInstance inst;
    inst.id = detail::require_string(rec, "id", lineno);
    inst.text = detail::require_string(rec, "text", lineno);
    inst.label = detail::require_string(rec, "label", lineno);
    inst.split = detail::require_string(rec, "split", lineno);
    auto toks = rec.find("tokens");
    if (toks == rec.end()) throw ParseError("missing field 'tokens'", lineno);
    if (!toks->is_array()) throw ParseError("field 'tokens' must be an array", lineno);
    if (toks->empty()) throw ParseError("empty token list for '" + inst.id + "'", lineno);
    for (const auto& t : *toks) {
      if (!t.is_object()) throw ParseError("token must be an object", lineno);
      Token tok{detail::require_string(t, "t", lineno), detail::require_string(t, "pos", lineno)};
      if (tok.surface.empty() || tok.pos.empty()) throw ParseError("token with empty surface or pos", lineno);
      inst.tokens.push_back(std::move(tok));
    }
    if (warnings) {
      for (const auto& [key, _] : rec.items()) {
        if (key != "id" && key != "text" && key != "tokens" && key != "label" && key != "split") {
          warnings->push_back("line " + std::to_string(lineno) + ": unknown field '" + key + "' ignored");
        }
      }
    }
    if (auto [it, fresh] = seen.emplace(inst.id, lineno); !fresh) {
      throw ReferenceError("duplicate instance id (lines " + std::to_string(it->second) + " and " +
                               std::to_string(lineno) + ")",
                           inst.id);
    }
    instances.push_back(std::move(inst));
  }
  return Dataset::from_instances(std::move(name), std::move(instances));
}

/// Loads a line-delimited dataset; the dataset name is the file stem.
inline Dataset load_dataset(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  auto in = detail::open_input(path);
  return parse_dataset(in, detail::stem_of(path), warnings);
}

/// Accepts one `{model, predictions}` record per line, or a single JSON array
/// of such records.
inline std::vector<ModelPredictions> parse_predictions(std::istream& in, const Dataset& dataset) {
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::pair<nlohmann::json, std::size_t>> records;
  auto first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '[') {
    nlohmann::json arr;
    try {
      arr = nlohmann::json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid predictions array: ") + e.what());
    }
    for (auto& r : arr) records.emplace_back(std::move(r), 0);
  } else {
    std::istringstream lines(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        records.emplace_back(nlohmann::json::parse(line), lineno);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid predictions record: ") + e.what(), lineno);
      }
    }
  }
  std::vector<ModelPredictions> out;
  for (const auto& [rec, lineno] : records) {
    if (!rec.is_object()) throw ParseError("predictions record must be an object", lineno);
    ModelPredictions m;
    m.model_name = detail::require_string(rec, "model", lineno);
    auto preds = rec.find("predictions");
    if (preds == rec.end() || !preds->is_object()) {
      throw ParseError("field 'predictions' must be an object", lineno);
    }
    for (const auto& [id, label] : preds->items()) {
      if (!label.is_string()) throw ParseError("prediction for '" + id + "' must be a string", lineno);
      if (!dataset.find(id)) throw ReferenceError("unknown instance id", id);
      auto value = label.get<std::string>();
      if (!dataset.label_index(value)) throw ReferenceError("label outside dataset label set", value);
      m.predicted.emplace(id, std::move(value));
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<ModelPredictions> load_predictions(const std::string& path, const Dataset& dataset) {
  auto in = detail::open_input(path);
  return parse_predictions(in, dataset);
}

inline EmbeddingTable parse_embeddings(std::istream& in, std::vector<std::string>* warnings = nullptr) {
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cut = line.find('\t');
    if (cut == std::string::npos) cut = line.find(' ');
    if (cut == std::string::npos || cut == 0) throw ParseError("expected 'word<TAB>v1 ... vd'", lineno);
    std::string word = line.substr(0, cut);
    std::istringstream values(line.substr(cut + 1));
    std::vector<double> vec;
    std::string field;
    while (values >> field) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("non-numeric embedding component '" + field + "'", lineno);
      }
    }
    try {
      if (!table.insert(word, std::move(vec)) && warnings) {
        warnings->push_back("line " + std::to_string(lineno) + ": duplicate word '" + word + "', last wins");
      }
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  auto in = detail::open_input(path);
  return parse_embeddings(in, warnings);
}

/// Fraction of `members` a model predicts correctly; nullopt when the set is
/// empty or the model lacks a prediction for any member.
inline std::optional<double> model_accuracy(const Dataset& ds, std::size_t model,
                                            std::span<const std::uint32_t> members) {
  if (members.empty()) return std::nullopt;
  const auto& flags = ds.correctness(model);
  std::size_t right = 0;
  for (auto i : members) {
    if (flags[i] == Correctness::Missing) return std::nullopt;
    if (flags[i] == Correctness::Right) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(members.size());
}

struct ModelAccuracy {
  std::string model;
  double accuracy;
};

struct SplitSummary {
  std::string split;  // empty for the whole dataset
  std::size_t count = 0;
  std::vector<std::size_t> label_counts;  // dataset label order
  std::vector<ModelAccuracy> accuracies;  // only models with total coverage

  double label_fraction(std::size_t label) const {
    return count ? static_cast<double>(label_counts[label]) / static_cast<double>(count) : 0.0;
  }
};

struct DatasetStats {
  SplitSummary whole;
  std::vector<SplitSummary> splits;
};

/// Counts, label distribution and model accuracies for one split; the empty
/// split name summarizes the whole dataset.
inline SplitSummary summarize(const Dataset& ds, std::string_view split = {}) {
  SplitSummary s;
  s.split = std::string(split);
  auto members = ds.members(split);
  s.count = members.size();
  s.label_counts.assign(ds.labels().size(), 0);
  for (auto i : members) ++s.label_counts[ds.label_of(i)];
  for (std::size_t m = 0; m < ds.models().size(); ++m) {
    if (auto acc = model_accuracy(ds, m, members)) s.accuracies.push_back({ds.models()[m].model_name, *acc});
  }
  return s;
}

inline DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats st;
  st.whole = summarize(ds);
  for (const auto& sp : ds.splits()) st.splits.push_back(summarize(ds, sp));
  return st;
}

}  // namespace shortcutlens
