#pragma once

// Command-line front end. `run_cli` never exits the process; it returns the
// exit code (0 ok, 1 parse, 2 usage, 3 reference, 4 IO).

#include "shortcutlens/aggregator.hpp"
#include "shortcutlens/artifact.hpp"
#include "shortcutlens/corpus.hpp"
#include "shortcutlens/miner.hpp"
#include "shortcutlens/report.hpp"
#include "shortcutlens/server.hpp"
#include "shortcutlens/whatif.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace shortcutlens {

enum ExitCode : int { kExitOk = 0, kExitParse = 1, kExitUsage = 2, kExitReference = 3, kExitIo = 4 };

namespace cli {

class UsageError : public Error {
public:
  using Error::Error;
};

struct InputOptions {
  std::string dataset;
  std::string predictions;  // defaults to <stem>.predictions.jsonl beside the dataset
  std::string embeddings;   // defaults to <stem>.embeddings.tsv beside the dataset
  bool no_sidecars = false;
};

inline void add_inputs(CLI::App& cmd, InputOptions& in, bool embeddings) {
  cmd.add_option("--dataset", in.dataset, "Annotated dataset (JSONL)")->required();
  cmd.add_option("--predictions", in.predictions, "Model predictions (JSONL or JSON array)");
  if (embeddings) cmd.add_option("--embeddings", in.embeddings, "Word vectors (word<TAB>values)");
  cmd.add_flag("--no-sidecars", in.no_sidecars, "Do not pick up predictions/embeddings next to the dataset");
}

inline std::string sidecar(const std::string& dataset, const char* suffix) {
  std::filesystem::path p(dataset);
  auto side = p.parent_path() / (p.stem().string() + suffix);
  return std::filesystem::exists(side) ? side.string() : std::string{};
}

inline Dataset load_inputs(const InputOptions& in, std::ostream& err, bool embeddings = true) {
  std::vector<std::string> warnings;
  Dataset ds = load_dataset(in.dataset, &warnings);
  auto preds = !in.predictions.empty() ? in.predictions
               : in.no_sidecars        ? std::string{}
                                       : sidecar(in.dataset, ".predictions.jsonl");
  if (!preds.empty()) ds.attach_models(load_predictions(preds, ds));
  if (embeddings) {
    auto emb = !in.embeddings.empty() ? in.embeddings
               : in.no_sidecars       ? std::string{}
                                      : sidecar(in.dataset, ".embeddings.tsv");
    if (!emb.empty()) ds.attach_embeddings(std::make_shared<EmbeddingTable>(load_embeddings(emb, &warnings)));
  }
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return ds;
}

inline MinedArtifact load_artifact(const std::string& path, const Dataset* ds) {
  if (path.empty() || !std::filesystem::exists(path)) throw UsageError("artifact not found: " + path);
  auto art = MinedArtifact::load(path);
  if (ds && art.dataset.fingerprint != ds->fingerprint()) {
    throw UsageError("artifact " + path + " was mined from different dataset content");
  }
  return art;
}

inline std::vector<std::string> split_ids(const std::vector<std::string>& raw) {
  std::vector<std::string> ids;
  for (const auto& r : raw) {
    std::stringstream ss(r);
    std::string id;
    while (std::getline(ss, id, ',')) {
      if (!id.empty()) ids.push_back(id);
    }
  }
  return ids;
}

inline void check_ids(const std::vector<std::string>& ids, const MinedArtifact& art) {
  for (const auto& id : ids) {
    if (!art.find(id)) throw ReferenceError("unknown shortcut id", id);
  }
}

inline bool machine_format(const std::string& f) { return f == "json" || f == "json-like-structured"; }

inline std::string fixed(const std::optional<double>& v, int digits = 4) {
  if (!v) return "undefined";
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << *v;
  return o.str();
}

inline std::string signed_fixed(const std::optional<double>& v) {
  if (!v) return "undefined";
  return (*v >= 0 ? "+" : "") + fixed(v);
}

inline void write_output(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << content;
  if (!f) throw IoError("write failed for " + path);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::string json_scalar(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace cli

/// Parses `--split-threshold name:coverage:productivity`.
inline std::pair<std::string, SplitThreshold> parse_split_threshold(const std::string& spec) {
  auto a = spec.find(':');
  auto b = spec.rfind(':');
  if (a == std::string::npos || a == b || a == 0) {
    throw cli::UsageError("split threshold must look like name:coverage:productivity, got '" + spec + "'");
  }
  SplitThreshold th;
  try {
    std::size_t used = 0;
    auto cov = std::stoul(spec.substr(a + 1, b - a - 1), &used);
    if (used != b - a - 1) throw std::invalid_argument(spec);
    th.min_coverage = static_cast<std::uint32_t>(cov);
    th.min_productivity = std::stod(spec.substr(b + 1), &used);
    if (used != spec.size() - b - 1) throw std::invalid_argument(spec);
  } catch (const std::exception&) {
    throw cli::UsageError("bad split threshold '" + spec + "'");
  }
  return {spec.substr(0, a), th};
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Shortcut auditing over POS-annotated NLU datasets", "shortcutlens"};
  app.require_subcommand(1);
  std::string format = "text";
  auto add_format = [&](CLI::App* cmd, std::vector<std::string> allowed) {
    cmd->add_option("--format", format, "Output format")->check(CLI::IsMember(allowed));
  };

  // mine
  cli::InputOptions mine_in;
  MiningConfig mine_cfg;
  std::vector<std::string> split_thresholds;
  std::size_t max_gap = 0;
  unsigned threads = 0;
  std::string mine_out;
  auto* mine_cmd = app.add_subcommand("mine", "Mine shortcut templates into an artifact");
  cli::add_inputs(*mine_cmd, mine_in, false);
  mine_cmd->add_option("--min-coverage", mine_cfg.min_coverage, "Minimum covered instances")->capture_default_str();
  mine_cmd->add_option("--min-productivity", mine_cfg.min_productivity, "Minimum productivity")
      ->capture_default_str();
  auto* gap_opt = mine_cmd->add_option("--max-gap", max_gap, "Largest gap between slots (default: unbounded)");
  mine_cmd->add_option("--split-threshold", split_thresholds, "Per-split minimum, name:coverage:productivity");
  mine_cmd->add_flag("--case-fold", mine_cfg.case_fold, "ASCII case-insensitive word matching");
  mine_cmd->add_option("--coverage-floor", mine_cfg.coverage_floor, "Coverage floor for expansion children")
      ->capture_default_str();
  mine_cmd->add_option("--threads", threads, "Worker threads (0 = hardware)");
  mine_cmd->add_option("--out", mine_out, "Artifact path")->required();
  add_format(mine_cmd, {"text", "json", "json-like-structured"});

  // aggregate
  cli::InputOptions agg_in;
  std::string agg_artifact, agg_out;
  double agg_cut = kDefaultMergeCut;
  auto* agg_cmd = app.add_subcommand("aggregate", "Merge sibling shortcuts with similar final words");
  cli::add_inputs(*agg_cmd, agg_in, true);
  agg_cmd->add_option("--artifact", agg_artifact, "Mined artifact")->required();
  agg_cmd->add_option("--cut", agg_cut, "Maximum cosine distance inside a group")->capture_default_str();
  agg_cmd->add_option("--out", agg_out, "Aggregated artifact path")->required();
  add_format(agg_cmd, {"text", "json", "json-like-structured"});

  // whatif / remove share the selection flags
  cli::InputOptions sel_in;
  std::string sel_artifact, sel_split, remove_out;
  std::vector<std::string> sel_ids;
  auto add_selection = [&](CLI::App* cmd) {
    cli::add_inputs(*cmd, sel_in, false);
    cmd->add_option("--artifact", sel_artifact, "Mined artifact")->required();
    cmd->add_option("--ids", sel_ids, "Shortcut ids (comma separated or repeated)");
    cmd->add_option("--split", sel_split, "Split to evaluate (default: whole dataset)");
  };
  auto* whatif_cmd = app.add_subcommand("whatif", "Dirty/clean statistics for a shortcut group");
  add_selection(whatif_cmd);
  add_format(whatif_cmd, {"text", "json", "json-like-structured"});
  auto* remove_cmd = app.add_subcommand("remove", "Drop covered instances and re-mine");
  add_selection(remove_cmd);
  remove_cmd->add_option("--out", remove_out, "Derived dataset path (JSONL)")->required();
  add_format(remove_cmd, {"text", "json", "json-like-structured"});

  // export
  std::string exp_artifact, exp_split, exp_out;
  std::optional<std::uint32_t> exp_cov;
  std::optional<double> exp_prod;
  auto* export_cmd = app.add_subcommand("export", "Write the selected-shortcut table");
  export_cmd->add_option("--artifact", exp_artifact, "Mined artifact")->required();
  export_cmd->add_option("--split", exp_split, "Only this split's statistics columns");
  export_cmd->add_option("--min-coverage", exp_cov, "Filter (default: artifact threshold)");
  export_cmd->add_option("--min-productivity", exp_prod, "Filter (default: artifact threshold)");
  export_cmd->add_option("--out", exp_out, "Output path (default: stdout)");
  std::string export_format = "csv";
  export_cmd->add_option("--format", export_format, "Output format")
      ->check(CLI::IsMember({"csv", "json", "json-like-structured"}));

  // stats
  cli::InputOptions stats_in;
  auto* stats_cmd = app.add_subcommand("stats", "Corpus statistics and model accuracies");
  cli::add_inputs(*stats_cmd, stats_in, false);
  add_format(stats_cmd, {"text", "json", "json-like-structured"});

  // serve
  std::string data_dir, host = "127.0.0.1";
  int port = 8080;
  std::uint32_t serve_cov = 10;
  double serve_prod = 0.75;
  std::size_t serve_gap = 0;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--data-dir", data_dir, "Dataset directory")->envname("SHORTCUTLENS_DATA_DIR")->required();
  serve_cmd->add_option("--port", port, "Port")->capture_default_str();
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--default-min-coverage", serve_cov, "Default coverage threshold")->capture_default_str();
  serve_cmd->add_option("--default-min-productivity", serve_prod, "Default productivity threshold")
      ->capture_default_str();
  auto* serve_gap_opt = serve_cmd->add_option("--max-gap", serve_gap, "Largest gap between slots");
  serve_cmd->add_option("--threads", threads, "Mining threads (0 = hardware)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }

    if (*mine_cmd) {
      if (*gap_opt) mine_cfg.max_gap = max_gap;
      for (const auto& s : split_thresholds) mine_cfg.per_split.insert(parse_split_threshold(s));
      try {
        mine_cfg.validate();
      } catch (const Error& e) {
        throw cli::UsageError(e.what());
      }
      auto ds = cli::load_inputs(mine_in, err, false);
      for (const auto& [split, th] : mine_cfg.per_split) {
        if (!ds.split_index(split)) throw cli::UsageError("dataset has no split '" + split + "'");
      }
      auto art = mine(ds, mine_cfg, threads);
      art.save(mine_out);
      nlohmann::json summary{{"dataset", ds.name()},
                             {"instances", ds.size()},
                             {"nodes", art.nodes.size()},
                             {"selected", art.selected_count()},
                             {"artifact", mine_out}};
      auto& rows = summary["thresholds"] = nlohmann::json::array();
      for (std::uint32_t mult : {1u, 2u, 5u, 10u}) {
        ShortcutFilter f{mine_cfg.min_coverage * mult, mine_cfg.min_productivity};
        rows.push_back({{"min_coverage", f.min_coverage},
                        {"min_productivity", f.min_productivity},
                        {"count", filter_selected(art, f).size()}});
      }
      if (cli::machine_format(format)) {
        out << summary.dump(2) << '\n';
      } else {
        out << "mined " << ds.name() << ": " << ds.size() << " instances, " << art.nodes.size()
            << " hierarchy nodes, " << art.selected_count() << " shortcuts\n";
        for (const auto& r : rows) {
          out << "  coverage >= " << r["min_coverage"] << ", productivity >= " << r["min_productivity"] << ": "
              << r["count"] << '\n';
        }
        out << "artifact written to " << mine_out << '\n';
      }
      return kExitOk;
    }

    if (*agg_cmd) {
      auto ds = cli::load_inputs(agg_in, err, true);
      if (!ds.embeddings()) throw cli::UsageError("aggregate needs --embeddings");
      if (!(agg_cut >= 0.0 && agg_cut <= 2.0)) throw cli::UsageError("--cut must be in [0, 2]");
      auto art = cli::load_artifact(agg_artifact, &ds);
      std::vector<MergeGroup> groups;
      art = aggregate(std::move(art), ds, ds.embeddings(), agg_cut, &groups);
      art.save(agg_out);
      if (cli::machine_format(format)) {
        auto arr = nlohmann::json::array();
        for (const auto& g : groups) {
          arr.push_back({{"parent", g.parent},
                         {"members", g.members},
                         {"words", g.words},
                         {"representative", g.representative},
                         {"coverage", g.covered.size()}});
        }
        out << nlohmann::json{{"groups", arr}, {"nodes", art.nodes.size()}, {"artifact", agg_out}}.dump(2) << '\n';
      } else {
        out << groups.size() << " aggregate group(s)\n";
        for (const auto& g : groups) {
          out << "  " << g.representative << " +" << g.members.size() - 1 << " under " << g.parent
              << " (coverage " << g.covered.size() << "):";
          for (const auto& w : g.words) out << ' ' << w;
          out << '\n';
        }
        out << "artifact written to " << agg_out << '\n';
      }
      return kExitOk;
    }

    if (*whatif_cmd || *remove_cmd) {
      auto ds = cli::load_inputs(sel_in, err, false);
      auto art = cli::load_artifact(sel_artifact, &ds);
      GroupSelection sel{cli::split_ids(sel_ids), sel_split};
      if (!sel.split.empty() && !ds.split_index(sel.split)) throw ReferenceError("unknown split", sel.split);
      cli::check_ids(sel.shortcut_ids, art);

      if (*whatif_cmd) {
        auto report = what_if(sel, art, ds);
        if (cli::machine_format(format)) {
          out << report.to_json(ds).dump(2) << '\n';
          return kExitOk;
        }
        const auto& p = report.partition;
        out << "split: " << (sel.split.empty() ? "(whole dataset)" : sel.split) << ", "
            << p.dirty.size() + p.clean.size() << " instances\n";
        out << "shortcuts: " << sel.canonical_ids().size() << '\n';
        for (const auto& id : sel.canonical_ids()) out << "  " << id << "  " << to_string(art.at(id).templ) << '\n';
        out << "dirty " << p.dirty.size() << ", clean " << p.clean.size() << ", disagreed "
            << report.group.disagreed << '\n';
        out << "group productivity " << cli::fixed(report.group.productivity) << '\n';
        auto line = [&](const std::string& name, const AccuracyRow& r) {
          out << "  " << std::left << std::setw(12) << name << " whole " << cli::fixed(r.whole) << "  dirty "
              << cli::fixed(r.dirty) << " (" << cli::signed_fixed(r.delta_dirty()) << ")  clean "
              << cli::fixed(r.clean) << " (" << cli::signed_fixed(r.delta_clean()) << ")\n";
        };
        if (report.accuracy.models.empty()) out << "no model covers this split\n";
        for (const auto& r : report.accuracy.models) line(r.model, r);
        if (!report.accuracy.models.empty()) line("average", report.accuracy.average);
        for (const auto& m : report.accuracy.omitted_models) out << "  omitted (partial predictions): " << m << '\n';
        return kExitOk;
      }

      auto result = remove_and_remine(sel, art, ds, art.config, threads);
      for (const auto& w : result.warnings) err << "warning: " << w << '\n';
      std::ostringstream data;
      result.dataset.write(data);
      cli::write_output(remove_out, data.str(), out);
      std::filesystem::path base(remove_out);
      base.replace_extension();
      if (!result.dataset.models().empty()) {
        std::string preds;
        for (const auto& m : result.dataset.models()) {
          preds += nlohmann::ordered_json{{"model", m.model_name}, {"predictions", m.predicted}}.dump() + "\n";
        }
        cli::write_output(base.string() + ".predictions.jsonl", preds, out);
      }
      auto cmp = result.comparison.to_json();
      cli::write_output(base.string() + ".provenance.json",
                        nlohmann::json{{"provenance", result.provenance}, {"comparison", cmp}}.dump(2) + "\n", out);
      if (cli::machine_format(format)) {
        out << nlohmann::json{{"dataset", remove_out}, {"provenance", result.provenance}, {"comparison", cmp}}.dump(2)
            << '\n';
        return kExitOk;
      }
      const auto& c = result.comparison;
      out << "removed " << c.removed_instances << " instance(s); derived dataset written to " << remove_out << '\n';
      out << "shortcuts " << c.shortcuts_before << " -> " << c.shortcuts_after << " (" << std::showpos
          << c.shortcut_delta() << std::noshowpos << ")\n";
      out << "disappeared: " << c.disappeared.size() << '\n';
      for (const auto& r : c.disappeared) out << "  " << r.id << "  " << r.canonical << '\n';
      out << "appeared: " << c.appeared.size() << '\n';
      for (const auto& r : c.appeared) out << "  " << r.id << "  " << r.canonical << '\n';
      out << "average accuracy " << cli::fixed(c.accuracy_before) << " -> " << cli::fixed(c.accuracy_after) << '\n';
      return kExitOk;
    }

    if (*export_cmd) {
      auto art = cli::load_artifact(exp_artifact, nullptr);
      if (!exp_split.empty() && !art.split_index(exp_split)) throw ReferenceError("unknown split", exp_split);
      ShortcutFilter f{exp_cov.value_or(art.config.min_coverage), exp_prod.value_or(art.config.min_productivity)};
      if (cli::machine_format(export_format)) {
        cli::write_output(exp_out, shortcut_table(art, f, exp_split).dump(2) + "\n", out);
        return kExitOk;
      }
      std::vector<std::string> splits = exp_split.empty() ? art.dataset.splits : std::vector{exp_split};
      std::string csv = "id,template,prediction,aggregated,coverage,productivity";
      for (const auto& s : splits) csv += "," + cli::csv_field(s + "_coverage") + "," + cli::csv_field(s + "_productivity");
      csv += '\n';
      for (const auto* n : filter_selected(art, f)) {
        auto whole = stats_json(n->whole, art.dataset.labels);
        csv += n->id + "," + cli::csv_field(to_string(n->templ)) + "," + cli::csv_field(cli::json_scalar(whole["prediction"])) +
               "," + (n->aggregated ? "true" : "false") + "," + whole["coverage"].dump() + "," +
               cli::json_scalar(whole["productivity"]);
        for (const auto& s : splits) {
          auto st = stats_json(art.stats(*n, s), art.dataset.labels);
          csv += "," + st["coverage"].dump() + "," + cli::json_scalar(st["productivity"]);
        }
        csv += '\n';
      }
      cli::write_output(exp_out, csv, out);
      return kExitOk;
    }

    if (*stats_cmd) {
      auto ds = cli::load_inputs(stats_in, err, false);
      auto st = dataset_stats(ds);
      auto summary_json = [&](const SplitSummary& s) {
        nlohmann::json labels = nlohmann::json::object(), acc = nlohmann::json::object();
        for (std::size_t l = 0; l < ds.labels().size(); ++l) labels[ds.labels()[l]] = s.label_counts[l];
        for (const auto& a : s.accuracies) acc[a.model] = a.accuracy;
        return nlohmann::json{{"count", s.count}, {"labels", labels}, {"accuracy", acc}};
      };
      if (cli::machine_format(format)) {
        nlohmann::json j{{"dataset", ds.name()}, {"fingerprint", ds.fingerprint()}, {"whole", summary_json(st.whole)}};
        for (const auto& s : st.splits) j["splits"][s.split] = summary_json(s);
        out << j.dump(2) << '\n';
        return kExitOk;
      }
      auto print = [&](const std::string& name, const SplitSummary& s) {
        out << std::left << std::setw(10) << name << ' ' << s.count << " instances;";
        for (std::size_t l = 0; l < ds.labels().size(); ++l) {
          out << ' ' << ds.labels()[l] << '=' << s.label_counts[l] << " (" << cli::fixed(s.label_fraction(l), 3) << ')';
        }
        out << '\n';
        for (const auto& a : s.accuracies) out << "    " << a.model << " accuracy " << cli::fixed(a.accuracy) << '\n';
      };
      out << ds.name() << " (" << ds.fingerprint().substr(0, 16) << ")\n";
      print("all", st.whole);
      for (const auto& s : st.splits) print(s.split, s);
      return kExitOk;
    }

    if (*serve_cmd) {
      ServiceOptions opt;
      opt.data_dir = data_dir;
      opt.default_min_coverage = serve_cov;
      opt.default_min_productivity = serve_prod;
      if (*serve_gap_opt) opt.max_gap = serve_gap;
      opt.threads = threads;
      opt.log = &err;
      MiningConfig check;
      check.min_coverage = serve_cov;
      check.min_productivity = serve_prod;
      try {
        check.validate();
      } catch (const Error& e) {
        throw cli::UsageError(e.what());
      }
      Service svc(opt);
      err << "serving " << svc.dataset_ids().size() << " dataset(s) from " << data_dir << " on " << host << ':'
          << port << '\n';
      if (!serve(svc, host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
      return kExitOk;
    }
  } catch (const cli::UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const ReferenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitReference;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace shortcutlens
