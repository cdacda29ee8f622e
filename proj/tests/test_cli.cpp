#include "corpora.hpp"

#include "shortcutlens/cli.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <sstream>

using namespace shortcutlens;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "shortcutlens");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string golden(const std::string& name) {
  auto s = testsupport::read_file(testsupport::fixture("golden/" + name));
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s + "\n";
}

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    static std::atomic<int> counter{0};
    dir_ = fs::temp_directory_path() / ("shortcutlens_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    for (const char* f : {"mini_space.jsonl", "mini_space.predictions.jsonl", "mini_space.embeddings.tsv"}) {
      fs::copy_file(testsupport::fixture(f), dir_ / f);
    }
    dataset_ = (dir_ / "mini_space.jsonl").string();
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string mined(const std::string& cov = "5") {
    auto r = run({"mine", "--dataset", dataset_, "--min-coverage", cov, "--out", path("art" + cov + ".json")});
    EXPECT_EQ(r.code, 0) << r.err;
    return path("art" + cov + ".json");
  }

  fs::path dir_;
  std::string dataset_;
};

}  // namespace

TEST_F(CliTest, MineReportsCountsAndIsByteStable) {
  auto r = run({"mine", "--dataset", dataset_, "--min-coverage", "5", "--out", path("a.json"), "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["instances"], 50);
  EXPECT_EQ(j["selected"], 5);
  EXPECT_EQ(j["thresholds"][0]["count"], 5);
  ASSERT_EQ(run({"mine", "--dataset", dataset_, "--min-coverage", "5", "--out", path("b.json"), "--threads", "3"}).code, 0);
  EXPECT_EQ(testsupport::read_file(path("a.json")), testsupport::read_file(path("b.json")));

  auto text = run({"mine", "--dataset", dataset_, "--min-coverage", "5", "--out", path("c.json")});
  EXPECT_NE(text.out.find("5 shortcuts"), std::string::npos) << text.out;
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({"mine", "--out", path("a.json")}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"mine", "--dataset", dataset_, "--min-coverage", "0", "--out", path("a.json")}).code, kExitUsage);
  EXPECT_EQ(run({"mine", "--dataset", dataset_, "--min-productivity", "1.5", "--out", path("a.json")}).code, kExitUsage);
  EXPECT_EQ(run({"mine", "--dataset", dataset_, "--split-threshold", "test:x:0.5", "--out", path("a.json")}).code,
            kExitUsage);
  EXPECT_EQ(run({"mine", "--dataset", dataset_, "--split-threshold", "nope:2:0.5", "--out", path("a.json")}).code,
            kExitUsage);
  EXPECT_EQ(run({"export", "--artifact", path("missing.json")}).code, kExitUsage);
  EXPECT_EQ(run({"whatif", "--dataset", dataset_, "--artifact", path("missing.json")}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, ParseAndIoErrorCodes) {
  std::ofstream(path("bad.jsonl")) << "{\"id\":\"a\",\"label\":\"x\"}\n";
  EXPECT_EQ(run({"mine", "--dataset", path("bad.jsonl"), "--out", path("a.json")}).code, kExitParse);
  EXPECT_EQ(run({"stats", "--dataset", path("nope.jsonl")}).code, kExitIo);
  std::ofstream(path("garbage.json")) << "not an artifact";
  EXPECT_EQ(run({"export", "--artifact", path("garbage.json")}).code, kExitParse);
}

TEST_F(CliTest, WhatIfMatchesTheGolden) {
  auto art = mined("10");
  auto request = json::parse(testsupport::read_file(testsupport::fixture("golden/mini_space.whatif_request.json")));
  std::string ids;
  for (const auto& id : request["shortcut_ids"]) ids += (ids.empty() ? "" : ",") + id.get<std::string>();
  auto r = run({"whatif", "--dataset", dataset_, "--artifact", art, "--ids", ids, "--split",
                request["split"].get<std::string>(), "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, golden("mini_space.whatif.json"));

  auto text = run({"whatif", "--dataset", dataset_, "--artifact", art, "--ids", ids, "--split", "test"});
  ASSERT_EQ(text.code, 0);
  EXPECT_NE(text.out.find("group productivity"), std::string::npos);
  EXPECT_NE(text.out.find("average"), std::string::npos);
}

TEST_F(CliTest, WhatIfEmptySelectionAndBadReferences) {
  auto art = mined();
  auto empty = run({"whatif", "--dataset", dataset_, "--artifact", art, "--format", "json"});
  ASSERT_EQ(empty.code, 0) << empty.err;
  EXPECT_EQ(json::parse(empty.out)["dirty_ids"], json::array());

  auto bad = run({"whatif", "--dataset", dataset_, "--artifact", art, "--ids", "0123456789abcdef"});
  EXPECT_EQ(bad.code, kExitReference);
  EXPECT_NE(bad.err.find("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(run({"whatif", "--dataset", dataset_, "--artifact", art, "--split", "nope"}).code, kExitReference);
}

TEST_F(CliTest, ArtifactFromOtherContentIsRejected) {
  auto art = mined();
  auto lines = testsupport::read_file(dataset_);
  std::ofstream(path("other.jsonl")) << lines.substr(0, lines.find('\n') + 1);
  EXPECT_EQ(run({"whatif", "--dataset", path("other.jsonl"), "--artifact", art, "--no-sidecars"}).code, kExitUsage);
}

TEST_F(CliTest, RemoveWritesTheDerivedDataset) {
  auto art = mined();
  auto r = run({"remove", "--dataset", dataset_, "--artifact", art, "--ids", "2ee458aee59c2f67,7dec00696af9ca23",
                "--split", "test", "--out", path("derived.jsonl"), "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["comparison"]["shortcuts_before"], 5);
  EXPECT_EQ(j["comparison"]["shortcuts_after"], 3);
  for (const auto& [id, present] : j["comparison"]["selection_present_after"].items()) EXPECT_FALSE(present) << id;
  EXPECT_EQ(j["comparison"]["selection_present_after"].size(), 2u);
  auto derived = load_dataset(path("derived.jsonl"));
  EXPECT_EQ(derived.size(), 50u - j["comparison"]["removed_instances"].get<std::size_t>());
  EXPECT_TRUE(fs::exists(path("derived.predictions.jsonl")));
  EXPECT_TRUE(fs::exists(path("derived.provenance.json")));

  // The derived dataset mines cleanly through the same front end.
  auto again = run({"mine", "--dataset", path("derived.jsonl"), "--min-coverage", "5", "--out", path("d.json"),
                    "--format", "json"});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(json::parse(again.out)["selected"], 3);
}

TEST_F(CliTest, RemoveToAnUnwritablePathIsAnIoError) {
  auto art = mined();
  auto r = run({"remove", "--dataset", dataset_, "--artifact", art, "--ids", "2ee458aee59c2f67", "--out",
                path("no/such/dir/derived.jsonl")});
  EXPECT_EQ(r.code, kExitIo) << r.err;
}

TEST_F(CliTest, ExportCsvHasOneRowPerShortcut) {
  auto art = mined();
  auto r = run({"export", "--artifact", art});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "id,template,prediction,aggregated,coverage,productivity,train_coverage,train_productivity,"
                    "dev_coverage,dev_productivity,test_coverage,test_productivity");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5u);

  auto only_test = run({"export", "--artifact", art, "--split", "test", "--out", path("t.csv")});
  ASSERT_EQ(only_test.code, 0);
  auto csv = testsupport::read_file(path("t.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "id,template,prediction,aggregated,coverage,productivity,test_coverage,test_productivity");
  EXPECT_EQ(run({"export", "--artifact", art, "--split", "nope"}).code, kExitReference);
  auto stricter = run({"export", "--artifact", art, "--min-coverage", "1000"});
  EXPECT_EQ(std::count(stricter.out.begin(), stricter.out.end(), '\n'), 1);
}

TEST_F(CliTest, ExportJsonAfterAggregationMatchesTheService) {
  auto art = mined();
  auto agg = run({"aggregate", "--dataset", dataset_, "--artifact", art, "--out", path("agg.json")});
  ASSERT_EQ(agg.code, 0) << agg.err;
  auto r = run({"export", "--artifact", path("agg.json"), "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, golden("mini_space.shortcuts.json"));
}

TEST_F(CliTest, AggregateNeedsEmbeddings) {
  auto art = mined();
  EXPECT_EQ(run({"aggregate", "--dataset", dataset_, "--artifact", art, "--no-sidecars", "--out", path("x.json")}).code,
            kExitUsage);
  EXPECT_EQ(run({"aggregate", "--dataset", dataset_, "--artifact", art, "--cut", "3", "--out", path("x.json")}).code,
            kExitUsage);
}

TEST_F(CliTest, StatsReportsSplitsAndAccuracy) {
  auto r = run({"stats", "--dataset", dataset_, "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["whole"]["count"], 50);
  int total = 0;
  for (const auto& [name, s] : j["splits"].items()) total += s["count"].get<int>();
  EXPECT_EQ(total, 50);
  EXPECT_FALSE(j["whole"]["accuracy"].empty());
  auto text = run({"stats", "--dataset", dataset_});
  EXPECT_NE(text.out.find("accuracy"), std::string::npos);
}
