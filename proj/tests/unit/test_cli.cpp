#include <doctest.h>

#include <json.hpp>
#include <map>
#include <sstream>

#include "../support/tempdir.hpp"
#include "biov/cli/cli.hpp"
#include "biov/cli/report.hpp"
#include "biov/core/digest.hpp"
#include "biov/datapairs/records.hpp"
#include "biov/lossmetrics/metrics.hpp"

using namespace biov;
using biov::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

// Full pipeline under `root`, all paths relative to it.
void pipeline(const fs::path& root) {
  const auto r = root.string();
  REQUIRE(run({"synth", "--out", r + "/d", "--subjects", "20", "--rho", "1.0", "--seed", "7", "--size", "16",
               "--fp-captures", "1"}).code == 0);
  REQUIRE(run({"pairs", "--manifest", r + "/d/manifest.jsonl", "--task", "iris-iris", "--seed", "7", "--out",
               r + "/p"}).code == 0);
  REQUIRE(run({"train", "--pairs", r + "/p", "--task", "iris-iris", "--backbone", "smallcnn", "--out", r + "/t",
               "--epochs", "2", "--batch-size", "16", "--quiet"}).code == 0);
  REQUIRE(run({"eval", "--pairs", r + "/p", "--ckpt", r + "/t/best.ckpt", "--out", r + "/e/report.json"}).code == 0);
}

}  // namespace

TEST_CASE("usage errors exit 2 with usage text; help exits 0") {
  auto r = run({"eval", "--pairs", "p", "--out", "r.json"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("--ckpt") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"synth", "--out", "x", "--subjects", "3", "--rho", "1", "--seed", "1", "--bogus"}).code == kExitUsage);
  CHECK(run({"pairs", "--manifest", "m", "--task", "iris", "--seed", "1", "--out", "o"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"train", "--help"}).out.find("--init-iris") != std::string::npos);
}

TEST_CASE("runtime errors exit 1") {
  TempDir dir("clierr");
  auto r = run({"eval", "--pairs", (dir / "p").string(), "--ckpt", (dir / "none.ckpt").string(), "--out",
                (dir / "r.json").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("none.ckpt") != std::string::npos);
  CHECK(run({"synth", "--out", (dir / "d").string(), "--subjects", "1", "--rho", "1", "--seed", "1"}).code ==
        kExitRuntime);
  CHECK(run({"train", "--pairs", (dir / "p").string(), "--out", (dir / "t").string()}).code == kExitRuntime);
}

TEST_CASE("synth emits exactly the configured captures") {
  TempDir dir("clisynth");
  const auto r = run({"synth", "--out", (dir / "d").string(), "--subjects", "20", "--rho", "1.0", "--seed", "7",
                      "--size", "8"});
  REQUIRE(r.code == 0);
  const auto m = read_manifest(dir / "d" / "manifest.jsonl");
  CHECK(m.records.size() == 20u * (2 * 2 + 10 * 10));
  std::map<std::string, std::map<std::string, int>> per;
  for (const auto& rec : m.records) {
    const std::string key = rec.modality == Modality::iris ? "iris" + std::string(to_string(*rec.side))
                                                           : "fp" + std::to_string(*rec.finger);
    per[rec.subject][key]++;
    CHECK(fs::exists(m.resolve(rec)));
  }
  CHECK(per.size() == 20);
  for (const auto& [subject, counts] : per) {
    CHECK(counts.size() == 12);
    for (const auto& [k, n] : counts) CHECK(n == (k.rfind("iris", 0) == 0 ? 2 : 10));
  }

  // the run manifest lists every artifact with a matching digest
  const auto rm = nlohmann::json::parse(read_file(dir / "d" / "run_manifest.json"));
  CHECK(rm["outputs"].size() == m.records.size() + 1);
  for (const auto& o : rm["outputs"]) CHECK(o["sha256"] == sha256_file(o["path"].get<std::string>()));
  CHECK(rm["config"]["subjects"] == 20);
}

TEST_CASE("pipeline is repeatable byte for byte, and the config snapshot re-runs") {
  TempDir dir("clipipe");
  pipeline(dir / "a");
  pipeline(dir / "b");
  for (const char* f : {"d/manifest.jsonl", "d/images/S003_iris_R_c1.pgm", "p/pairs.json", "p/train.jsonl",
                        "p/test.jsonl", "t/best.ckpt", "t/runlog.jsonl", "t/train_summary.json", "e/report.json",
                        "e/report.scores.csv"}) {
    CHECK_MESSAGE(read_file(dir / "a" / f) == read_file(dir / "b" / f), f);
  }
  auto strip = [](const fs::path& p, const std::string& from, const std::string& to) {
    auto j = nlohmann::json::parse(read_file(p));
    j.erase("timestamp");
    j.erase("wall_time_s");
    // config.json records the (root-dependent) paths themselves
    for (auto& o : j["outputs"]) {
      if (o["path"].get<std::string>().find("config.json") != std::string::npos) o.erase("sha256");
    }
    auto s = j.dump();
    for (std::size_t pos; (pos = s.find(from)) != std::string::npos;) s.replace(pos, from.size(), to);
    return s;
  };
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  CHECK(strip(dir / "a/t/run_manifest.json", a, "ROOT") == strip(dir / "b/t/run_manifest.json", b, "ROOT"));
  CHECK(strip(dir / "a/e/report.json.manifest.json", a, "ROOT") ==
        strip(dir / "b/e/report.json.manifest.json", b, "ROOT"));

  REQUIRE(run({"train", "--config", (dir / "a/t/config.json").string(), "--out", (dir / "a/t2").string(), "--quiet"})
              .code == 0);
  CHECK(read_file(dir / "a/t/best.ckpt") == read_file(dir / "a/t2/best.ckpt"));
}

TEST_CASE("report charts pass the report values through") {
  TempDir dir("clireport");
  EvalReport r1;
  r1.task = "iris-iris";
  r1.backbone = "smallcnn";
  r1.roc_auc = 0.91;
  r1.accuracy = 0.8125;
  r1.precision = 2.0 / 3.0;
  r1.recall = 0.5;
  EvalReport r2 = r1;
  r2.task = "cross";
  r2.roc_auc = 0.55;
  r2.recall = 1.0;
  write_file(dir / "r1.json", report_to_json(r1));
  write_file(dir / "r2.json", report_to_json(r2));
  REQUIRE(run({"report", "--inputs", (dir / "r1.json").string(), (dir / "r2.json").string(), "--out",
               (dir / "charts").string()}).code == 0);
  for (const auto& m : report_metric_names()) {
    const auto svg = read_file(dir / "charts" / (m + ".svg"));
    CHECK(svg.find("iris-iris/smallcnn") != std::string::npos);
    CHECK(svg.find("cross/smallcnn") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 5);
  }
  CHECK(read_file(dir / "charts/roc_auc.svg").find("0.9100") != std::string::npos);
  CHECK(read_file(dir / "charts/precision.svg").find("0.6667") != std::string::npos);

  std::istringstream csv(read_file(dir / "charts/metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "label,task,backbone,roc_auc,accuracy,precision,recall");
  for (const auto* r : {&r1, &r2}) {
    std::getline(csv, line);
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 7);
    CHECK(std::stod(cells[3]) == r->roc_auc);
    CHECK(std::stod(cells[4]) == r->accuracy);
    CHECK(std::stod(cells[5]) == r->precision);
    CHECK(std::stod(cells[6]) == r->recall);
  }
  CHECK(run({"report", "--inputs", (dir / "r1.json").string(), "--labels", "a", "b", "--out",
             (dir / "c2").string()}).code == kExitRuntime);
}
