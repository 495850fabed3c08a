#include <string>

#include "../support/process.hpp"
#include "doctest.h"
#include "json.hpp"
#include "qris/features.hpp"

using namespace qris::testing;
using json = nlohmann::json;

namespace {

const std::string kTool = QRIS_TOOL;

ToolResult tool(const std::vector<std::string>& args) { return run_tool(kTool, args); }

}  // namespace

TEST_CASE("exit codes") {
    TempDir dir("qris-cli-codes");
    CHECK(tool({"--help"}).exit_code == 0);
    CHECK(tool({}).exit_code == 2);
    CHECK(tool({"no-such-command"}).exit_code == 2);
    CHECK(tool({"train"}).exit_code == 2);
    CHECK(tool({"render", "x", "--out", dir.str("a.png"), "--ecc", "Z"}).exit_code == 2);

    const ToolResult missing = tool({"predict", dir.str("nope.png"), "--model", dir.str("nope.qris")});
    CHECK(missing.exit_code == 1);
    CHECK(json::parse(missing.out)["error"] == "io");
    CHECK(tool({"serve", "--model", dir.str("nope.qris"), "--port", "0"}).exit_code == 1);
}

TEST_CASE("gen-dataset is byte-identical across runs and job counts") {
    TempDir dir("qris-cli-gen");
    REQUIRE(tool({"synth-urls", "--per-label", "40", "--out", dir.str("urls.csv"), "--seed", "3"}).exit_code == 0);
    REQUIRE(tool({"gen-dataset", dir.str("urls.csv"), "--per-label", "30", "--out", dir.str("a.csv"), "--jobs", "1"})
                .exit_code == 0);
    REQUIRE(tool({"gen-dataset", dir.str("urls.csv"), "--per-label", "30", "--out", dir.str("b.csv"), "--jobs", "3"})
                .exit_code == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    const auto manifest = json::parse(slurp(dir / "a.csv.manifest.json"));
    CHECK(manifest["seed"] == 42);
}

TEST_CASE("train, eval and predict on separable synthetic features") {
    TempDir dir("qris-cli-model");
    REQUIRE(tool({"synth-features", "--per-label", "300", "--out", dir.str("f.csv")}).exit_code == 0);
    REQUIRE(tool({"split", dir.str("f.csv"), "--out-dir", dir.str("split")}).exit_code == 0);
    REQUIRE(tool({"train", dir.str("split/train.csv"), "--out", dir.str("m.qris")}).exit_code == 0);
    const ToolResult ev = tool({"eval", dir.str("split/test.csv"), "--model", dir.str("m.qris"), "--roc"});
    REQUIRE(ev.exit_code == 0);
    const auto metrics = json::parse(ev.out)["metrics"];
    CHECK(metrics["accuracy"].get<double>() >= 95.0);
    CHECK(metrics["roc"].size() >= 2);

    REQUIRE(tool({"render", "https://cli.example/path", "--out", dir.str("q.png")}).exit_code == 0);
    const ToolResult pr = tool({"predict", dir.str("q.png"), "--model", dir.str("m.qris")});
    REQUIRE(pr.exit_code == 0);
    const auto j = json::parse(pr.out);
    for (const char* key : {"image", "label", "confidence", "probability_phishing", "features", "model_id"}) {
        CHECK(j.contains(key));
    }
    CHECK(j["features"].size() == qris::kNumFeatures);
}
