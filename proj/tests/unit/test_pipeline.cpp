#include "cerberus/pipeline.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>

using namespace cerberus;
using nlohmann::json;

namespace {

json small_config(const std::filesystem::path& out) {
    return {{"seed", 3},
            {"paths", {{"output", out.string()}}},
            {"synth", {{"T", 4}, {"users_per_community", 10}}},
            {"filter", {{"min_active_timesteps", 2}, {"n_context_users", 30}, {"min_word_users", 3}}},
            {"model", {{"k", 4}, {"epochs", 20}}},
            {"clustering", {{"K_list", {3}}, {"n_seeds", 2}}}};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CERBERUS_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("unknown configuration keys are rejected") {
    CHECK_THROWS_AS(parse_run_config(json{{"sede", 1}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"model", {{"kk", 3}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"model", {{"k", "ten"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"model", {{"variant", "x"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_run_config(json{{"eval", {{"holdout_fraction", 1.5}}}}), ConfigError);
    try {
        parse_run_config(json{{"filter", {{"n_ctx", 3}}}});
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("n_context_users") != std::string::npos);
    }
}

TEST_CASE("overrides follow dotted paths") {
    json j = json::object();
    apply_override(j, "model.k=32");
    apply_override(j, "model.variant=noadj");
    apply_override(j, "clustering.K_list=[2,5]");
    CHECK(j["model"]["k"] == 32);
    CHECK(j["model"]["variant"] == "noadj");
    const RunConfig c = parse_run_config(j);
    CHECK(c.model.k == 32);
    CHECK(c.clustering.K_list == std::vector<int>{2, 5});
    CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "model.k.x=1"), ConfigError);
}

TEST_CASE("stage hashes react only to relevant changes") {
    json j = small_config("a");
    const RunConfig base = parse_run_config(j);
    j["paths"]["output"] = "b";
    const RunConfig moved = parse_run_config(j);
    for (const auto& s : stage_names()) CHECK(stage_hash(base, s) == stage_hash(moved, s));
    j["clustering"]["K_list"] = {4};
    const RunConfig k4 = parse_run_config(j);
    CHECK(stage_hash(base, "train") == stage_hash(k4, "train"));
    CHECK(stage_hash(base, "cluster") != stage_hash(k4, "cluster"));
    j["model"]["k"] = 5;
    const RunConfig k5 = parse_run_config(j);
    CHECK(stage_hash(base, "matrices") == stage_hash(k5, "matrices"));
    CHECK(stage_hash(base, "train") != stage_hash(k5, "train"));
    CHECK(stage_hash(base, "purity") != stage_hash(k5, "purity"));
}

TEST_CASE("stages require up-to-date upstream artifacts") {
    const auto dir = testutil::scratch("pipeline");
    json j = small_config(dir);
    const RunConfig c = parse_run_config(j);
    CHECK_THROWS_AS(run_stage("train", c), MissingArtifact);
    run_stage("synth", c);
    run_stage("ingest", c);
    run_stage("matrices", c);
    run_stage("train", c);
    CHECK(std::filesystem::exists(dir / "model" / "stage.json"));
    CHECK(std::filesystem::exists(dir / "runlog" / "train.json"));

    j["filter"]["min_word_users"] = 4;
    const RunConfig changed = parse_run_config(j);
    CHECK_THROWS_AS(run_stage("train", changed), MissingArtifact);
    CHECK_THROWS_AS(run_stage("nope", c), ConfigError);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(MissingArtifact("x")) == 2);
    CHECK(exit_code_for(ConfigError("x")) == 3);
    CHECK(exit_code_for(Error("x")) == 1);

    const auto dir = testutil::scratch("cli");
    std::ofstream(dir / "cfg.json") << small_config(dir / "out").dump();
    const std::string cfg = "--config " + (dir / "cfg.json").string();
    CHECK(run_cli("train " + cfg) == 2);
    CHECK(run_cli("train " + cfg + " --set model.bogus=1") == 3);
    CHECK(run_cli("frobnicate") == 3);
    CHECK(run_cli("train --config " + (dir / "absent.json").string()) == 3);
    CHECK(run_cli("synth " + cfg) == 0);
    CHECK(run_cli("ingest " + cfg) == 0);
    CHECK(run_cli("config " + cfg) == 0);
}

TEST_CASE("full pipeline on a tiny fixture") {
    const auto dir = testutil::scratch("all");
    const RunConfig c = parse_run_config(small_config(dir));
    run_all(c);
    for (const char* d : {"synth", "ingest", "matrices", "model", "recon", "clusters", "purity",
                          "forecast", "concept", "project"}) {
        CAPTURE(d);
        CHECK(std::filesystem::exists(dir / d / "stage.json"));
    }
    CHECK_FALSE(std::filesystem::exists(dir / "predict"));  // no future window
}
