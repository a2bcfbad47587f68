#include "cerberus/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace cerberus;
    CLI::App app{"cerberus: joint social/linguistic user embeddings over time"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "JSON run configuration");
    app.add_option("--set", overrides, "override a configuration value, e.g. model.k=32")
        ->take_all();

    std::vector<std::pair<std::string, CLI::App*>> subs;
    for (const auto& name : stage_names()) {
        subs.emplace_back(name, app.add_subcommand(name, "run the " + name + " stage"));
    }
    subs.emplace_back("all", app.add_subcommand("all", "run every stage in order"));
    CLI::App* show = app.add_subcommand("config", "print the resolved configuration hashes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }

    try {
        nlohmann::json j = nlohmann::json::object();
        if (!config_path.empty()) j = load_config_file(config_path);
        for (const auto& o : overrides) apply_override(j, o);
        const RunConfig cfg = parse_run_config(j);
        if (show->parsed()) {
            for (const auto& s : stage_names()) std::cout << s << ' ' << stage_hash(cfg, s) << '\n';
            return 0;
        }
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed()) continue;
            if (name == "all") {
                run_all(cfg);
            } else {
                run_stage(name, cfg);
            }
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}
