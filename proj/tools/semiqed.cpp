#include <CLI11.hpp>

#include "semiqed/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"semiqed: semiclassical spin-boson QED workbench"};
    app.set_version_flag("--version", std::string("semiqed ") + semiqed::cli::tool_version);
    app.require_subcommand(1, 1);

    semiqed::cli::Invocation inv;
    std::string config, out;
    std::uint64_t seed = 0;
    for (const auto& name : semiqed::cli::command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "seed for randomized sampling");
    }
    CLI11_PARSE(app, argc, argv);

    const auto* sub = app.get_subcommands().front();
    inv.command = sub->get_name();
    inv.config = config;
    if (sub->count("--out")) inv.out = out;
    if (sub->count("--seed")) inv.seed = seed;
    return semiqed::cli::run(inv);
}
