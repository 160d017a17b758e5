#include <CLI11.hpp>

#include <iostream>

#include "nlfp/error.hpp"
#include "nlfp/scenario.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Nonlocal nonlinear Fokker-Planck solver and particle simulator"};
    app.require_subcommand(1);

    std::string config;
    std::string positional;
    std::string out;
    std::uint64_t seed = 0;
    int threads = 1;
    bool allow_fail = false;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"run", "evolve the scenario and run the enabled verifications"},
        {"check-spec", "print the hypothesis report for a Bernstein spec"},
        {"resolvent-test", "resolvent property suite on random data"},
        {"particle-only", "particle simulation against the PDE solution"},
        {"convergence", "time-step refinement study"},
    };
    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> seed_opts, out_opts;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("config_file", positional, "scenario or spec JSON");
        sub->add_option("--config", config, "scenario or spec JSON");
        out_opts.push_back(sub->add_option("--out", out, "output directory"));
        seed_opts.push_back(sub->add_option("--seed", seed, "random seed (overrides the config)"));
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--allow-hypothesis-fail", allow_fail, "run even if the hypothesis check fails");
        subs.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    std::string command;
    bool seed_given = false, out_given = false;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (subs[i]->parsed()) {
            command = subs[i]->get_name();
            seed_given = seed_opts[i]->count() > 0;
            out_given = out_opts[i]->count() > 0;
        }
    }
    if (config.empty()) config = positional;
    if (config.empty()) {
        std::cerr << "error: a config file is required (--config <path>)\n";
        return 2;
    }

    nlfp::RunOptions ro;
    ro.threads = threads;
    ro.allow_hypothesis_fail = allow_fail;
    if (seed_given) ro.seed = seed;
    if (out_given) ro.out = out;

    try {
        const auto outcome = nlfp::run_command(command, config, ro);
        const auto& v = outcome.report.at("verifications");
        for (const auto& [name, item] : v.items()) {
            if (!item.contains("pass")) continue;
            std::cout << (item["pass"].get<bool>() ? "PASS " : "FAIL ") << name << "  value=" << item["value"]
                      << "  threshold=" << item["threshold"] << '\n';
        }
        for (const auto& w : outcome.report.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
        return outcome.exit_code;
    } catch (const nlfp::ConfigError& e) {
        std::cerr << "config error at " << e.path() << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
