#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "benney/config.hpp"
#include "benney/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Distribution-function solutions of the Benney long-wave system"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    unsigned threads = 0;
    bool quiet = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration JSON")->required();
        cmd->add_option("--out", out_dir, "output directory (default: current)");
        cmd->add_option("--threads", threads, "worker threads (overrides the config)");
        cmd->add_flag("--quiet", quiet, "suppress progress output");
    };
    auto* generate =
        app.add_subcommand("generate", "sample the solution fields; write CSV and metadata");
    auto* verify =
        app.add_subcommand("verify", "run the residual suites; write a JSON report");
    auto* transport =
        app.add_subcommand("transport", "check conservation along characteristics");
    for (auto* cmd : {generate, verify, transport}) add_common(cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    benney::RunConfig cfg;
    try {
        cfg = benney::load_config_file(config_path);
    } catch (const benney::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    benney::RunnerOptions opts;
    opts.out_dir = out_dir;
    opts.quiet = quiet;
    if (threads > 0) opts.threads = threads;

    if (generate->parsed()) return benney::run_generate(cfg, opts);
    if (verify->parsed()) return benney::run_verify(cfg, opts);
    return benney::run_transport(cfg, opts);
}
