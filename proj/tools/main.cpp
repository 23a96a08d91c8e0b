// Command line front end. Subcommands share one config schema; see
// run_command in conelab/io.hpp for the pipeline and artifact contract.
//
// Exit codes: 0 success, 1 bad configuration or usage (nothing written),
// 2 numerical failure (error.json written to the output directory).

#include <CLI11.hpp>

#include "conelab/io.hpp"

#include <filesystem>
#include <iostream>
#include <string>

namespace {

// Error::what() is "CodeName: detail"; return just the detail part.
std::string error_detail(const conelab::Error& e) {
    const std::string text = e.what();
    const std::string prefix = std::string(conelab::to_string(e.code())) + ": ";
    return text.rfind(prefix, 0) == 0 ? text.substr(prefix.size()) : text;
}

void write_error_record(const conelab::RunManifest& m, const conelab::Error& e) {
    try {
        std::error_code ec;
        std::filesystem::create_directories(m.out_dir, ec);
        if (ec) return;
        nlohmann::json record = {
            {"error", {{"code", conelab::to_string(e.code())}, {"message", error_detail(e)}}}};
        std::ofstream out(m.out_dir / "error.json", std::ios::binary);
        out << record.dump(2) << "\n";
    } catch (...) {
        // the stderr line below is the fallback record
    }
}

int dispatch(const conelab::RunManifest& m) {
    try {
        return conelab::run_command(m);
    } catch (const conelab::Error& e) {
        if (e.code() == conelab::ErrorCode::ConfigError) {
            std::cerr << "config error: " << error_detail(e) << "\n";
            return 1;
        }
        std::cerr << "run failed: " << e.what() << "\n";
        write_error_record(m, e);
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for scalar-flat hypersurface graphs over cones"};
    app.require_subcommand(0, 1);

    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults,
                 "print the default run configuration as JSON and exit");

    conelab::RunManifest manifest;
    std::string config, out, cache;
    const std::vector<std::pair<const char*, const char*>> commands = {
        {"link", "solve the rotation-balance radii and report curvature invariants"},
        {"spectrum", "tabulate angular mode eigenvalues and indicial exponents"},
        {"solve-linear", "solve the linearized problem for the prescribed boundary trace"},
        {"solve-graph", "run the fixed-point iteration to a scalar-flat graph"},
        {"verify", "cross-check geometric oracles at the configured resolution"},
        {"stability", "classify cone stability and evaluate the quadratic form battery"},
        {"lambda-scan", "probe convergence across an ascending amplitude list"},
    };
    for (const auto& [name, description] : commands) {
        CLI::App* sub = app.add_subcommand(name, description);
        sub->add_option("--config", config, "run configuration JSON file")->required();
        sub->add_option("--out", out, "output directory for artifacts")->required();
        sub->add_option("--cache", cache, "cache directory for reusable tables");
        sub->add_option("--threads", manifest.threads, "worker thread budget (>= 1)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (print_defaults) {
        std::cout << conelab::config_to_json(conelab::RunConfig{}).dump(2) << "\n";
        return 0;
    }

    const auto subs = app.get_subcommands();
    if (subs.empty()) {
        std::cerr << app.help();
        return 1;
    }
    manifest.command = subs.front()->get_name();
    manifest.config_path = config;
    manifest.out_dir = out;
    manifest.cache_dir = cache;
    return dispatch(manifest);
}
