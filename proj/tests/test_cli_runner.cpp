#include <catch2/catch_amalgamated.hpp>

#include "conelab/io.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace conelab;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct ScratchDir {
    fs::path root;
    explicit ScratchDir(const std::string& tag) {
        root = fs::temp_directory_path() / ("conelab_cli_" + tag);
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
    fs::path operator/(const std::string& leaf) const { return root / leaf; }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CONELAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1 || !WIFEXITED(rc)) return -1;
    return WEXITSTATUS(rc);
}

int run_cli_capture(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd =
        std::string(CONELAB_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    if (rc == -1 || !WIFEXITED(rc)) return -1;
    return WEXITSTATUS(rc);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(read_text(path)); }

std::size_t line_count(const fs::path& path) {
    const std::string text = read_text(path);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
        FAIL("expected a conelab error");
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidOrder;
}

const char* quick21 = R"({
  "link": {"p": 2, "q": 1},
  "grids": {"radial_nodes": 65, "angular_nodes1": 33, "angular_nodes2": 32},
  "solver": {"lambda": 0.01}
})";

}  // namespace

TEST_CASE("print-defaults emits a parseable configuration") {
    ScratchDir dir("defaults");
    const fs::path captured = dir / "defaults.json";
    CHECK(run_cli_capture("--print-defaults", captured) == 0);

    const nlohmann::json j = read_json(captured);
    CHECK(j["link"]["p"].get<int>() == 2);
    CHECK(j["link"]["q"].get<int>() == 1);
    CHECK(j["grids"]["radial_nodes"].get<int>() == 257);
    CHECK(j["solver"]["lambda"].get<double>() == Approx(0.01).margin(1e-15));
    CHECK(j["solver"]["psi"]["type"].get<std::string>() == "first_high");

    // the printed defaults round-trip through the strict parser
    const RunConfig c = parse_run_config(j);
    CHECK(c.grids.radial_nodes == 257);
    CHECK(c.solver.tol_fixed_point == Approx(1e-8).margin(1e-20));
    CHECK(c.stability.battery_modes == 20);
}

TEST_CASE("config schema rejects unknown keys and bad values") {
    CHECK(code_of([] { parse_run_config({{"grads", nlohmann::json::object()}}); }) ==
          ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_run_config({{"link", {{"p", 2}, {"q", 1}, {"r", 3}}}});
          }) == ErrorCode::ConfigError);
    CHECK(code_of([] { parse_run_config({{"link", {{"p", 0}, {"q", 1}}}}); }) ==
          ErrorCode::ConfigError);
    CHECK(code_of([] { parse_run_config({{"seed", -4}}); }) == ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_run_config({{"solver", {{"psi", {{"type", "lowest"}}}}}});
          }) == ErrorCode::ConfigError);
    CHECK(code_of([] {
              parse_run_config(
                  {{"solver", {{"psi", {{"type", "modes"}, {"entries", nlohmann::json::array()}}}}}});
          }) == ErrorCode::ConfigError);
    CHECK(code_of([] { parse_run_config({{"grids", {{"t_min", "tiny"}}}}); }) ==
          ErrorCode::ConfigError);

    ScratchDir dir("badcfg");
    write_text(dir / "broken.json", "{not json");
    const fs::path out = dir / "out";
    CHECK(run_cli("link --config " + (dir / "broken.json").string() + " --out " + out.string()) ==
          1);
    CHECK_FALSE(fs::exists(out));

    write_text(dir / "unknown.json", R"({"link": {"p": 2, "q": 1}, "grads": {}})");
    CHECK(run_cli("link --config " + (dir / "unknown.json").string() + " --out " + out.string()) ==
          1);
    CHECK_FALSE(fs::exists(out));

    CHECK(run_cli("link --config " + (dir / "absent.json").string() + " --out " + out.string()) ==
          1);
    CHECK(run_cli("frobnicate") == 1);
}

TEST_CASE("link command reports the worked example invariants") {
    ScratchDir dir("link");
    write_text(dir / "c.json", R"({"link": {"p": 2, "q": 1}})");
    const fs::path out = dir / "out";
    REQUIRE(run_cli("link --config " + (dir / "c.json").string() + " --out " + out.string()) == 0);

    const nlohmann::json s = read_json(out / "summary.json");
    CHECK(s["command"].get<std::string>() == "link");
    CHECK(s["link"]["a1"].get<double>() == Approx(std::sqrt(1.0 / 3.0)).margin(1e-12));
    CHECK(s["link"]["a2"].get<double>() == Approx(std::sqrt(2.0 / 3.0)).margin(1e-12));
    CHECK(s["invariants"]["S1"].get<double>() ==
          Approx(2.0 * std::sqrt(2.0) - std::sqrt(0.5)).margin(1e-12));
    CHECK(s["invariants"]["S2"].get<double>() == Approx(0.0).margin(1e-12));
    CHECK(s["invariants"]["S3"].get<double>() == Approx(-std::sqrt(2.0)).margin(1e-12));
    CHECK(s["config"]["link"]["p"].get<int>() == 2);
}

TEST_CASE("spectrum command caches and reproduces its table") {
    ScratchDir dir("spectrum");
    write_text(dir / "c.json", quick21);
    const std::string cfg = " --config " + (dir / "c.json").string();
    const std::string cache = " --cache " + (dir / "cache").string();

    REQUIRE(run_cli("spectrum" + cfg + " --out " + (dir / "miss").string() + cache) == 0);
    REQUIRE(run_cli("spectrum" + cfg + " --out " + (dir / "hit").string() + cache) == 0);
    REQUIRE(run_cli("spectrum" + cfg + " --out " + (dir / "plain").string()) == 0);

    CHECK(read_json(dir / "miss" / "summary.json")["cache_hit"].get<bool>() == false);
    CHECK(read_json(dir / "hit" / "summary.json")["cache_hit"].get<bool>() == true);
    CHECK(read_json(dir / "plain" / "summary.json")["cache_hit"].get<bool>() == false);

    const std::string miss = read_text(dir / "miss" / "spectrum.csv");
    CHECK(miss == read_text(dir / "hit" / "spectrum.csv"));
    CHECK(miss == read_text(dir / "plain" / "spectrum.csv"));

    // header plus the lowest mode row; eigenvalue -2 is the worked value at (0,0)
    CHECK(miss.rfind("k,l,parity,mu,re_gamma_plus,im_gamma_plus\n0,0,0,-2,", 0) == 0);
    CHECK(line_count(dir / "miss" / "spectrum.csv") ==
          1 + read_json(dir / "miss" / "summary.json")["rows"].get<std::size_t>());
}

TEST_CASE("graph solve converges and writes deterministic artifacts") {
    ScratchDir dir("graph");
    write_text(dir / "c.json", quick21);
    const std::string cfg = " --config " + (dir / "c.json").string();
    const fs::path out1 = dir / "run1", out2 = dir / "run2";

    REQUIRE(run_cli("solve-graph" + cfg + " --out " + out1.string()) == 0);
    const nlohmann::json s = read_json(out1 / "summary.json");
    CHECK(s["converged"].get<bool>());
    CHECK(s["diagnostics"]["iterations"].get<int>() <= 30);
    CHECK(s["diagnostics"]["window_ratio"].get<double>() < 1.0);
    CHECK(s["diagnostics"]["embedded_residual"].get<double>() < 1e-2);
    CHECK(line_count(out1 / "u_field.csv") == 1 + 65u * 33u * 32u);
    CHECK(line_count(out1 / "residual.csv") == 1 + 65u * 33u * 32u);

    REQUIRE(run_cli("solve-graph" + cfg + " --out " + out2.string()) == 0);
    CHECK(read_text(out1 / "summary.json") == read_text(out2 / "summary.json"));
    CHECK(read_text(out1 / "u_field.csv") == read_text(out2 / "u_field.csv"));
    CHECK(read_text(out1 / "residual.csv") == read_text(out2 / "residual.csv"));
}

TEST_CASE("stability command classifies both worked links") {
    ScratchDir dir("stability");
    write_text(dir / "c44.json", R"({
      "link": {"p": 4, "q": 4},
      "grids": {"radial_nodes": 65, "angular_nodes1": 33, "angular_nodes2": 33},
      "stability": {"battery_modes": 12, "hardy_samples": 10, "hardy_band": 12}
    })");
    const fs::path out44 = dir / "out44";
    REQUIRE(run_cli("stability --config " + (dir / "c44.json").string() + " --out " +
                    out44.string()) == 0);
    const nlohmann::json s44 = read_json(out44 / "stability.json");
    CHECK(s44["report"]["classification"].get<std::string>() == "strictly-1-stable");
    CHECK(s44["report"]["mu_M"].get<double>() == Approx(2.0 / 9.0).margin(1e-12));
    CHECK(s44["report"]["mu1"].get<double>() == Approx(-7.0).margin(1e-12));
    CHECK_FALSE(s44["report"].contains("witness"));
    CHECK(s44["hardy"]["violations"].get<int>() == 0);
    CHECK(s44["battery"]["min_value"].get<double>() > s44["battery"]["bound"].get<double>());

    write_text(dir / "c21.json", R"({
      "link": {"p": 2, "q": 1},
      "grids": {"radial_nodes": 65, "angular_nodes1": 17, "angular_nodes2": 16},
      "selection": {"mode_budget": 24},
      "stability": {"battery_modes": 8, "hardy_samples": 5, "hardy_band": 8}
    })");
    const fs::path out21 = dir / "out21";
    REQUIRE(run_cli("stability --config " + (dir / "c21.json").string() + " --out " +
                    out21.string()) == 0);
    const nlohmann::json s21 = read_json(out21 / "stability.json");
    CHECK(s21["report"]["classification"].get<std::string>() == "not-1-stable");
    const double omega = std::sqrt(7.0) / 2.0;
    CHECK(s21["report"]["witness"]["tau"].get<double>() ==
          Approx(std::exp(-pi / (2.0 * omega))).margin(1e-10));
    CHECK(s21["report"]["witness"]["sigma"].get<double>() ==
          Approx(std::exp(-3.0 * pi / (2.0 * omega))).margin(1e-10));
    CHECK(s21["grid_witness"]["lowest_eigenvalue"].get<double>() < 0.0);
    CHECK(std::abs(s21["grid_witness"]["quotient"].get<double>()) < 0.05);
}

TEST_CASE("numerical failure writes an error record and exits 2") {
    ScratchDir dir("diverge");
    write_text(dir / "c.json", R"({
      "link": {"p": 2, "q": 1},
      "grids": {"radial_nodes": 65, "angular_nodes1": 17, "angular_nodes2": 16},
      "selection": {"mode_budget": 24},
      "solver": {"lambda": 1.3, "max_iter": 8}
    })");
    const fs::path out = dir / "out";
    CHECK(run_cli("solve-graph --config " + (dir / "c.json").string() + " --out " + out.string()) ==
          2);
    const nlohmann::json err = read_json(out / "error.json");
    CHECK(err["error"]["code"].get<std::string>() == "NonConvergence");
    CHECK_FALSE(err["error"]["message"].get<std::string>().empty());
}

TEST_CASE("amplitude scan reports the convergence threshold") {
    ScratchDir dir("scan");
    write_text(dir / "c.json", quick21);
    const fs::path out = dir / "out";
    REQUIRE(run_cli("lambda-scan --config " + (dir / "c.json").string() + " --out " +
                    out.string()) == 0);
    const nlohmann::json s = read_json(out / "summary.json");
    REQUIRE(s["rows"].size() == 4);
    for (const auto& row : s["rows"]) {
        CHECK(row["converged"].get<bool>());
        CHECK(row["iterations"].get<int>() <= 30);
    }
    CHECK(s["lambda_hat"].get<double>() == Approx(0.02).margin(1e-15));
    CHECK_FALSE(s["truncated"].get<bool>());
}
