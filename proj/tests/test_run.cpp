#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfeq/config.h"
#include "mfeq/run.h"

using namespace mfeq;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunSpec spec_for(Command c, const std::string& model, const std::string& out, const std::string& extra = "") {
    RunSpec r = parse_config_text("[run]\ncommand = " + std::string(to_string(c)) + "\nmodel = " + model + "\nout_dir = " +
                                  out + "\n" + extra);
    return r;
}

} // namespace

TEST_CASE("solve on the deterministic preset") {
    const fs::path out = fs::temp_directory_path() / "mfeq_run_det";
    fs::remove_all(out);
    const RunResult r = run(spec_for(Command::Solve, "deterministic", out.string()));
    CHECK(r.status == 0);
    CHECK(r.error.empty());
    for (const char* f : {"price.csv", "trace.csv", "consistency.csv", "probe.csv", "report.txt", "manifest.txt"})
        CHECK(fs::exists(out / f));
    const std::string price = slurp(out / "price.csv");
    CHECK(price.rfind("# mfeq solve\n", 0) == 0);
    CHECK(price.find("# seed = 1\n") != std::string::npos);
    CHECK(price.find("# model = deterministic\n") != std::string::npos);
    const std::string manifest = slurp(out / "manifest.txt");
    CHECK(manifest.find("price.csv") != std::string::npos);
    CHECK(manifest.find("status") != std::string::npos);
    for (const auto& c : r.checks) {
        CAPTURE(c.name);
        CHECK(c.passed);
    }
}

TEST_CASE("identical specs give byte-identical artifacts") {
    const fs::path a = fs::temp_directory_path() / "mfeq_run_a", b = fs::temp_directory_path() / "mfeq_run_b";
    fs::remove_all(a);
    fs::remove_all(b);
    // out_dir is part of the echo, so compare two runs into the same directory
    const RunSpec s = spec_for(Command::Solve, "single-informed", a.string(), "samples = 3000\ntol = 1e-6\n");
    REQUIRE(run(s).status == 0);
    std::map<std::string, std::string> first;
    for (const auto& e : fs::directory_iterator(a))
        if (e.path().extension() == ".csv") first[e.path().filename().string()] = slurp(e.path());
    fs::rename(a, b);
    REQUIRE(run(s).status == 0);
    CHECK(first.size() >= 4);
    for (const auto& [name, text] : first) {
        CAPTURE(name);
        CHECK(slurp(a / name) == text);
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("clearing with one N value is a configuration error") {
    const fs::path out = fs::temp_directory_path() / "mfeq_run_clr";
    fs::remove_all(out);
    const RunResult r = run(spec_for(Command::Clearing, "deterministic", out.string(), "n_values = 8\n"));
    CHECK(r.status == 2);
    CHECK(r.error.find("configuration error") != std::string::npos);
    CHECK(slurp(out / "manifest.txt").find("configuration error") != std::string::npos);
}

TEST_CASE("validate flags no violations on the convex preset") {
    const fs::path out = fs::temp_directory_path() / "mfeq_run_val";
    fs::remove_all(out);
    const RunResult r = run(spec_for(Command::Validate, "convex", out.string()));
    CHECK(r.status == 0);
    CHECK(fs::exists(out / "validation.csv"));
}

TEST_CASE("deterministic clearing is exact") {
    const fs::path out = fs::temp_directory_path() / "mfeq_run_clr2";
    fs::remove_all(out);
    const RunResult r = run(spec_for(Command::Clearing, "deterministic", out.string(), "damping = 1\nseeds = 2\n"));
    CHECK(r.status == 0);
    CHECK(slurp(out / "clearing.txt").find("exact clearing") != std::string::npos);
}
