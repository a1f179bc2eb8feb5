#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfeq/model.h"

namespace mfeq {

enum class Command { Validate, Solve, Refine, Clearing, Informed };

const char* to_string(Command c);
Command command_from_string(const std::string& s);

struct RunSpec {
    Command command = Command::Solve;
    std::string model = "zero";
    MarketSpec market; // preset with section overrides applied
    uint64_t seed = 1;
    double damping = 0.5;
    int max_iter = 100;
    std::string mode = "auto"; // prefix | markov | auto
    std::string out_dir = "out";
    int min_bucket = 30;
    bool parallel = true;
    size_t probe_budget = 1000;
    // refine
    std::vector<int> levels{1, 2, 3};
    int l_per_n = 2;
    int refine_seeds = 5;
    // clearing
    std::vector<int> n_values{8, 16, 32, 64, 128, 256, 512};
    int seeds = 10;
    int replications = 8;
    // informed
    int n_s = 10;
    std::string scaling = "mean-field"; // mean-field | finite-market

    KeyMode key_mode() const;
    bool operator==(const RunSpec& o) const;
};

// Values given on the command line; unset fields keep the config value.
struct Overrides {
    std::optional<std::string> model;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> mode;
    std::optional<double> damping;
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::optional<size_t> samples;
};

CoefRef parse_coef(const std::string& text);
InitLaw parse_init(const std::string& text);
std::string describe_init(const InitLaw& law);

RunSpec parse_config_text(const std::string& text, const std::string& origin = "<config>",
                          const Overrides& over = {});
RunSpec parse_config(const std::string& path, const Overrides& over = {});
RunSpec default_spec(Command command, const Overrides& over = {});

// Canonical config text; parsing it reproduces the spec.
std::string echo_config(const RunSpec& spec);

} // namespace mfeq
