#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mfeq/config.h"
#include "mfeq/error.h"
#include "mfeq/run.h"

int main(int argc, char** argv) {
    CLI::App app{"mfeq: discretized mean-field equilibrium prices with informed and standard traders"};
    app.require_subcommand(1, 1);

    std::string config;
    mfeq::Overrides over;
    std::string model, out_dir, mode;
    uint64_t seed = 0;
    double damping = 0, tol = 0;
    int max_iter = 0;
    size_t samples = 0;

    const char* names[] = {"validate", "solve", "refine", "clearing", "informed"};
    const char* help[] = {"probe the model coefficients against the declared bounds",
                          "damped fixed point of the price map with diagnostics",
                          "coupled refinement study over tree depths",
                          "market clearing residual and its rate in N",
                          "informed strategy inference identity"};
    for (int k = 0; k < 5; ++k) {
        CLI::App* sub = app.add_subcommand(names[k], help[k]);
        sub->add_option("--config", config, "config file")->check(CLI::ExistingFile);
        sub->add_option("--preset", model, "preset name (zero, deterministic, terminal-common-noise, single-informed, convex)");
        sub->add_option("--seed", seed, "base seed");
        sub->add_option("--out-dir", out_dir, "artifact directory");
        sub->add_option("--mode", mode, "key mode")->check(CLI::IsMember({"prefix", "markov", "auto"}));
        sub->add_option("--damping", damping, "fixed-point damping in (0,1]");
        sub->add_option("--tol", tol, "fixed-point tolerance");
        sub->add_option("--max-iter", max_iter, "fixed-point iteration cap");
        sub->add_option("--samples", samples, "Monte Carlo sample count");
    }
    CLI11_PARSE(app, argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--preset")) over.model = model;
    if (sub->count("--seed")) over.seed = seed;
    if (sub->count("--out-dir")) over.out_dir = out_dir;
    if (sub->count("--mode")) over.mode = mode;
    if (sub->count("--damping")) over.damping = damping;
    if (sub->count("--tol")) over.tol = tol;
    if (sub->count("--max-iter")) over.max_iter = max_iter;
    if (sub->count("--samples")) over.samples = samples;

    try {
        const mfeq::Command cmd = mfeq::command_from_string(sub->get_name());
        mfeq::RunSpec spec = config.empty() ? mfeq::default_spec(cmd, over) : mfeq::parse_config(config, over);
        spec.command = cmd;
        const mfeq::RunResult r = mfeq::run(spec, &std::cout);
        if (r.status == 2) std::cerr << r.error << '\n';
        std::cout << "status = " << (r.status == 0 ? "pass" : r.status == 1 ? "fail" : "error") << " (see "
                  << spec.out_dir << "/manifest.txt)\n";
        return r.status;
    } catch (const mfeq::Error& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
}
