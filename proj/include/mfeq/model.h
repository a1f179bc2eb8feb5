#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mfeq/noise_tree.h"
#include "mfeq/paths.h"

namespace mfeq {

enum class Population { Informed, Standard };
enum class CostMode { Affine, GeneralConvex };

// What the agent conditions on beyond its own state: the tree key alone, or
// the tree key refined by a regression on (B_t, C_t).
enum class Conditioning { TreeKey, TreeKeyFactors };

const char* to_string(Population p);
const char* to_string(CostMode m);
const char* to_string(Conditioning c);

struct Env {
    double t = 0.0;
    double x = 0.0;
    double price = 0.0;
    double b = 0.0;
    double c = 0.0;
};

// Registered catalog entry: name plus parameter map.
struct CoefRef {
    std::string name = "zero";
    std::map<std::string, double> params;

    std::string describe() const;
};

struct ScalarField {
    CoefRef ref;
    std::function<double(double t, double price)> f;

    double operator()(double t, double price) const { return f(t, price); }
};

// Running cost fbar(t, x, chi) or terminal cost g(x, chi), with d/dx.
// Affine entries are x * c(t, chi).
struct CostTerm {
    CoefRef ref;
    std::function<double(const Env&)> value;
    std::function<double(const Env&)> dx;
    bool uses_factor = false;
    bool uses_common = false;
    bool depends_on_x = false; // d/dx varies with x
};

ScalarField make_scalar_field(const CoefRef& ref);
CostTerm make_cost(const CoefRef& ref);

std::vector<std::string> scalar_field_names();
std::vector<std::string> cost_names();

struct AgentSpec {
    Population population = Population::Standard;
    double lambda = 1.0;
    double weight = 0.5;
    ScalarField drift;
    ScalarField vol_common;
    ScalarField vol_idio;
    CostMode cost_mode = CostMode::Affine;
    CostTerm running;
    CostTerm terminal;
    Conditioning conditioning = Conditioning::TreeKey;
    InitLaw init;

    double lambda_bar() const { return 1.0 / lambda; }
    bool uses_factor() const { return running.uses_factor || terminal.uses_factor; }
};

AgentSpec make_agent(Population pop, double lambda, double weight, const CoefRef& drift,
                     const CoefRef& vol_common, const CoefRef& vol_idio, CostMode mode,
                     const CoefRef& running, const CoefRef& terminal, Conditioning cond);

struct ModelBounds {
    double L = 1.0;
    double T = 1.0;

    double C_B() const { return L * (1.0 + T); }
};

struct MarketSpec {
    std::string name;
    GridSpec grid;
    KeyMode mode = KeyMode::FullPrefix;
    AgentSpec informed;
    AgentSpec standard;
    InformedFactorSpec factor;
    ModelBounds bounds;
    size_t samples = 20000;
    double tol = 1e-3;

    InitLaws init_laws() const { return {informed.init, standard.init}; }
    const AgentSpec& agent(Population p) const { return p == Population::Informed ? informed : standard; }
    void validate() const;
};

std::vector<std::string> preset_names();
MarketSpec preset(const std::string& name);

struct ValidationBox {
    double x = 10.0;
    double price = -1.0; // defaults to C_B
    double b = 5.0;
    double c = 5.0;
};

struct ValidationCheck {
    std::string name;
    bool passed = true;
    double worst = 0.0; // largest observed value of the checked quantity
    double limit = 0.0;
    std::string where;
};

struct ValidationReport {
    std::string agent;
    std::vector<ValidationCheck> checks;
    double fd_max_relative_gap = 0.0;

    bool passed() const;
    const ValidationCheck* find(const std::string& name) const;
};

ValidationReport validate(const AgentSpec& agent, const ModelBounds& bounds, size_t probe_budget,
                          const ValidationBox& box = {}, uint64_t seed = 7);

} // namespace mfeq
