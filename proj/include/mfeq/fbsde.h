#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "mfeq/estimator.h"
#include "mfeq/model.h"
#include "mfeq/paths.h"

namespace mfeq {

enum class SolveMode { AffineDirect, ConvexPicard };

const char* to_string(SolveMode m);

// Y as a function of (fine index, key, X, B, C).
struct DecouplingField {
    std::shared_ptr<const EstimationPlan> plan;
    BasisSpec basis;
    int start = 0;
    std::vector<TimeFits> fits; // indexed by fine index; empty before start

    double eval(int j, int key, double x, double b, double c) const;
};

struct FbsdeSolution {
    Population population = Population::Standard;
    SolveMode mode = SolveMode::AffineDirect;
    PathArray X, Y, alpha;
    PathArray target; // pathwise bracket whose conditional mean is Y
    int picard_iters = 0;
    double residual = 0.0;
    std::vector<double> picard_trace;
    size_t reduced_fits = 0;
    std::shared_ptr<const DecouplingField> field;

    double sup_abs_Y() const;
};

struct SolveOptions {
    Exec exec = Exec::Parallel;
    int picard_max = 200;
    double picard_tol = 1e-7;
    double picard_damping = 0.5;
    int basis_degree = 2;
    int start_index = 0;
    bool override_x0 = false;
    double x0 = 0.0;
    std::shared_ptr<const DecouplingField> warm;
};

double optimal_control(double y, double price, double lambda);

BasisSpec basis_for(const AgentSpec& agent, int degree);

FbsdeSolution solve_affine(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                           std::shared_ptr<const EstimationPlan> plan, const SolveOptions& opts = {});

FbsdeSolution solve_convex(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                           std::shared_ptr<const EstimationPlan> plan, const SolveOptions& opts = {});

FbsdeSolution solve_agent(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                          std::shared_ptr<const EstimationPlan> plan, const SolveOptions& opts = {});

// Euler scheme of the forward equation for a given control.
PathArray forward_state(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                        const PathArray& control, int start_index = 0, const double* x0 = nullptr);

struct CostEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::vector<double> per_sample;
};

// E[ int (price a + Lambda a^2 / 2 + fbar) dt + g ]; controls are piecewise
// constant so their part integrates exactly, state costs use the trapezoid rule.
CostEstimate cost_functional(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                             const PathArray& control);

struct ProbeResult {
    double ratio = 0.0;
    double gamma_p = 0.0;
    bool within = true;
};

double gamma_constant(double T, double L, double lambda);

ProbeResult decoupling_probe(const AgentSpec& agent, const PathArray& price, const ScenarioBatch& batch,
                             std::shared_ptr<const EstimationPlan> plan, double L, int j, double x1, double x2,
                             const SolveOptions& opts = {});

void write_solution_csv(std::ostream& os, const FbsdeSolution& sol, const ScenarioBatch& batch, size_t max_samples);

} // namespace mfeq
