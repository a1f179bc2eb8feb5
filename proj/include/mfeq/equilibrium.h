#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "mfeq/estimator.h"
#include "mfeq/fbsde.h"
#include "mfeq/model.h"
#include "mfeq/paths.h"
#include "mfeq/price.h"

namespace mfeq {

// Buckets and estimation plan shared by every Phi evaluation on one batch.
struct Workspace {
    std::shared_ptr<const Buckets> buckets;
    std::shared_ptr<const EstimationPlan> plan;
};

Workspace make_workspace(const ScenarioBatch& batch, KeyMode mode, int min_count, Exec exec = Exec::Parallel);

struct PhiOptions {
    Exec exec = Exec::Parallel;
    SolveOptions solve;
};

struct PhiResult {
    DiscretePrice price;
    DiscretePrice se; // bucket standard error of every price value
    FbsdeSolution informed;
    FbsdeSolution standard;
    double sup_Y_I = 0.0;
    double sup_Y_S = 0.0;
};

// theta' = -(sum_p n_p Lbar^p)^{-1} E[sum_p n_p Lbar^p Y^p | key]
PhiResult apply_phi(const DiscretePrice& theta, const ScenarioBatch& batch, const MarketSpec& market,
                    const Workspace& ws, const PhiOptions& opts = {},
                    std::shared_ptr<const DecouplingField> warm_I = nullptr,
                    std::shared_ptr<const DecouplingField> warm_S = nullptr);

struct ConditionalVariation {
    double value = 0.0;
    double se = 0.0;
};

// sum_j E|E[P_{j+1} - P_j | F_j]| on the fine partition, the conditional
// mean taken by the given regression basis within the bucket of t_j.
ConditionalVariation conditional_variation(const PathArray& process, const EstimationPlan& plan,
                                           const BasisSpec& basis, const StateColumns& state,
                                           Exec exec = Exec::Parallel);

struct Diagnostics {
    double C_B = 0.0;
    double L = 0.0;
    double T = 0.0;
    double sup_price = 0.0;
    double sup_Y_I = 0.0;
    double sup_Y_S = 0.0;
    double time_lipschitz_max = 0.0;
    double time_lipschitz_slack = 0.0; // 10 standard errors at the worst key
    bool time_lipschitz_ok = true;
    ConditionalVariation cv_price;
    ConditionalVariation cv_Y_I;
    ConditionalVariation cv_Y_S;

    bool bounded() const { return sup_price <= C_B && sup_Y_I <= C_B && sup_Y_S <= C_B; }
    bool cv_price_ok() const { return cv_price.value <= 2 * L * T + 3 * cv_price.se; }
    bool cv_Y_ok() const { return cv_Y_I.value <= T * L + 3 * cv_Y_I.se && cv_Y_S.value <= T * L + 3 * cv_Y_S.se; }
};

Diagnostics diagnostics(const DiscretePrice& price, const PhiResult& phi, const ScenarioBatch& batch,
                        const MarketSpec& market, const Workspace& ws, Exec exec = Exec::Parallel);

struct FixedPointOptions {
    double damping = 0.5;
    double tol = 1e-3;
    int max_iter = 100;
    int min_count = 30;
    PhiOptions phi;
    const DiscretePrice* init = nullptr;
};

struct IterateRecord {
    double residual = 0.0;
    double sup_price = 0.0; // of the new iterate
    double sup_Y_I = 0.0;
    double sup_Y_S = 0.0;
};

struct EquilibriumReport {
    DiscretePrice price;
    int iterations = 0;
    std::vector<double> residual_trace;
    std::vector<IterateRecord> iterates;
    double initial_sup_price = 0.0;
    bool converged = false;
    Diagnostics diag;
    PhiResult final_phi; // Phi at the returned price
    std::vector<std::string> warnings;
    Workspace ws;
};

EquilibriumReport solve_fixed_point(const ScenarioBatch& batch, const MarketSpec& market,
                                    const FixedPointOptions& opts = {});

struct ConsistencyResult {
    std::vector<double> residual; // per interval, max over keys and sub-times
    std::vector<double> slack;    // per interval, 3 combined standard errors at the worst key
    double tol = 0.0;
    size_t skipped = 0; // keys missing or below the bucket minimum in either batch
    bool passed = true;
};

// Phi(price) on an independent batch against the price itself, on keys
// estimated directly in both batches.
ConsistencyResult consistency_residual(const EquilibriumReport& report, const MarketSpec& market,
                                       uint64_t fresh_seed, size_t samples, const FixedPointOptions& opts = {});

// int_0^T min(1, |x - y|) dt by the trapezoid rule
double mz_distance(const double* x, const double* y, const std::vector<double>& grid);
double mz_distance(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& grid);

struct RefinementLevel {
    int n = 0;
    int l = 0;
    int iterations = 0;
    bool converged = false;
    Diagnostics diag;
};

struct RefinementResult {
    std::vector<RefinementLevel> levels;
    std::vector<double> median_dm; // adjacent pairs
    std::vector<double> mean_dm;
    bool decreasing() const;
};

// Fixed points at each level on views of one fine batch; l(n) = l_per_n * n.
RefinementResult refinement_study(const MarketSpec& market, const std::vector<int>& levels,
                                  const ScenarioBatch& fine_batch, int l_per_n, KeyMode mode,
                                  const FixedPointOptions& opts = {});

// d(Phi(theta + eps * h), Phi(theta)) for each eps, h a fixed bounded bump.
std::vector<double> continuity_probe(const DiscretePrice& theta, const ScenarioBatch& batch,
                                     const MarketSpec& market, const Workspace& ws,
                                     const std::vector<double>& eps, const PhiOptions& opts = {});

void write_report(std::ostream& os, const EquilibriumReport& report, const MarketSpec& market,
                  const FixedPointOptions& opts);

} // namespace mfeq
