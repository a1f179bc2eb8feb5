#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mfeq/equilibrium.h"

namespace mfeq {

struct MarketDraw {
    int N_I = 0;
    int N_S = 0;
    std::vector<double> aggregate; // sum_p n_p * mean_j alpha^{p,j}_t on the fine grid
    PathArray Y;                   // per agent, canonical label order
    PathArray alpha;
    std::vector<int> population;   // 0 informed, 1 standard
    double residual = 0.0;         // int_0^T aggregate^2 dt
};

// One common path and N_I + N_S agents sharing it under the mean-field price.
// labels[a] is the noise stream of agent a (identity when empty); sums run
// in stream order so relabelling leaves the result bit-identical.
MarketDraw simulate_market(const EquilibriumReport& eq, const MarketSpec& market, int N_I, int N_S,
                           uint64_t seed, uint64_t replication, const std::vector<uint32_t>& labels = {});

struct ResidualEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    size_t draws = 0;
};

ResidualEstimate clearing_residual(const EquilibriumReport& eq, const MarketSpec& market, int N_I, int N_S,
                                   uint64_t seed, int replications = 8, Exec exec = Exec::Parallel);

// 8 T C_B^2 sum_p Lbar_p^2 / N
double clearing_bound(const MarketSpec& market, int N);

struct ClearingReport {
    std::vector<int> N_values;
    std::vector<double> residuals;
    std::vector<double> stderrs;
    std::vector<double> bounds;
    std::vector<bool> within;
    double slope = 0.0;
    double slope_stderr = 0.0;
    bool exact = false; // every residual is exactly zero; slope undefined
    int seeds = 0;
    int replications = 0;

    bool bound_ok() const;
    bool slope_in(double lo, double hi) const { return !exact && slope >= lo && slope <= hi; }
};

ClearingReport rate_study(const EquilibriumReport& eq, const MarketSpec& market, const std::vector<int>& N_values,
                          const std::vector<uint64_t>& seeds, int replications = 8, Exec exec = Exec::Parallel);

void write_clearing_csv(std::ostream& os, const ClearingReport& r);

enum class PenaltyScaling { MeanField, FiniteMarket };

struct InformedScenario {
    int N_S = 1;
    double rho = 0.5;
    PenaltyScaling scaling = PenaltyScaling::MeanField;
};

struct InferenceRow {
    double t = 0.0;
    double beta_direct = 0.0;   // sample mean
    double beta_inferred = 0.0; // sample mean
    double gap = 0.0;           // max over samples
};

struct InferenceResult {
    double max_gap = 0.0;
    double threshold_at_max = 0.0;
    bool passed = true;
    std::vector<InferenceRow> rows;
    EquilibriumReport eq;
};

// The informed agent's rate read off its own FBSDE against the rate implied
// by the price and the standard agents' adjoints.
InferenceResult informed_inference_check(const InformedScenario& scenario, const MarketSpec& market,
                                         const ScenarioBatch& batch, const FixedPointOptions& opts = {});

void write_inference_csv(std::ostream& os, const InferenceResult& r);

} // namespace mfeq
