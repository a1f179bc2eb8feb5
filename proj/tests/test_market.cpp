#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfeq/error.h"
#include "mfeq/market.h"
#include "mfeq/model.h"

using namespace mfeq;

namespace {

EquilibriumReport solve(const MarketSpec& mk, size_t n, double damping = 0.5) {
    const ScenarioBatch b = sample_batch(mk.grid, 1, n, mk.factor, mk.init_laws());
    FixedPointOptions fo;
    fo.damping = damping;
    fo.tol = std::max(mk.tol, 1e-8);
    return solve_fixed_point(b, mk, fo);
}

} // namespace

TEST_CASE("clearing bound constant") {
    const MarketSpec mk = preset("single-informed");
    // C_B = 2, Lbar = 2 and 1
    CHECK(clearing_bound(mk, 10) == doctest::Approx(8 * 4.0 * 5.0 / 10));
}

TEST_CASE("deterministic market clears exactly") {
    const MarketSpec mk = preset("deterministic");
    const EquilibriumReport eq = solve(mk, 2000, 1.0);
    const ClearingReport r = rate_study(eq, mk, {8, 16, 32, 64}, {5, 6});
    CHECK(r.exact);
    for (double v : r.residuals) CHECK(v == 0.0);
    CHECK(r.bound_ok());
    CHECK_FALSE(r.slope_in(-2, 0));
}

TEST_CASE("relabelling agents leaves the draw bit-identical") {
    const MarketSpec mk = preset("single-informed");
    const EquilibriumReport eq = solve(mk, 3000);
    const MarketDraw a = simulate_market(eq, mk, 3, 5, 42, 0);
    std::vector<uint32_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0u);
    std::reverse(perm.begin(), perm.end());
    const MarketDraw b = simulate_market(eq, mk, 3, 5, 42, 0, perm);
    CHECK(a.aggregate == b.aggregate);
    CHECK(a.residual == b.residual);
    CHECK(a.residual > 0.0);
    const MarketDraw c = simulate_market(eq, mk, 3, 5, 43, 0);
    CHECK(c.residual != a.residual);
}

TEST_CASE("residual estimate is schedule independent and shrinks with N") {
    const MarketSpec mk = preset("single-informed");
    const EquilibriumReport eq = solve(mk, 3000);
    const ResidualEstimate s = clearing_residual(eq, mk, 8, 8, 7, 8, Exec::Serial);
    const ResidualEstimate p = clearing_residual(eq, mk, 8, 8, 7, 8, Exec::Parallel);
    CHECK(s.value == p.value);
    CHECK(s.stderr_ == p.stderr_);
    const ResidualEstimate big = clearing_residual(eq, mk, 128, 128, 7, 8);
    CHECK(big.value < s.value);
}

TEST_CASE("rate study input checks") {
    const MarketSpec mk = preset("deterministic");
    const EquilibriumReport eq = solve(mk, 500, 1.0);
    CHECK_THROWS_AS(rate_study(eq, mk, {8, 16, 32}, {1}), Error);
    CHECK_THROWS_AS(rate_study(eq, mk, {8, 16, 16, 64}, {1}), Error);
    CHECK_THROWS_AS(rate_study(eq, mk, {8, 9, 10, 11}, {1}), Error);
    CHECK_THROWS_AS(rate_study(eq, mk, {1, 8, 16, 32}, {1}), Error);
}

TEST_CASE("clearing csv layout") {
    ClearingReport r;
    r.N_values = {8};
    r.residuals = {0.5};
    r.stderrs = {0.1};
    r.bounds = {2.0};
    r.within = {true};
    std::ostringstream os;
    write_clearing_csv(os, r);
    CHECK(os.str() == "N,residual,stderr,bound\n8,0.5,0.10000000000000001,2\n");
}

TEST_CASE("informed inference identity") {
    const MarketSpec mk = preset("single-informed");
    const ScenarioBatch b = sample_batch(mk.grid, 1, 8000, mk.factor, mk.init_laws());
    FixedPointOptions fo;
    fo.tol = 1e-8;
    const InferenceResult r = informed_inference_check(InformedScenario{10, mk.factor.rho, PenaltyScaling::MeanField}, mk, b, fo);
    CHECK(r.passed);
    CHECK(r.rows.size() == static_cast<size_t>(b.fine_points()));
    const InferenceResult f = informed_inference_check(InformedScenario{10, mk.factor.rho, PenaltyScaling::FiniteMarket}, mk, b, fo);
    CHECK(f.passed);

    const MarketSpec cv = preset("convex");
    const ScenarioBatch cb = sample_batch(cv.grid, 1, 500, cv.factor, cv.init_laws());
    CHECK_THROWS_AS(informed_inference_check(InformedScenario{}, cv, cb, fo), Error);
}

TEST_CASE("adjoints are conditionally independent across agents") {
    const MarketSpec mk = preset("convex");
    const EquilibriumReport eq = solve(mk, 2000);
    const int N_S = 100, reps = 400;
    const int j = mk.grid.fine_steps() / 2;
    // e_a = Y_a - mean of the other agents of the draw, for two fixed agents
    std::vector<double> prod;
    for (int r = 0; r < reps; ++r) {
        const MarketDraw d = simulate_market(eq, mk, 1, N_S, 11, static_cast<uint64_t>(r));
        std::vector<double> ys;
        for (size_t a = 0; a < d.population.size(); ++a)
            if (d.population[a] == 1) ys.push_back(d.Y(a, j));
        REQUIRE(ys.size() == static_cast<size_t>(N_S));
        double rest = 0;
        for (int a = 2; a < N_S; ++a) rest += ys[a];
        rest /= N_S - 2;
        prod.push_back((ys[0] - rest) * (ys[1] - rest));
    }
    double m = 0, q = 0;
    for (double p : prod) {
        m += p;
        q += p * p;
    }
    m /= reps;
    const double se = std::sqrt((q / reps - m * m) / (reps - 1));
    CHECK(se > 0.0);
    CHECK(std::abs(m) <= 5 * se);
}
