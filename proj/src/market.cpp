#include "mfeq/market.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mfeq/csv.h"
#include "mfeq/error.h"
#include "mfeq/rng.h"

namespace mfeq {

namespace {

// market agents draw from sub-stream 1, batches from sub-stream 0
constexpr uint32_t kMarketSub = 1;

uint64_t agent_index(uint64_t replication, uint32_t id) { return (replication << 32) | id; }

int resolve_bucket(const Buckets& buckets, int i, const TreeKey& key) {
    const int k = buckets.find(i, key);
    return k >= 0 ? k : nearest_key(buckets.intervals[i].keys, key);
}

} // namespace

MarketDraw simulate_market(const EquilibriumReport& eq, const MarketSpec& market, int N_I, int N_S, uint64_t seed,
                           uint64_t replication, const std::vector<uint32_t>& labels) {
    if (N_I < 1 || N_S < 1) fail(ErrorKind::Input, "market needs at least one agent per population");
    if (replication >= (uint64_t{1} << 24)) fail(ErrorKind::Input, "replication index too large");
    const int N = N_I + N_S;
    std::vector<uint32_t> order(N);
    if (labels.empty()) {
        std::iota(order.begin(), order.end(), 0u);
    } else {
        if (static_cast<int>(labels.size()) != N) fail(ErrorKind::Input, "labels must list every agent once");
        order = labels;
        std::vector<uint32_t> chk = labels;
        std::sort(chk.begin(), chk.end());
        for (int a = 0; a < N; ++a)
            if (chk[a] != static_cast<uint32_t>(a)) fail(ErrorKind::Input, "labels must be a permutation of 0..N-1");
    }
    const GridSpec& spec = eq.price.spec;
    if (!(spec == market.grid)) fail(ErrorKind::Shape, "price grid differs from the market grid");
    const Buckets& buckets = *eq.ws.buckets;
    const int nf = spec.fine_steps();
    const int m = spec.m;
    std::vector<double> grid(nf + 1);
    for (int j = 0; j <= nf; ++j) grid[j] = spec.fine_time(j);

    // common noise and factor
    std::vector<double> b(nf + 1), perp(nf + 1), c(nf + 1);
    brownian_row(CounterStream(seed, replication, StreamTag::Common, kMarketSub), grid, b.data());
    brownian_row(CounterStream(seed, replication, StreamTag::Orthogonal, kMarketSub), grid, perp.data());
    const auto& fac = market.factor;
    const double rr = fac.rho;
    const double fa = fac.convention == FactorConvention::Rho ? rr : rr * rr;
    const double fq = std::sqrt(std::max(0.0, 1.0 - rr * rr));
    for (int j = 0; j <= nf; ++j) {
        c[j] = fq == 0.0 ? fa * b[j] : fa * b[j] + fq * perp[j];
        if (fac.kind == FactorKind::Custom) c[j] = fac.transform(grid[j], c[j]);
    }

    const int Nt = spec.intervals();
    std::vector<double> nodes(std::max(0, Nt - 1));
    for (int i = 0; i + 1 < Nt; ++i) nodes[i] = b[(i + 1) * m];
    const auto vpath = project_path_indices(nodes.data(), Nt - 1, spec.l);
    const Lattice lat(spec.l);
    std::vector<int> bkey(Nt), pkey(Nt);
    for (int i = 0; i < Nt; ++i) {
        const TreeKey key = make_key(buckets.mode, i, vpath.data(), lat);
        bkey[i] = resolve_bucket(buckets, i, key);
        pkey[i] = eq.price.resolve(i, key);
    }

    const auto& fI = *eq.final_phi.informed.field;
    const auto& fS = *eq.final_phi.standard.field;
    std::vector<double> price(nf + 1);
    const bool v1 = market.informed.uses_factor() && market.informed.cost_mode == CostMode::Affine &&
                    market.standard.cost_mode == CostMode::Affine;
    const double wI = market.informed.weight * market.informed.lambda_bar();
    const double wS = market.standard.weight * market.standard.lambda_bar();
    for (int j = 0; j <= nf; ++j) {
        const int i = spec.interval_of(j);
        if (v1) {
            // projected consistency: the informed adjoint enters through its (B, C) regression
            const double yI = fI.eval(j, bkey[i], 0.0, b[j], c[j]);
            const double yS = fS.eval(j, bkey[i], 0.0, b[j], c[j]);
            price[j] = -(wI * yI + wS * yS) / (wI + wS);
        } else {
            price[j] = eq.price.at(i, pkey[i])[j - i * m];
        }
    }

    MarketDraw d;
    d.N_I = N_I;
    d.N_S = N_S;
    d.Y = PathArray(N, nf + 1);
    d.alpha = PathArray(N, nf + 1);
    d.population.resize(N);
    for (int a = 0; a < N; ++a) {
        const uint32_t id = order[a];
        const bool informed = static_cast<int>(id) < N_I;
        const AgentSpec& ag = informed ? market.informed : market.standard;
        const DecouplingField& field = informed ? fI : fS;
        const uint64_t idx = agent_index(replication, id);
        std::vector<double> w(nf + 1);
        brownian_row(CounterStream(seed, idx, informed ? StreamTag::IdioInformed : StreamTag::IdioStandard, kMarketSub),
                     grid, w.data());
        CounterStream ri(seed, idx, informed ? StreamTag::InitInformed : StreamTag::InitStandard, kMarketSub);
        double x = draw_init(ag.init, ri);
        double* Y = d.Y.row(id);
        double* al = d.alpha.row(id);
        d.population[id] = informed ? 0 : 1;
        for (int j = 0; j <= nf; ++j) {
            const int i = spec.interval_of(j);
            Y[j] = field.eval(j, bkey[i], x, b[j], c[j]);
            al[j] = optimal_control(Y[j], price[j], ag.lambda);
            if (j == nf) break;
            const double t = grid[j];
            const double dt = grid[j + 1] - t;
            x += (al[j] + ag.drift(t, price[j])) * dt + ag.vol_common(t, price[j]) * (b[j + 1] - b[j]) +
                 ag.vol_idio(t, price[j]) * (w[j + 1] - w[j]);
        }
    }

    d.aggregate.assign(nf + 1, 0.0);
    for (int j = 0; j <= nf; ++j) {
        double sI = 0.0, sS = 0.0;
        for (int id = 0; id < N; ++id) (id < N_I ? sI : sS) += d.alpha(id, j);
        d.aggregate[j] = market.informed.weight * (sI / N_I) + market.standard.weight * (sS / N_S);
    }
    for (int j = 0; j < nf; ++j)
        d.residual += 0.5 * (grid[j + 1] - grid[j]) * (d.aggregate[j] * d.aggregate[j] + d.aggregate[j + 1] * d.aggregate[j + 1]);
    return d;
}

namespace {

ResidualEstimate summarize(const std::vector<double>& v) {
    ResidualEstimate e;
    e.draws = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    e.value = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - e.value) * (x - e.value);
    e.stderr_ = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
    return e;
}

std::pair<int, int> split(const MarketSpec& market, int N) {
    int NI = static_cast<int>(std::lround(market.informed.weight * N));
    NI = std::clamp(NI, 1, N - 1);
    return {NI, N - NI};
}

std::vector<double> draws(const EquilibriumReport& eq, const MarketSpec& market, int N_I, int N_S,
                          const std::vector<uint64_t>& seeds, int replications, Exec exec) {
    const int total = static_cast<int>(seeds.size()) * replications;
    std::vector<double> out(total);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (int t = 0; t < total; ++t)
        out[t] = simulate_market(eq, market, N_I, N_S, seeds[t / replications], static_cast<uint64_t>(t % replications)).residual;
    return out;
}

} // namespace

ResidualEstimate clearing_residual(const EquilibriumReport& eq, const MarketSpec& market, int N_I, int N_S,
                                   uint64_t seed, int replications, Exec exec) {
    if (replications < 1) fail(ErrorKind::Parameter, "replications must be >= 1");
    return summarize(draws(eq, market, N_I, N_S, {seed}, replications, exec));
}

double clearing_bound(const MarketSpec& market, int N) {
    const double CB = market.bounds.C_B();
    const double lI = market.informed.lambda_bar(), lS = market.standard.lambda_bar();
    return 8.0 * market.bounds.T * CB * CB * (lI * lI + lS * lS) / N;
}

bool ClearingReport::bound_ok() const {
    return std::all_of(within.begin(), within.end(), [](bool b) { return b; });
}

ClearingReport rate_study(const EquilibriumReport& eq, const MarketSpec& market, const std::vector<int>& N_values,
                          const std::vector<uint64_t>& seeds, int replications, Exec exec) {
    if (N_values.size() < 4) fail(ErrorKind::Config, "clearing study needs at least 4 values of N for a slope");
    for (size_t k = 0; k < N_values.size(); ++k) {
        if (N_values[k] < 2) fail(ErrorKind::Config, "every N must be >= 2");
        if (k > 0 && N_values[k] <= N_values[k - 1]) fail(ErrorKind::Config, "N values must be strictly increasing");
    }
    if (N_values.back() < 4 * N_values.front()) fail(ErrorKind::Config, "N values must span at least two octaves");
    if (seeds.empty()) fail(ErrorKind::Config, "clearing study needs at least one seed");
    if (replications < 1) fail(ErrorKind::Parameter, "replications must be >= 1");

    ClearingReport r;
    r.N_values = N_values;
    r.seeds = static_cast<int>(seeds.size());
    r.replications = replications;
    for (int N : N_values) {
        const auto [NI, NS] = split(market, N);
        const ResidualEstimate e = summarize(draws(eq, market, NI, NS, seeds, replications, exec));
        r.residuals.push_back(e.value);
        r.stderrs.push_back(e.stderr_);
        r.bounds.push_back(clearing_bound(market, N));
        r.within.push_back(e.value <= r.bounds.back() + 3.0 * e.stderr_);
    }
    const bool all_zero = std::all_of(r.residuals.begin(), r.residuals.end(), [](double v) { return v == 0.0; });
    if (all_zero) {
        r.exact = true;
        r.slope = std::nan("");
        r.slope_stderr = std::nan("");
        return r;
    }
    if (std::any_of(r.residuals.begin(), r.residuals.end(), [](double v) { return !(v > 0.0); }))
        fail(ErrorKind::Estimation, "degenerate regression: some residuals are zero");
    const size_t K = N_values.size();
    double mx = 0.0, my = 0.0;
    std::vector<double> x(K), y(K);
    for (size_t k = 0; k < K; ++k) {
        x[k] = std::log(static_cast<double>(N_values[k]));
        y[k] = std::log(r.residuals[k]);
        mx += x[k];
        my += y[k];
    }
    mx /= K;
    my /= K;
    double sxx = 0.0, sxy = 0.0;
    for (size_t k = 0; k < K; ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    r.slope = sxy / sxx;
    double sse = 0.0;
    for (size_t k = 0; k < K; ++k) {
        const double e = y[k] - my - r.slope * (x[k] - mx);
        sse += e * e;
    }
    r.slope_stderr = std::sqrt(sse / static_cast<double>(K - 2) / sxx);
    return r;
}

void write_clearing_csv(std::ostream& os, const ClearingReport& r) {
    os << "N,residual,stderr,bound\n";
    for (size_t k = 0; k < r.N_values.size(); ++k)
        os << r.N_values[k] << ',' << fmt_real(r.residuals[k]) << ',' << fmt_real(r.stderrs[k]) << ','
           << fmt_real(r.bounds[k]) << '\n';
}

InferenceResult informed_inference_check(const InformedScenario& scenario, const MarketSpec& market,
                                         const ScenarioBatch& batch, const FixedPointOptions& opts) {
    if (market.informed.uses_factor())
        fail(ErrorKind::Precondition, "informed costs must not depend on the factor C");
    if (market.informed.cost_mode != CostMode::Affine || market.standard.cost_mode != CostMode::Affine)
        fail(ErrorKind::Precondition, "the inference identity needs affine costs");
    if (scenario.N_S < 1) fail(ErrorKind::Parameter, "N_S must be >= 1");

    MarketSpec mk = market;
    mk.informed.weight = 0.5;
    mk.standard.weight = 0.5;
    mk.informed.conditioning = Conditioning::TreeKey;

    InferenceResult res;
    res.eq = solve_fixed_point(batch, mk, opts);
    const EquilibriumReport& eq = res.eq;
    const double kappa = scenario.scaling == PenaltyScaling::FiniteMarket ? scenario.N_S : 1.0;

    AgentSpec inf = mk.informed;
    inf.lambda = mk.informed.lambda / kappa;
    const PathArray path = price_path(eq.price, *eq.ws.buckets);
    SolveOptions so = opts.phi.solve;
    so.exec = opts.phi.exec;
    const FbsdeSolution direct = solve_agent(batch, path, inf, eq.ws.plan, so);

    const FbsdeSolution& std_sol = eq.final_phi.standard;
    const GridSpec& spec = batch.spec;
    const int nf = spec.fine_steps();
    const double lS = mk.standard.lambda_bar();
    // the identity is exact at theta = Phi(theta); carry the measured defect
    const double defect = kappa * (mk.informed.lambda_bar() + lS) * price_metric(eq.price, eq.final_phi.price);
    const BasisSpec flat;
    const StateColumns none;
    const double z0[3] = {0, 0, 0};
    const EstimationPlan& plan = *eq.ws.plan;
    res.rows.resize(nf + 1);
    std::vector<double> worst(nf + 1, 0.0), thr(nf + 1, 0.0), excess(nf + 1, -1e300);
#pragma omp parallel for schedule(dynamic) if (opts.phi.exec == Exec::Parallel)
    for (int j = 0; j <= nf; ++j) {
        const int i = spec.interval_of(j);
        // conditional mean of Y^S read off its target, as the price is
        const TimeFits fr = fit_at(plan, i, j, flat, std_sol.target, none, Exec::Serial);
        const int nk = static_cast<int>(plan.buckets->intervals[i].keys.size());
        std::vector<double> ey(nk), se(nk);
        for (int k = 0; k < nk; ++k) {
            ey[k] = eval_key(plan, fr, i, k, z0);
            se[k] = key_se(plan, fr, i, k);
        }
        InferenceRow row;
        row.t = batch.fine_grid[j];
        for (size_t s = 0; s < batch.count; ++s) {
            const int k = plan.buckets->key_id(s, i);
            const double bd = direct.alpha(s, j);
            const double bi = kappa * lS * (path(s, j) + ey[k]);
            const double g = std::abs(bd - bi);
            const double th = 3.0 * kappa * lS * se[k] + defect + 1e-12;
            row.beta_direct += bd;
            row.beta_inferred += bi;
            row.gap = std::max(row.gap, g);
            if (g - th > excess[j]) {
                excess[j] = g - th;
                worst[j] = g;
                thr[j] = th;
            }
        }
        row.beta_direct /= static_cast<double>(batch.count);
        row.beta_inferred /= static_cast<double>(batch.count);
        res.rows[j] = row;
    }
    double worst_excess = -1e300;
    for (int j = 0; j <= nf; ++j) {
        if (res.rows[j].gap > res.max_gap) res.max_gap = res.rows[j].gap;
        if (excess[j] > worst_excess) {
            worst_excess = excess[j];
            res.threshold_at_max = thr[j];
        }
    }
    res.passed = worst_excess <= 0.0;
    return res;
}

void write_inference_csv(std::ostream& os, const InferenceResult& r) {
    os << "t,beta_direct,beta_inferred,gap\n";
    for (const auto& row : r.rows)
        os << fmt_real(row.t) << ',' << fmt_real(row.beta_direct) << ',' << fmt_real(row.beta_inferred) << ','
           << fmt_real(row.gap) << '\n';
}

} // namespace mfeq
