// Acceptance run: one PASS/FAIL line per criterion, exit code 1 on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mfeq/csv.h"
#include "mfeq/equilibrium.h"
#include "mfeq/error.h"
#include "mfeq/fbsde.h"
#include "mfeq/market.h"
#include "mfeq/model.h"
#include "mfeq/noise_tree.h"
#include "mfeq/paths.h"
#include "mfeq/rng.h"

using namespace mfeq;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += std::string(ok ? "" : "[x] ") + what;
    }
};

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

struct Solved {
    MarketSpec market;
    FixedPointOptions opts;
    ScenarioBatch batch;
    EquilibriumReport rep;
    double seconds = 0.0;
};

FixedPointOptions preset_options(const MarketSpec& mk) {
    FixedPointOptions fo;
    fo.tol = mk.tol;
    // the deterministic image does not depend on the input price
    fo.damping = mk.name == "deterministic" ? 1.0 : 0.5;
    return fo;
}

Solved solve_preset(const std::string& name, uint64_t seed = 1) {
    Solved s;
    const auto t0 = Clock::now();
    s.market = preset(name);
    s.opts = preset_options(s.market);
    s.batch = sample_batch(s.market.grid, seed, s.market.samples, s.market.factor, s.market.init_laws());
    s.rep = solve_fixed_point(s.batch, s.market, s.opts);
    s.seconds = seconds_since(t0);
    return s;
}

std::map<std::string, Solved> g_solved;

const Solved& solved(const std::string& name) {
    auto it = g_solved.find(name);
    if (it == g_solved.end()) it = g_solved.emplace(name, solve_preset(name)).first;
    return it->second;
}

const std::vector<std::string> kPresets{"zero", "deterministic", "terminal-common-noise", "single-informed", "convex"};

Outcome crit_trivial() {
    Outcome o;
    const Solved& s = solved("zero");
    const double res = s.rep.residual_trace.empty() ? -1.0 : s.rep.residual_trace.back();
    o.require(s.rep.iterations == 1, "iterations " + std::to_string(s.rep.iterations));
    o.require(res == 0.0, "residual " + num(res));
    o.require(s.rep.price.sup_abs() == 0.0, "sup|price| " + num(s.rep.price.sup_abs()));
    o.require(s.seconds < 1.0, "runtime " + num(s.seconds) + " s");
    return o;
}

Outcome crit_deterministic() {
    Outcome o;
    const auto t0 = Clock::now();
    const Solved& s = solved("deterministic");
    const MarketSpec& mk = s.market;
    // both populations share c0 and g0
    const double c0 = mk.standard.running.ref.params.at("value");
    const double g0 = mk.standard.terminal.ref.params.at("value");
    const GridSpec& g = mk.grid;
    double worst = 0.0;
    for (int i = 0; i < g.intervals(); ++i)
        for (size_t k = 0; k < s.rep.price.keys[i].size(); ++k)
            for (int q = 0; q <= g.m; ++q) {
                const double t = g.fine_time(i * g.m + q);
                worst = std::max(worst, std::abs(s.rep.price.at(i, static_cast<int>(k))[q] + g0 + c0 * (g.T - t)));
            }
    o.require(worst <= 1e-10, "max |price + g0 + c0(T-t)| " + num(worst));
    std::vector<uint64_t> seeds;
    for (int k = 0; k < 10; ++k) seeds.push_back(1001 + k);
    const ClearingReport cr = rate_study(s.rep, mk, {8, 16, 32, 64, 128, 256, 512}, seeds);
    const double rmax = *std::max_element(cr.residuals.begin(), cr.residuals.end());
    o.require(cr.exact && rmax == 0.0, "max clearing residual " + num(rmax));
    const double secs = s.seconds + seconds_since(t0);
    o.require(secs < 5.0, "runtime " + num(secs) + " s");
    return o;
}

Outcome crit_tracking() {
    Outcome o;
    const Solved& s = solved("terminal-common-noise");
    const MarketSpec& mk = s.market;
    o.require(mk.grid.n == 2 && mk.grid.l == 1 && mk.mode == KeyMode::FullPrefix && mk.samples == 100000,
              "preset shape n=2 l=1 prefix 1e5");
    const double res = s.rep.residual_trace.back();
    o.require(s.rep.converged && res <= mk.tol, "converged residual " + num(res));
    const Lattice lat(mk.grid.l);
    const EstimationPlan& plan = *s.rep.ws.plan;
    double worst_excess = -1e300;
    std::string where;
    size_t checked = 0;
    for (int i = 0; i < mk.grid.intervals(); ++i)
        for (size_t k = 0; k < s.rep.price.keys[i].size(); ++k) {
            if (!plan.intervals[i].keys[k].direct) continue;
            const int kk = static_cast<int>(k);
            const double V = lat.value(s.rep.price.keys[i][k].last(lat));
            const double gap = std::abs(s.rep.price.at(i, kk)[0] + V);
            const double bound = i * lat.step() + 3 * s.rep.final_phi.se.at(i, kk)[0];
            ++checked;
            if (gap - bound > worst_excess) {
                worst_excess = gap - bound;
                where = s.rep.price.keys[i][k].label(lat) + " gap " + num(gap) + " bound " + num(bound);
            }
        }
    o.require(worst_excess <= 0.0, std::to_string(checked) + " keys, worst " + where);
    o.require(s.seconds < 120.0, "runtime " + num(s.seconds) + " s");
    return o;
}

Outcome crit_bounded() {
    Outcome o;
    for (const auto& name : kPresets) {
        const Solved& s = solved(name);
        const double C_B = s.market.bounds.C_B();
        double sp = s.rep.initial_sup_price, sy = 0.0;
        for (const auto& it : s.rep.iterates) {
            sp = std::max(sp, it.sup_price);
            sy = std::max({sy, it.sup_Y_I, it.sup_Y_S});
        }
        sy = std::max({sy, s.rep.final_phi.sup_Y_I, s.rep.final_phi.sup_Y_S});
        o.require(sp <= C_B && sy <= C_B, name + " price " + num(sp) + " Y " + num(sy) + " C_B " + num(C_B));
    }
    return o;
}

Outcome crit_time_lipschitz() {
    Outcome o;
    for (const auto& name : kPresets) {
        const Diagnostics& d = solved(name).rep.diag;
        o.require(d.time_lipschitz_ok, name + " " + num(d.time_lipschitz_max) + " <= " +
                                           num(2 * d.L + d.time_lipschitz_slack));
    }
    return o;
}

Outcome crit_cond_variation() {
    Outcome o;
    for (const auto& name : kPresets) {
        const Diagnostics& d = solved(name).rep.diag;
        o.require(d.cv_price_ok() && d.cv_Y_ok(), name + " V(price) " + num(d.cv_price.value) + " V(Y) " +
                                                      num(std::max(d.cv_Y_I.value, d.cv_Y_S.value)));
    }
    return o;
}

ProbeResult probe(const Solved& s, Population pop, size_t samples) {
    const MarketSpec& mk = s.market;
    const ScenarioBatch pb = sample_batch(mk.grid, 77, samples, mk.factor, mk.init_laws());
    const Workspace ws = make_workspace(pb, mk.mode, s.opts.min_count);
    const PathArray pp = price_path(s.rep.price, *ws.buckets);
    return decoupling_probe(mk.agent(pop), pp, pb, ws.plan, mk.bounds.L, 0, 0.0, 1.0);
}

Outcome crit_decoupling() {
    Outcome o;
    const Solved& s = solved("convex");
    const MarketSpec& mk = s.market;
    o.require(mk.bounds.L == 1.0 && mk.bounds.T == 1.0 && mk.informed.lambda == 1.0 && mk.standard.lambda == 1.0,
              "L=T=Lambda=1");
    for (Population p : {Population::Informed, Population::Standard}) {
        const ProbeResult r = probe(s, p, 1000);
        o.require(r.ratio <= r.gamma_p, std::string(to_string(p)) + " " + num(r.ratio) + " <= " + num(r.gamma_p));
    }
    for (const char* name : {"deterministic", "single-informed"})
        for (Population p : {Population::Informed, Population::Standard}) {
            const ProbeResult r = probe(solved(name), p, 1000);
            o.require(r.ratio == 0.0, std::string(name) + " " + to_string(p) + " ratio " + num(r.ratio));
        }
    return o;
}

Outcome crit_clearing() {
    Outcome o;
    const auto t0 = Clock::now();
    const Solved& s = solved("convex");
    std::vector<uint64_t> seeds;
    for (int k = 0; k < 10; ++k) seeds.push_back(1001 + k);
    const ClearingReport cr = rate_study(s.rep, s.market, {8, 16, 32, 64, 128, 256, 512}, seeds);
    for (size_t k = 0; k < cr.N_values.size(); ++k)
        o.require(cr.within[k], "N=" + std::to_string(cr.N_values[k]) + " " + num(cr.residuals[k]) + " <= " +
                                    num(cr.bounds[k] + 3 * cr.stderrs[k]));
    o.require(cr.slope_in(-1.25, -0.75), "slope " + num(cr.slope));
    const double secs = s.seconds + seconds_since(t0);
    o.require(secs < 600.0, "runtime " + num(secs) + " s");
    return o;
}

Outcome crit_inference() {
    Outcome o;
    const MarketSpec mk = preset("single-informed");
    FixedPointOptions fo = preset_options(mk);
    const ScenarioBatch batch = sample_batch(mk.grid, 1, mk.samples, mk.factor, mk.init_laws());
    for (PenaltyScaling sc : {PenaltyScaling::MeanField, PenaltyScaling::FiniteMarket}) {
        InformedScenario scen{10, mk.factor.rho, sc};
        const InferenceResult r = informed_inference_check(scen, mk, batch, fo);
        o.require(r.passed, std::string(sc == PenaltyScaling::MeanField ? "mean-field" : "finite-market") +
                                " max gap " + num(r.max_gap) + " threshold " + num(r.threshold_at_max));
    }
    return o;
}

Outcome crit_refinement() {
    Outcome o;
    const MarketSpec mk = preset("terminal-common-noise");
    const std::vector<int> levels{1, 2, 3};
    const int l_per_n = 2;
    GridSpec fine = mk.grid;
    fine.n = 3;
    fine.l = l_per_n * 3;
    FixedPointOptions fo = preset_options(mk);
    int good = 0;
    std::string meds;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        const ScenarioBatch batch = sample_batch(fine, seed, 20000, mk.factor, mk.init_laws());
        const RefinementResult r = refinement_study(mk, levels, batch, l_per_n, KeyMode::Markov, fo);
        good += r.decreasing() ? 1 : 0;
        meds += " [" + num(r.median_dm[0]) + "," + num(r.median_dm[1]) + "]";
    }
    o.require(good >= 4, std::to_string(good) + " of 5 seeds decreasing;" + meds);
    return o;
}

// kernel rows against Monte Carlo counts
void oracle_kernel(Outcome& o) {
    const GridSpec spec{2, 1, 8, 1.0};
    const TransitionKernel K = transition_matrix(spec);
    const Lattice lat(spec.l);
    const size_t draws = 1000000;
    const double sd = std::sqrt(spec.interval_length());
    double worst = 0.0;
    int cells = 0;
    for (int from : {lat.zero_index(), 1, lat.size() - 2}) {
        CounterStream rs(2024, static_cast<uint64_t>(from), StreamTag::Probe);
        std::vector<size_t> hits(lat.size(), 0);
        for (size_t d = 0; d < draws; ++d) hits[project_index(lat.value(from) + sd * rs.normal(), spec.l)]++;
        for (int to = 0; to < lat.size(); ++to) {
            const double p = K(from, to);
            if (p * draws < 100) continue;
            const double sigma = std::sqrt(p * (1 - p) / draws);
            worst = std::max(worst, std::abs(hits[to] / double(draws) - p) / sigma);
            ++cells;
        }
    }
    o.require(worst <= 3.0, "kernel " + std::to_string(cells) + " cells, worst z " + num(worst));
}

// f = x c0, g = x g0 run through the Picard solver on a noisy batch and a
// key-dependent price must reproduce the affine adjoint
void oracle_convex_affine(Outcome& o) {
    MarketSpec mk = preset("deterministic");
    const AgentSpec aff = mk.informed;
    AgentSpec cvx = aff;
    cvx.cost_mode = CostMode::GeneralConvex;
    const ScenarioBatch batch = sample_batch(mk.grid, 5, 20000, mk.factor, mk.init_laws());
    const Workspace ws = make_workspace(batch, mk.mode, 30);
    DiscretePrice price = make_price(*ws.buckets, 0.0);
    for (auto& row : price.values)
        for (size_t q = 0; q < row.size(); ++q) row[q] = 0.25 * std::sin(0.7 * double(q) + 0.3);
    const PathArray pp = price_path(price, *ws.buckets);
    SolveOptions so;
    so.picard_tol = 1e-14;
    const FbsdeSolution a = solve_affine(batch, pp, aff, ws.plan);
    const FbsdeSolution c = solve_convex(batch, pp, cvx, ws.plan, so);
    const EstimationPlan& plan = *ws.plan;
    const GridSpec& g = mk.grid;
    double worst = 0.0;
    for (int j = 0; j < batch.fine_points(); ++j) {
        const int i = g.interval_of(j);
        const size_t nk = plan.intervals[i].keys.size();
        std::vector<double> ss(nk, 0.0);
        std::vector<size_t> cnt(nk, 0);
        for (size_t s = 0; s < batch.count; ++s) {
            const int k = ws.buckets->key_id(s, i);
            const double d = c.Y(s, j) - a.Y(s, j);
            ss[k] += d * d;
            cnt[k]++;
        }
        for (size_t k = 0; k < nk; ++k) {
            if (cnt[k] == 0) continue;
            const double se = key_se(plan, c.field->fits[j], i, static_cast<int>(k));
            const double rms = std::sqrt(ss[k] / cnt[k]);
            worst = std::max(worst, rms - 3.0 * se);
        }
    }
    o.require(worst <= 1e-12, "convex vs affine worst rms - 3 se " + num(worst) + " (Picard " +
                                  std::to_string(c.picard_iters) + " sweeps)");
}

void oracle_finite_difference(Outcome& o) {
    double gap = 0.0;
    for (const auto& name : kPresets) {
        const MarketSpec mk = preset(name);
        for (Population p : {Population::Informed, Population::Standard})
            gap = std::max(gap, validate(mk.agent(p), mk.bounds, 2000).fd_max_relative_gap);
    }
    o.require(gap <= 1e-6, "dx vs finite difference " + num(gap));
}

// J(alpha + eps eta) >= J(alpha) - 3 sigma over adapted bounded eta
void oracle_perturbation(Outcome& o) {
    const Solved& s = solved("convex");
    const MarketSpec& mk = s.market;
    const ScenarioBatch& b = s.batch;
    const PathArray pp = price_path(s.rep.price, *s.rep.ws.buckets);
    const Lattice lat(mk.grid.l);
    const double eps = 0.1;
    int bad = 0;
    double worst = 1e300;
    for (Population pop : {Population::Informed, Population::Standard}) {
        const AgentSpec& ag = mk.agent(pop);
        const FbsdeSolution& sol = pop == Population::Informed ? s.rep.final_phi.informed : s.rep.final_phi.standard;
        const PathArray& w = pop == Population::Informed ? b.w_I : b.w_S;
        const CostEstimate base = cost_functional(b, pp, ag, sol.alpha);
        CounterStream rs(99, static_cast<uint64_t>(pop), StreamTag::Perturb);
        for (int trial = 0; trial < 20; ++trial) {
            const double a1 = 2 * rs.uniform() - 1, a2 = 2 * rs.uniform() - 1, a3 = 2 * rs.uniform() - 1;
            const double om = 6.0 * rs.uniform();
            PathArray ctl = sol.alpha;
            for (size_t r = 0; r < b.count; ++r) {
                const int* nodes = b.node_path.row(r);
                for (int j = 0; j < b.fine_points(); ++j) {
                    const double V = lat.value(nodes[mk.grid.interval_of(j)]);
                    ctl(r, j) += eps * (a1 * std::cos(om * b.fine_grid[j]) + a2 * std::tanh(V) + a3 * std::tanh(w(r, j)));
                }
            }
            const CostEstimate pert = cost_functional(b, pp, ag, ctl);
            double m = 0.0, q = 0.0;
            for (size_t r = 0; r < b.count; ++r) {
                const double d = pert.per_sample[r] - base.per_sample[r];
                m += d;
                q += d * d;
            }
            const double n = static_cast<double>(b.count);
            m /= n;
            const double se = std::sqrt(std::max(0.0, q / n - m * m) / (n - 1));
            const double z = se > 0 ? m / se : (m >= 0 ? 0.0 : -1e300);
            worst = std::min(worst, z);
            if (m < -3 * se) ++bad;
        }
    }
    o.require(bad == 0, "perturbation 40 trials, min (J(a+eps h)-J(a))/se " + num(worst));
}

Outcome crit_oracles() {
    Outcome o;
    oracle_kernel(o);
    oracle_convex_affine(o);
    oracle_finite_difference(o);
    oracle_perturbation(o);
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"01 trivial equilibrium", crit_trivial},
        {"02 deterministic closed form", crit_deterministic},
        {"03 common-noise tracking", crit_tracking},
        {"04 boundedness", crit_bounded},
        {"05 time lipschitz", crit_time_lipschitz},
        {"06 conditional variation", crit_cond_variation},
        {"07 decoupling lipschitz", crit_decoupling},
        {"08 clearing rate", crit_clearing},
        {"09 informed inference", crit_inference},
        {"10 refinement", crit_refinement},
        {"11 oracle equivalences", crit_oracles},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
