#include "mfeq/equilibrium.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfeq/csv.h"
#include "mfeq/error.h"

namespace mfeq {

Workspace make_workspace(const ScenarioBatch& batch, KeyMode mode, int min_count, Exec exec) {
    if (min_count < 1) fail(ErrorKind::Parameter, "minimum bucket count must be >= 1");
    Workspace ws;
    ws.buckets = std::make_shared<const Buckets>(bucket_samples(batch.node_path, batch.spec, mode, exec));
    ws.plan = make_plan(ws.buckets, min_count);
    return ws;
}

namespace {

FbsdeSolution solve_tagged(const ScenarioBatch& batch, const PathArray& path, const AgentSpec& agent,
                           const Workspace& ws, const SolveOptions& so) {
    const std::string tag = std::string(to_string(agent.population)) + " agent: ";
    try {
        return solve_agent(batch, path, agent, ws.plan, so);
    } catch (const TraceError& e) {
        throw TraceError(e.kind(), tag + e.what(), e.trace());
    } catch (const Error& e) {
        throw Error(e.kind(), tag + e.what());
    }
}

} // namespace

PhiResult apply_phi(const DiscretePrice& theta, const ScenarioBatch& batch, const MarketSpec& market,
                    const Workspace& ws, const PhiOptions& opts, std::shared_ptr<const DecouplingField> warm_I,
                    std::shared_ptr<const DecouplingField> warm_S) {
    const PathArray path = price_path(theta, *ws.buckets);
    PhiResult r;
    SolveOptions so = opts.solve;
    so.exec = opts.exec;
    so.warm = warm_I;
    r.informed = solve_tagged(batch, path, market.informed, ws, so);
    so.warm = warm_S;
    r.standard = solve_tagged(batch, path, market.standard, ws, so);
    r.sup_Y_I = r.informed.sup_abs_Y();
    r.sup_Y_S = r.standard.sup_abs_Y();

    // E[Y^p | key] = E[target^p | key] since the key is coarser than each
    // agent's information; bucket means of the targets also give the left
    // limit at the interval end
    const double wI = market.informed.weight * market.informed.lambda_bar();
    const double wS = market.standard.weight * market.standard.lambda_bar();
    const double W = wI + wS;
    PathArray R(batch.count, batch.fine_points());
    for (size_t k = 0; k < R.data.size(); ++k) {
        const double rI = r.informed.target.data[k], rS = r.standard.target.data[k];
        R.data[k] = rI == rS ? rI : (wI * rI + wS * rS) / W;
    }

    const GridSpec& spec = batch.spec;
    const int m = spec.m;
    r.price = make_price(*ws.buckets);
    r.se = make_price(*ws.buckets);
    const BasisSpec flat;
    const StateColumns none;
    const double z0[3] = {0, 0, 0};
    const int pairs = spec.intervals() * (m + 1);
#pragma omp parallel for schedule(dynamic) if (opts.exec == Exec::Parallel)
    for (int t = 0; t < pairs; ++t) {
        const int i = t / (m + 1);
        const int q = t % (m + 1);
        const TimeFits fr = fit_at(*ws.plan, i, i * m + q, flat, R, none, Exec::Serial);
        const int nk = static_cast<int>(r.price.keys[i].size());
        for (int k = 0; k < nk; ++k) {
            r.price.at(i, k)[q] = -eval_key(*ws.plan, fr, i, k, z0);
            r.se.at(i, k)[q] = key_se(*ws.plan, fr, i, k);
        }
    }
    return r;
}

ConditionalVariation conditional_variation(const PathArray& process, const EstimationPlan& plan,
                                           const BasisSpec& basis, const StateColumns& state, Exec exec) {
    const GridSpec& spec = plan.spec();
    const int nf = spec.fine_steps();
    if (process.rows != plan.count() || process.cols != nf + 1) fail(ErrorKind::Shape, "process does not conform to the plan");
    PathArray D(process.rows, process.cols);
    for (size_t s = 0; s < process.rows; ++s)
        for (int j = 0; j < nf; ++j) D(s, j) = process(s, j + 1) - process(s, j);
    std::vector<double> val(nf, 0.0), se(nf, 0.0);
    const double M = static_cast<double>(plan.count());
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (int j = 0; j < nf; ++j) {
        const int i = j / spec.m;
        const TimeFits f = fit_at(plan, i, j, basis, D, state, Exec::Serial);
        const auto& ib = plan.buckets->intervals[i];
        double v = 0.0;
        for (size_t s = 0; s < plan.count(); ++s) {
            double z[3];
            state.load(s, j, z);
            v += std::abs(eval_key(plan, f, i, plan.buckets->key_id(s, i), z));
        }
        double e = 0.0;
        for (size_t k = 0; k < ib.keys.size(); ++k)
            e += static_cast<double>(ib.members[k].size()) / M * key_se(plan, f, i, static_cast<int>(k));
        val[j] = v / M;
        se[j] = e;
    }
    ConditionalVariation cv;
    for (int j = 0; j < nf; ++j) {
        cv.value += val[j];
        cv.se += se[j];
    }
    return cv;
}

Diagnostics diagnostics(const DiscretePrice& price, const PhiResult& phi, const ScenarioBatch& batch,
                        const MarketSpec& market, const Workspace& ws, Exec exec) {
    Diagnostics d;
    d.L = market.bounds.L;
    d.T = market.bounds.T;
    d.C_B = market.bounds.C_B();
    d.sup_price = price.sup_abs();
    d.sup_Y_I = phi.sup_Y_I;
    d.sup_Y_S = phi.sup_Y_S;

    // divided differences of the Phi image; the standard error of each is
    // that of the bucket mean of the pathwise increment over dt
    const GridSpec& spec = batch.spec;
    const double dt = spec.fine_dt();
    const double wI = market.informed.weight * market.informed.lambda_bar();
    const double wS = market.standard.weight * market.standard.lambda_bar();
    PathArray D(batch.count, batch.fine_points());
    for (size_t s = 0; s < batch.count; ++s)
        for (int j = 0; j < spec.fine_steps(); ++j) {
            const double a = wI * phi.informed.target(s, j + 1) + wS * phi.standard.target(s, j + 1);
            const double b = wI * phi.informed.target(s, j) + wS * phi.standard.target(s, j);
            D(s, j) = (a - b) / (wI + wS) / dt;
        }
    const BasisSpec flat;
    const StateColumns none;
    double worst_excess = -1e300;
    for (int i = 0; i < spec.intervals(); ++i) {
        for (int q = 0; q < spec.m; ++q) {
            const TimeFits f = fit_at(*ws.plan, i, i * spec.m + q, flat, D, none, exec);
            for (size_t k = 0; k < phi.price.keys[i].size(); ++k) {
                const double* v = phi.price.at(i, static_cast<int>(k));
                const double lip = std::abs(v[q + 1] - v[q]) / dt;
                const double slack = 10.0 * key_se(*ws.plan, f, i, static_cast<int>(k));
                d.time_lipschitz_max = std::max(d.time_lipschitz_max, lip);
                const double excess = lip - (2 * d.L + slack);
                if (excess > worst_excess) {
                    worst_excess = excess;
                    d.time_lipschitz_slack = slack;
                }
            }
        }
    }
    d.time_lipschitz_ok = worst_excess <= 0.0;

    const PathArray path = price_path(price, *ws.buckets);
    d.cv_price = conditional_variation(path, *ws.plan, flat, none, exec);
    const StateColumns sI{&phi.informed.X, &batch.b, &batch.c};
    const StateColumns sS{&phi.standard.X, &batch.b, &batch.c};
    const int deg = 2;
    d.cv_Y_I = conditional_variation(phi.informed.Y, *ws.plan, basis_for(market.informed, deg), sI, exec);
    d.cv_Y_S = conditional_variation(phi.standard.Y, *ws.plan, basis_for(market.standard, deg), sS, exec);
    return d;
}

EquilibriumReport solve_fixed_point(const ScenarioBatch& batch, const MarketSpec& market, const FixedPointOptions& opts) {
    if (!(opts.damping > 0 && opts.damping <= 1)) fail(ErrorKind::Parameter, "damping must lie in (0,1]");
    if (!(opts.tol > 0)) fail(ErrorKind::Parameter, "tol must be > 0");
    if (opts.max_iter < 1) fail(ErrorKind::Parameter, "max_iter must be >= 1");
    if (!(market.grid == batch.spec)) fail(ErrorKind::Shape, "batch grid differs from the market grid");

    EquilibriumReport rep;
    const Exec exec = opts.phi.exec;
    rep.ws = make_workspace(batch, market.mode, opts.min_count, exec);
    if (market.mode == KeyMode::Markov)
        rep.warnings.push_back("Markov keys condition on the current node only; prefix conditioning is approximated");
    else if (batch.spec.n > 2)
        rep.warnings.push_back("prefix keys with n > 2 grow geometrically; Markov mode is advised");
    if (rep.ws.plan->fallback_keys > 0)
        rep.warnings.push_back(std::to_string(rep.ws.plan->fallback_keys) + " keys below the minimum bucket count use the fallback estimator (" +
                               std::to_string(rep.ws.plan->pooled_keys) + " pooled)");

    DiscretePrice theta = opts.init ? *opts.init : make_price(*rep.ws.buckets);
    if (opts.init) {
        if (!(theta.spec == batch.spec) || theta.mode != market.mode || theta.keys != make_price(*rep.ws.buckets).keys)
            fail(ErrorKind::Shape, "initial price does not match the batch keys");
    }
    rep.initial_sup_price = theta.sup_abs();
    const double C_B = market.bounds.C_B();
    std::shared_ptr<const DecouplingField> wI, wS;
    for (int k = 1; k <= opts.max_iter; ++k) {
        PhiResult phi = apply_phi(theta, batch, market, rep.ws, opts.phi, wI, wS);
        wI = phi.informed.field;
        wS = phi.standard.field;
        DiscretePrice next = blend(theta, phi.price, opts.damping);
        const double res = price_metric(next, theta);
        rep.residual_trace.push_back(res);
        rep.iterates.push_back({res, next.sup_abs(), phi.sup_Y_I, phi.sup_Y_S});
        theta = std::move(next);
        rep.iterations = k;
        if (res <= opts.tol) {
            rep.converged = true;
            break;
        }
        if (res > 10.0 * C_B)
            throw TraceError(ErrorKind::Divergence, "divergence error: fixed-point residual " + fmt_real(res) + " exceeds 10 C_B",
                             rep.residual_trace);
    }
    if (!rep.converged) rep.warnings.push_back("fixed point not reached within max_iter");
    rep.price = theta;
    rep.final_phi = apply_phi(theta, batch, market, rep.ws, opts.phi, wI, wS);
    rep.diag = diagnostics(rep.price, rep.final_phi, batch, market, rep.ws, exec);
    return rep;
}

ConsistencyResult consistency_residual(const EquilibriumReport& report, const MarketSpec& market, uint64_t fresh_seed,
                                       size_t samples, const FixedPointOptions& opts) {
    const Exec exec = opts.phi.exec;
    const ScenarioBatch fresh = sample_batch(report.price.spec, fresh_seed, samples, market.factor, market.init_laws(), exec);
    const Workspace ws = make_workspace(fresh, market.mode, opts.min_count, exec);
    const PhiResult phi = apply_phi(report.price, fresh, market, ws, opts.phi);
    ConsistencyResult c;
    c.tol = opts.tol;
    const GridSpec& spec = report.price.spec;
    c.residual.assign(spec.intervals(), 0.0);
    c.slack.assign(spec.intervals(), 0.0);
    for (int i = 0; i < spec.intervals(); ++i) {
        double worst_excess = -1e300;
        for (size_t k2 = 0; k2 < phi.price.keys[i].size(); ++k2) {
            const int k1 = report.ws.buckets->find(i, phi.price.keys[i][k2]);
            if (k1 < 0 || !report.ws.plan->intervals[i].keys[k1].direct || !ws.plan->intervals[i].keys[k2].direct) {
                ++c.skipped;
                continue;
            }
            const double* a = phi.price.at(i, static_cast<int>(k2));
            const double* ea = phi.se.at(i, static_cast<int>(k2));
            const double* b = report.price.at(i, k1);
            const double* eb = report.final_phi.se.at(i, k1);
            for (int q = 0; q <= spec.m; ++q) {
                const double r = std::abs(a[q] - b[q]);
                const double slack = 3.0 * std::hypot(ea[q], eb[q]);
                c.residual[i] = std::max(c.residual[i], r);
                if (r - slack > worst_excess) {
                    worst_excess = r - slack;
                    c.slack[i] = slack;
                }
            }
        }
        if (worst_excess > opts.tol) c.passed = false;
    }
    return c;
}

double mz_distance(const double* x, const double* y, const std::vector<double>& grid) {
    double acc = 0.0;
    for (size_t j = 0; j + 1 < grid.size(); ++j) {
        const double a = std::min(1.0, std::abs(x[j] - y[j]));
        const double b = std::min(1.0, std::abs(x[j + 1] - y[j + 1]));
        acc += 0.5 * (grid[j + 1] - grid[j]) * (a + b);
    }
    return acc;
}

double mz_distance(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& grid) {
    if (x.size() != grid.size() || y.size() != grid.size()) fail(ErrorKind::Shape, "trajectories must share the grid");
    return mz_distance(x.data(), y.data(), grid);
}

bool RefinementResult::decreasing() const {
    for (size_t k = 1; k < median_dm.size(); ++k)
        if (!(median_dm[k] < median_dm[k - 1])) return false;
    return true;
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + h, v.end());
    const double hi = v[h];
    if (v.size() % 2) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + h));
}

} // namespace

RefinementResult refinement_study(const MarketSpec& market, const std::vector<int>& levels,
                                  const ScenarioBatch& fine_batch, int l_per_n, KeyMode mode,
                                  const FixedPointOptions& opts) {
    if (levels.empty()) fail(ErrorKind::Input, "refinement needs at least one level");
    for (size_t k = 1; k < levels.size(); ++k)
        if (levels[k] <= levels[k - 1]) fail(ErrorKind::Input, "refinement levels must be strictly ascending");
    if (l_per_n < 0) fail(ErrorKind::Parameter, "l_per_n must be >= 0");
    RefinementResult out;
    std::vector<PathArray> paths;
    for (int n : levels) {
        const int l = std::min(12, l_per_n * n);
        const ScenarioBatch view = view_at_level(fine_batch, n, l);
        MarketSpec mk = market;
        mk.grid = view.spec;
        mk.mode = mode;
        const EquilibriumReport rep = solve_fixed_point(view, mk, opts);
        out.levels.push_back({n, l, rep.iterations, rep.converged, rep.diag});
        paths.push_back(price_path(rep.price, *rep.ws.buckets));
    }
    for (size_t k = 1; k < paths.size(); ++k) {
        std::vector<double> dm(fine_batch.count);
        for (size_t s = 0; s < fine_batch.count; ++s)
            dm[s] = mz_distance(paths[k - 1].row(s), paths[k].row(s), fine_batch.fine_grid);
        double sum = 0.0;
        for (double v : dm) sum += v;
        out.mean_dm.push_back(sum / static_cast<double>(dm.size()));
        out.median_dm.push_back(median(std::move(dm)));
    }
    return out;
}

std::vector<double> continuity_probe(const DiscretePrice& theta, const ScenarioBatch& batch, const MarketSpec& market,
                                     const Workspace& ws, const std::vector<double>& eps, const PhiOptions& opts) {
    const PhiResult base = apply_phi(theta, batch, market, ws, opts);
    std::vector<double> out;
    for (double e : eps) {
        DiscretePrice p = theta;
        for (auto& v : p.values)
            for (size_t k = 0; k < v.size(); ++k) v[k] += e * std::sin(1.0 + 0.7 * static_cast<double>(k));
        out.push_back(price_metric(apply_phi(p, batch, market, ws, opts).price, base.price));
    }
    return out;
}

void write_report(std::ostream& os, const EquilibriumReport& r, const MarketSpec& market, const FixedPointOptions& opts) {
    const Diagnostics& d = r.diag;
    os << "preset = " << market.name << '\n'
       << "mode = " << to_string(market.mode) << '\n'
       << "grid = n " << market.grid.n << ", l " << market.grid.l << ", m " << market.grid.m << ", T "
       << fmt_real(market.grid.T) << '\n'
       << "damping = " << fmt_real(opts.damping) << '\n'
       << "tol = " << fmt_real(opts.tol) << '\n'
       << "max_iter = " << opts.max_iter << '\n'
       << "min_bucket = " << opts.min_count << '\n'
       << "converged = " << (r.converged ? "true" : "false") << '\n'
       << "iterations = " << r.iterations << '\n'
       << "residual_trace =";
    for (double v : r.residual_trace) os << ' ' << fmt_real(v);
    os << '\n'
       << "C_B = " << fmt_real(d.C_B) << '\n'
       << "sup_price = " << fmt_real(d.sup_price) << '\n'
       << "sup_Y_I = " << fmt_real(d.sup_Y_I) << '\n'
       << "sup_Y_S = " << fmt_real(d.sup_Y_S) << '\n'
       << "bounded = " << (d.bounded() ? "true" : "false") << '\n'
       << "time_lipschitz_max = " << fmt_real(d.time_lipschitz_max) << '\n'
       << "time_lipschitz_limit = 2L + " << fmt_real(d.time_lipschitz_slack) << " = "
       << fmt_real(2 * d.L + d.time_lipschitz_slack) << '\n'
       << "time_lipschitz_ok = " << (d.time_lipschitz_ok ? "true" : "false") << '\n'
       << "cond_variation_price = " << fmt_real(d.cv_price.value) << " (se " << fmt_real(d.cv_price.se)
       << ", limit 2LT = " << fmt_real(2 * d.L * d.T) << ")\n"
       << "cond_variation_Y_I = " << fmt_real(d.cv_Y_I.value) << " (se " << fmt_real(d.cv_Y_I.se)
       << ", limit TL = " << fmt_real(d.L * d.T) << ")\n"
       << "cond_variation_Y_S = " << fmt_real(d.cv_Y_S.value) << " (se " << fmt_real(d.cv_Y_S.se)
       << ", limit TL = " << fmt_real(d.L * d.T) << ")\n"
       << "cond_variation_ok = " << (d.cv_price_ok() && d.cv_Y_ok() ? "true" : "false") << '\n';
    for (const auto& w : r.warnings) os << "warning = " << w << '\n';
}

} // namespace mfeq
