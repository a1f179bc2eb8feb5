#include "mfeq/fbsde.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfeq/csv.h"
#include "mfeq/error.h"

namespace mfeq {

const char* to_string(SolveMode m) { return m == SolveMode::AffineDirect ? "affine-direct" : "convex-picard"; }

double DecouplingField::eval(int j, int key, double x, double b, double c) const {
    const int i = plan->spec().interval_of(std::max(j, start));
    const double z[3] = {x, b, c};
    return eval_key(*plan, fits[std::max(j, start)], i, key, z);
}

double FbsdeSolution::sup_abs_Y() const {
    double s = 0.0;
    for (double y : Y.data) s = std::max(s, std::abs(y));
    return s;
}

double optimal_control(double y, double price, double lambda) {
    return -(y + price) / lambda;
}

BasisSpec basis_for(const AgentSpec& agent, int degree) {
    BasisSpec b;
    const bool factors = agent.conditioning == Conditioning::TreeKeyFactors;
    b.use = {agent.cost_mode == CostMode::GeneralConvex, factors, factors};
    b.degree = (b.use[0] || b.use[1] || b.use[2]) ? degree : 0;
    return b;
}

namespace {

const PathArray& own_noise(const ScenarioBatch& batch, Population p) {
    return p == Population::Informed ? batch.w_I : batch.w_S;
}

const std::vector<double>& own_init(const ScenarioBatch& batch, Population p) {
    return p == Population::Informed ? batch.xi_I : batch.xi_S;
}

void check_shapes(const ScenarioBatch& batch, const PathArray& price, const EstimationPlan& plan) {
    if (price.rows != batch.count || price.cols != batch.fine_points())
        fail(ErrorKind::Shape, "price path does not conform to the batch");
    if (plan.count() != batch.count || !(plan.spec() == batch.spec))
        fail(ErrorKind::Shape, "estimation plan does not belong to the batch");
}

Env env_at(const ScenarioBatch& batch, const PathArray& price, size_t s, int j, double x) {
    return Env{batch.fine_grid[j], x, price(s, j), batch.b(s, j), batch.c(s, j)};
}

// Pathwise bracket dg(X_T) + int_t^T dfbar ds by backward trapezoid sums.
void backward_target(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                     const PathArray* X, int start, PathArray& R, Exec exec) {
    const int nf = batch.spec.fine_steps();
    const long long count = static_cast<long long>(batch.count);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (long long ss = 0; ss < count; ++ss) {
        const auto s = static_cast<size_t>(ss);
        auto xat = [&](int j) { return X ? (*X)(s, j) : 0.0; };
        double acc = agent.terminal.dx(env_at(batch, price, s, nf, xat(nf)));
        R(s, nf) = acc;
        double f_next = agent.running.dx(env_at(batch, price, s, nf, xat(nf)));
        for (int j = nf - 1; j >= start; --j) {
            const double f_here = agent.running.dx(env_at(batch, price, s, j, xat(j)));
            acc += 0.5 * (batch.fine_grid[j + 1] - batch.fine_grid[j]) * (f_here + f_next);
            R(s, j) = acc;
            f_next = f_here;
        }
        for (int j = 0; j < start; ++j) R(s, j) = R(s, start);
    }
}

std::shared_ptr<DecouplingField> fit_field(std::shared_ptr<const EstimationPlan> plan, const BasisSpec& basis,
                                           const PathArray& target, const StateColumns& state, int start,
                                           Exec exec, size_t& reduced) {
    auto field = std::make_shared<DecouplingField>();
    field->plan = plan;
    field->basis = basis;
    field->start = start;
    const int nf = plan->spec().fine_steps();
    field->fits.resize(nf + 1);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (int j = start; j <= nf; ++j) field->fits[j] = fit_time(*plan, j, basis, target, state, Exec::Serial);
    size_t red = 0;
    for (int j = start; j <= nf; ++j) {
        for (const auto& f : field->fits[j].keys) red += f.reduced;
        for (const auto& f : field->fits[j].pools) red += f.reduced;
    }
    reduced = red;
    return field;
}

void eval_field(const DecouplingField& field, const StateColumns& state, PathArray& Y, Exec exec) {
    const int nf = field.plan->spec().fine_steps();
    for (int j = field.start; j <= nf; ++j) eval_time(*field.plan, field.fits[j], j, state, Y, exec);
}

// X and alpha given Y already filled from start onwards.
void forward_pass(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent, int start,
                  const double* x0, const DecouplingField* field, PathArray& X, PathArray& Y, PathArray& alpha,
                  Exec exec) {
    const int nf = batch.spec.fine_steps();
    const auto& w = own_noise(batch, agent.population);
    const auto& xi = own_init(batch, agent.population);
    const long long count = static_cast<long long>(batch.count);
    const Buckets* buckets = field ? field->plan->buckets.get() : nullptr;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (long long ss = 0; ss < count; ++ss) {
        const auto s = static_cast<size_t>(ss);
        double x = x0 ? *x0 : xi[s];
        for (int j = 0; j <= start; ++j) X(s, j) = x;
        for (int j = start; j <= nf; ++j) {
            if (field) {
                const int i = batch.spec.interval_of(j);
                Y(s, j) = field->eval(j, buckets->key_id(s, i), x, batch.b(s, j), batch.c(s, j));
            }
            const double p = price(s, j);
            alpha(s, j) = optimal_control(Y(s, j), p, agent.lambda);
            if (j == nf) break;
            const double t = batch.fine_grid[j];
            const double dt = batch.fine_grid[j + 1] - t;
            x += (alpha(s, j) + agent.drift(t, p)) * dt + agent.vol_common(t, p) * (batch.b(s, j + 1) - batch.b(s, j)) +
                 agent.vol_idio(t, p) * (w(s, j + 1) - w(s, j));
            X(s, j + 1) = x;
        }
        for (int j = 0; j < start; ++j) {
            Y(s, j) = Y(s, start);
            alpha(s, j) = alpha(s, start);
        }
    }
}

} // namespace

FbsdeSolution solve_affine(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                           std::shared_ptr<const EstimationPlan> plan, const SolveOptions& opts) {
    if (agent.cost_mode != CostMode::Affine) fail(ErrorKind::Mode, "solve_affine needs an affine agent");
    check_shapes(batch, price, *plan);
    const int nf = batch.spec.fine_steps();
    const int start = opts.start_index;
    if (start < 0 || start > nf) fail(ErrorKind::Input, "start index off the fine grid");

    FbsdeSolution sol;
    sol.population = agent.population;
    sol.mode = SolveMode::AffineDirect;
    sol.X = PathArray(batch.count, nf + 1);
    sol.Y = PathArray(batch.count, nf + 1);
    sol.alpha = PathArray(batch.count, nf + 1);
    sol.target = PathArray(batch.count, nf + 1);

    backward_target(batch, price, agent, nullptr, start, sol.target, opts.exec);
    const StateColumns state{nullptr, &batch.b, &batch.c};
    const BasisSpec basis = basis_for(agent, opts.basis_degree);
    auto field = fit_field(plan, basis, sol.target, state, start, opts.exec, sol.reduced_fits);
    eval_field(*field, state, sol.Y, opts.exec);
    const double* x0 = opts.override_x0 ? &opts.x0 : nullptr;
    forward_pass(batch, price, agent, start, x0, nullptr, sol.X, sol.Y, sol.alpha, opts.exec);
    sol.field = field;
    return sol;
}

FbsdeSolution solve_convex(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                           std::shared_ptr<const EstimationPlan> plan, const SolveOptions& opts) {
    if (agent.cost_mode != CostMode::GeneralConvex) fail(ErrorKind::Mode, "solve_convex needs a convex agent");
    check_shapes(batch, price, *plan);
    const int nf = batch.spec.fine_steps();
    const int start = opts.start_index;
    if (start < 0 || start > nf) fail(ErrorKind::Input, "start index off the fine grid");
    if (!(opts.picard_damping > 0 && opts.picard_damping <= 1)) fail(ErrorKind::Parameter, "Picard damping must lie in (0,1]");

    FbsdeSolution sol;
    sol.population = agent.population;
    sol.mode = SolveMode::ConvexPicard;
    sol.X = PathArray(batch.count, nf + 1);
    sol.Y = PathArray(batch.count, nf + 1);
    sol.alpha = PathArray(batch.count, nf + 1);
    sol.target = PathArray(batch.count, nf + 1);
    PathArray prev(batch.count, nf + 1);
    PathArray blended(batch.count, nf + 1);

    const BasisSpec basis = basis_for(agent, opts.basis_degree);
    const StateColumns state{&sol.X, &batch.b, &batch.c};
    const double* x0 = opts.override_x0 ? &opts.x0 : nullptr;
    const double d = opts.picard_damping;

    std::shared_ptr<const DecouplingField> field;
    if (opts.warm && opts.warm->plan == plan && opts.warm->start == start && opts.warm->basis.degree == basis.degree &&
        opts.warm->basis.use == basis.use)
        field = opts.warm;

    bool converged = false;
    for (int it = 0; it <= opts.picard_max; ++it) {
        forward_pass(batch, price, agent, start, x0, field.get(), sol.X, sol.Y, sol.alpha, opts.exec);
        if (it > 0 || field == opts.warm) {
            if (it > 0) {
                double res = 0.0;
                for (size_t s = 0; s < batch.count; ++s)
                    for (int j = start; j <= nf; ++j) res = std::max(res, std::abs(sol.Y(s, j) - prev(s, j)));
                sol.picard_trace.push_back(res);
                if (res <= opts.picard_tol) {
                    converged = true;
                    break;
                }
            }
        }
        if (it == opts.picard_max) break;
        backward_target(batch, price, agent, &sol.X, start, sol.target, opts.exec);
        if (field) {
            for (size_t k = 0; k < blended.data.size(); ++k)
                blended.data[k] = (1.0 - d) * sol.Y.data[k] + d * sol.target.data[k];
        } else {
            for (size_t k = 0; k < blended.data.size(); ++k) blended.data[k] = d * sol.target.data[k];
        }
        field = fit_field(plan, basis, blended, state, start, opts.exec, sol.reduced_fits);
        prev.data = sol.Y.data;
        sol.picard_iters = it + 1;
    }
    if (!converged) {
        throw TraceError(ErrorKind::Convergence,
                         std::string("convergence error: Picard iteration did not converge for the ") +
                             to_string(agent.population) + " agent",
                         sol.picard_trace);
    }
    sol.residual = sol.picard_trace.empty() ? 0.0 : sol.picard_trace.back();
    backward_target(batch, price, agent, &sol.X, start, sol.target, opts.exec);
    sol.field = field;
    return sol;
}

FbsdeSolution solve_agent(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                          std::shared_ptr<const EstimationPlan> plan, const SolveOptions& opts) {
    if (agent.cost_mode == CostMode::Affine) return solve_affine(batch, price, agent, plan, opts);
    return solve_convex(batch, price, agent, plan, opts);
}

PathArray forward_state(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                        const PathArray& control, int start_index, const double* x0) {
    const int nf = batch.spec.fine_steps();
    if (control.rows != batch.count || control.cols != nf + 1) fail(ErrorKind::Shape, "control array does not conform to the batch");
    PathArray X(batch.count, nf + 1);
    const auto& w = own_noise(batch, agent.population);
    const auto& xi = own_init(batch, agent.population);
    for (size_t s = 0; s < batch.count; ++s) {
        double x = x0 ? *x0 : xi[s];
        for (int j = 0; j <= start_index; ++j) X(s, j) = x;
        for (int j = start_index; j < nf; ++j) {
            const double t = batch.fine_grid[j];
            const double dt = batch.fine_grid[j + 1] - t;
            const double p = price(s, j);
            x += (control(s, j) + agent.drift(t, p)) * dt + agent.vol_common(t, p) * (batch.b(s, j + 1) - batch.b(s, j)) +
                 agent.vol_idio(t, p) * (w(s, j + 1) - w(s, j));
            X(s, j + 1) = x;
        }
    }
    return X;
}

CostEstimate cost_functional(const ScenarioBatch& batch, const PathArray& price, const AgentSpec& agent,
                             const PathArray& control) {
    const int nf = batch.spec.fine_steps();
    if (control.rows != batch.count || control.cols != nf + 1) fail(ErrorKind::Shape, "control array does not conform to the batch");
    if (price.rows != batch.count || price.cols != nf + 1) fail(ErrorKind::Shape, "price path does not conform to the batch");
    const PathArray X = forward_state(batch, price, agent, control);
    CostEstimate est;
    est.per_sample.resize(batch.count);
    for (size_t s = 0; s < batch.count; ++s) {
        double j_s = 0.0;
        double f_prev = agent.running.value(env_at(batch, price, s, 0, X(s, 0)));
        for (int j = 0; j < nf; ++j) {
            const double dt = batch.fine_grid[j + 1] - batch.fine_grid[j];
            const double a = control(s, j);
            const double f_next = agent.running.value(env_at(batch, price, s, j + 1, X(s, j + 1)));
            j_s += dt * (price(s, j) * a + 0.5 * agent.lambda * a * a) + 0.5 * dt * (f_prev + f_next);
            f_prev = f_next;
        }
        j_s += agent.terminal.value(env_at(batch, price, s, nf, X(s, nf)));
        est.per_sample[s] = j_s;
    }
    double sum = 0.0;
    for (double v : est.per_sample) sum += v;
    const double n = static_cast<double>(batch.count);
    est.value = sum / n;
    double ss = 0.0;
    for (double v : est.per_sample) ss += (v - est.value) * (v - est.value);
    est.stderr_ = batch.count > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
    return est;
}

double gamma_constant(double T, double L, double lambda) {
    const double e = std::exp(T);
    const double C = std::max({L * L * (10 * T * T + 2 * T + 10 + 2 * e), 14.0, 10 * T + 2 * e});
    const double c = std::max(1.0, T) * C * std::max(1.0, 1.0 / (2.0 * lambda));
    return std::sqrt(c) / (std::sqrt(1.0 + c) - std::sqrt(c));
}

ProbeResult decoupling_probe(const AgentSpec& agent, const PathArray& price, const ScenarioBatch& batch,
                             std::shared_ptr<const EstimationPlan> plan, double L, int j, double x1, double x2,
                             const SolveOptions& opts) {
    if (x1 == x2) fail(ErrorKind::Input, "decoupling_probe needs x1 != x2");
    if (j < 0 || j > batch.spec.fine_steps()) fail(ErrorKind::Input, "probe time off the fine grid");
    SolveOptions o = opts;
    o.start_index = j;
    o.override_x0 = true;
    o.warm = nullptr;
    o.x0 = x1;
    const FbsdeSolution a = solve_agent(batch, price, agent, plan, o);
    o.x0 = x2;
    const FbsdeSolution b = solve_agent(batch, price, agent, plan, o);
    ProbeResult r;
    for (size_t s = 0; s < batch.count; ++s) r.ratio = std::max(r.ratio, std::abs(a.Y(s, j) - b.Y(s, j)) / std::abs(x1 - x2));
    r.gamma_p = gamma_constant(batch.spec.T, L, agent.lambda);
    r.within = r.ratio <= r.gamma_p;
    return r;
}

void write_solution_csv(std::ostream& os, const FbsdeSolution& sol, const ScenarioBatch& batch, size_t max_samples) {
    os << "sample,t,X,Y,alpha\n";
    const size_t n = std::min(max_samples, batch.count);
    for (size_t s = 0; s < n; ++s)
        for (int j = 0; j < batch.fine_points(); ++j)
            os << s << ',' << fmt_real(batch.fine_grid[j]) << ',' << fmt_real(sol.X(s, j)) << ',' << fmt_real(sol.Y(s, j))
               << ',' << fmt_real(sol.alpha(s, j)) << '\n';
}

} // namespace mfeq
