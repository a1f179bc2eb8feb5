#include "mfeq/model.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfeq/csv.h"
#include "mfeq/error.h"
#include "mfeq/rng.h"

namespace mfeq {

const char* to_string(Population p) { return p == Population::Informed ? "informed" : "standard"; }
const char* to_string(CostMode m) { return m == CostMode::Affine ? "affine" : "convex"; }
const char* to_string(Conditioning c) { return c == Conditioning::TreeKey ? "key" : "key+factors"; }

std::string CoefRef::describe() const {
    std::ostringstream os;
    os << name;
    if (!params.empty()) {
        os << '(';
        bool first = true;
        for (const auto& [k, v] : params) {
            if (!first) os << ',';
            os << k << '=' << fmt_real(v);
            first = false;
        }
        os << ')';
    }
    return os.str();
}

namespace {

using Params = std::map<std::string, double>;

Params resolve(const CoefRef& ref, const Params& defaults) {
    for (const auto& [k, v] : ref.params) {
        if (!defaults.count(k)) fail(ErrorKind::Parameter, "coefficient '" + ref.name + "' has no parameter '" + k + "'");
        if (!std::isfinite(v)) fail(ErrorKind::Parameter, "coefficient '" + ref.name + "' parameter '" + k + "' is not finite");
    }
    Params p = defaults;
    for (const auto& [k, v] : ref.params) p[k] = v;
    return p;
}

double log_cosh(double u) {
    const double a = std::abs(u);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

CostTerm affine(const CoefRef& ref, std::function<double(const Env&)> coef) {
    CostTerm c;
    c.ref = ref;
    c.value = [coef](const Env& e) { return e.x * coef(e); };
    c.dx = std::move(coef);
    return c;
}

} // namespace

std::vector<std::string> scalar_field_names() { return {"zero", "const", "affine_price", "tanh_price"}; }

std::vector<std::string> cost_names() {
    return {"zero", "const", "clamp_b", "tanh_b", "tanh_price", "tanh_c", "tanh_bc", "logcosh", "quadratic"};
}

ScalarField make_scalar_field(const CoefRef& ref) {
    ScalarField s;
    s.ref = ref;
    if (ref.name == "zero") {
        resolve(ref, {});
        s.f = [](double, double) { return 0.0; };
    } else if (ref.name == "const") {
        const auto p = resolve(ref, {{"value", 0.0}});
        const double v = p.at("value");
        s.f = [v](double, double) { return v; };
    } else if (ref.name == "affine_price") {
        const auto p = resolve(ref, {{"a", 0.0}, {"b", 0.0}});
        const double a = p.at("a"), b = p.at("b");
        s.f = [a, b](double, double w) { return a + b * w; };
    } else if (ref.name == "tanh_price") {
        const auto p = resolve(ref, {{"amp", 1.0}, {"scale", 1.0}});
        const double a = p.at("amp"), k = p.at("scale");
        s.f = [a, k](double, double w) { return a * std::tanh(k * w); };
    } else {
        fail(ErrorKind::Parameter, "unknown coefficient field '" + ref.name + "'");
    }
    return s;
}

CostTerm make_cost(const CoefRef& ref) {
    if (ref.name == "zero") {
        resolve(ref, {});
        return affine(ref, [](const Env&) { return 0.0; });
    }
    if (ref.name == "const") {
        const auto p = resolve(ref, {{"value", 0.0}});
        const double v = p.at("value");
        return affine(ref, [v](const Env&) { return v; });
    }
    if (ref.name == "clamp_b") {
        const auto p = resolve(ref, {{"bound", 1.0}, {"scale", 1.0}});
        const double bd = p.at("bound"), k = p.at("scale");
        if (!(bd > 0)) fail(ErrorKind::Parameter, "clamp_b bound must be > 0");
        auto c = affine(ref, [bd, k](const Env& e) { return k * std::clamp(e.b, -bd, bd); });
        c.uses_common = true;
        return c;
    }
    if (ref.name == "tanh_b") {
        const auto p = resolve(ref, {{"amp", 1.0}, {"scale", 1.0}});
        const double a = p.at("amp"), k = p.at("scale");
        auto c = affine(ref, [a, k](const Env& e) { return a * std::tanh(k * e.b); });
        c.uses_common = true;
        return c;
    }
    if (ref.name == "tanh_price") {
        const auto p = resolve(ref, {{"amp", 1.0}, {"scale", 1.0}});
        const double a = p.at("amp"), k = p.at("scale");
        return affine(ref, [a, k](const Env& e) { return a * std::tanh(k * e.price); });
    }
    if (ref.name == "tanh_c") {
        const auto p = resolve(ref, {{"amp", 1.0}, {"scale", 1.0}});
        const double a = p.at("amp"), k = p.at("scale");
        auto c = affine(ref, [a, k](const Env& e) { return a * std::tanh(k * e.c); });
        c.uses_factor = true;
        return c;
    }
    if (ref.name == "tanh_bc") {
        const auto p = resolve(ref, {{"amp", 1.0}, {"wb", 1.0}, {"wc", 1.0}});
        const double a = p.at("amp"), wb = p.at("wb"), wc = p.at("wc");
        auto c = affine(ref, [a, wb, wc](const Env& e) { return a * std::tanh(wb * e.b + wc * e.c); });
        c.uses_common = wb != 0.0;
        c.uses_factor = wc != 0.0;
        return c;
    }
    if (ref.name == "logcosh") {
        const auto p = resolve(ref, {{"scale", 1.0}, {"shift", 0.0}});
        const double k = p.at("scale"), s = p.at("shift");
        CostTerm c;
        c.ref = ref;
        c.value = [k, s](const Env& e) { return k * log_cosh(e.x - s); };
        c.dx = [k, s](const Env& e) { return k * std::tanh(e.x - s); };
        c.depends_on_x = true;
        return c;
    }
    if (ref.name == "quadratic") {
        const auto p = resolve(ref, {{"a", 1.0}});
        const double a = p.at("a");
        CostTerm c;
        c.ref = ref;
        c.value = [a](const Env& e) { return a * e.x * e.x; };
        c.dx = [a](const Env& e) { return 2.0 * a * e.x; };
        c.depends_on_x = true;
        return c;
    }
    fail(ErrorKind::Parameter, "unknown cost '" + ref.name + "'");
}

AgentSpec make_agent(Population pop, double lambda, double weight, const CoefRef& drift,
                     const CoefRef& vol_common, const CoefRef& vol_idio, CostMode mode,
                     const CoefRef& running, const CoefRef& terminal, Conditioning cond) {
    AgentSpec a;
    a.population = pop;
    a.lambda = lambda;
    a.weight = weight;
    a.drift = make_scalar_field(drift);
    a.vol_common = make_scalar_field(vol_common);
    a.vol_idio = make_scalar_field(vol_idio);
    a.cost_mode = mode;
    a.running = make_cost(running);
    a.terminal = make_cost(terminal);
    a.conditioning = cond;
    return a;
}

void MarketSpec::validate() const {
    grid.validate();
    factor.validate();
    if (!(bounds.L > 0)) fail(ErrorKind::Parameter, "L must be > 0");
    if (std::abs(bounds.T - grid.T) > 0) fail(ErrorKind::Parameter, "bounds T must equal grid T");
    for (const AgentSpec* a : {&informed, &standard}) {
        if (!(a->lambda > 0) || !std::isfinite(a->lambda))
            fail(ErrorKind::Parameter, std::string(to_string(a->population)) + " lambda must be > 0");
        if (!(a->weight > 0 && a->weight < 1))
            fail(ErrorKind::Parameter, std::string(to_string(a->population)) + " weight must lie in (0,1)");
        a->init.validate();
    }
    if (informed.population != Population::Informed || standard.population != Population::Standard)
        fail(ErrorKind::Parameter, "population labels swapped");
    if (std::abs(informed.weight + standard.weight - 1.0) > 1e-12)
        fail(ErrorKind::Parameter, "weights must satisfy n_I + n_S = 1");
    if (standard.uses_factor()) fail(ErrorKind::Parameter, "standard costs cannot depend on the informed factor");
    if (standard.conditioning != Conditioning::TreeKey)
        fail(ErrorKind::Parameter, "standard agents condition on the tree key only");
    if (samples < 1) fail(ErrorKind::Parameter, "samples must be >= 1");
}

std::vector<std::string> preset_names() {
    return {"zero", "deterministic", "terminal-common-noise", "single-informed", "convex"};
}

namespace {

CoefRef cref(std::string name, Params p = {}) { return CoefRef{std::move(name), std::move(p)}; }

} // namespace

MarketSpec preset(const std::string& name) {
    MarketSpec m;
    m.name = name;
    m.grid = GridSpec{2, 1, 8, 1.0};
    m.bounds = ModelBounds{1.0, 1.0};
    const CoefRef zero = cref("zero");
    const CoefRef vc = cref("const", {{"value", 0.3}});
    const CoefRef vi = cref("const", {{"value", 0.7}});

    if (name == "zero") {
        m.informed = make_agent(Population::Informed, 1.0, 0.5, zero, vc, vi, CostMode::Affine, zero, zero,
                                Conditioning::TreeKeyFactors);
        m.standard = make_agent(Population::Standard, 1.0, 0.5, zero, vc, vi, CostMode::Affine, zero, zero,
                                Conditioning::TreeKey);
        m.samples = 2000;
        m.tol = 1e-12;
    } else if (name == "deterministic") {
        const CoefRef c0 = cref("const", {{"value", 0.5}});
        const CoefRef g0 = cref("const", {{"value", 0.8}});
        m.informed = make_agent(Population::Informed, 2.0, 0.3, zero, vc, vi, CostMode::Affine, c0, g0,
                                Conditioning::TreeKeyFactors);
        m.standard = make_agent(Population::Standard, 1.0, 0.7, zero, vc, vi, CostMode::Affine, c0, g0,
                                Conditioning::TreeKey);
        m.samples = 4000;
        m.tol = 1e-12;
    } else if (name == "terminal-common-noise") {
        m.bounds.L = 4.0;
        const CoefRef g = cref("clamp_b", {{"bound", 4.0}});
        m.informed = make_agent(Population::Informed, 1.0, 0.5, zero, vc, vi, CostMode::Affine, zero, g,
                                Conditioning::TreeKeyFactors);
        m.standard = make_agent(Population::Standard, 1.0, 0.5, zero, vc, vi, CostMode::Affine, zero, g,
                                Conditioning::TreeKey);
        m.samples = 100000;
        m.tol = 1e-3;
    } else if (name == "single-informed") {
        m.informed = make_agent(Population::Informed, 0.5, 0.5, zero, vc, vi, CostMode::Affine,
                                cref("tanh_b", {{"amp", 0.5}}), cref("tanh_b", {{"amp", 1.0}}),
                                Conditioning::TreeKey);
        m.standard = make_agent(Population::Standard, 1.0, 0.5, zero, vc, vi, CostMode::Affine, zero,
                                cref("tanh_price", {{"amp", 0.5}}), Conditioning::TreeKey);
        m.samples = 40000;
        m.tol = 1e-9;
    } else if (name == "convex") {
        m.grid = GridSpec{1, 1, 16, 1.0};
        const CoefRef none = cref("zero");
        const CoefRef one = cref("const", {{"value", 1.0}});
        m.informed = make_agent(Population::Informed, 1.0, 0.5, zero, none, one, CostMode::GeneralConvex,
                                cref("logcosh", {{"scale", 0.5}}), cref("logcosh", {{"shift", 1.0}}),
                                Conditioning::TreeKeyFactors);
        m.standard = make_agent(Population::Standard, 1.0, 0.5, zero, none, one, CostMode::GeneralConvex,
                                cref("logcosh", {{"scale", 0.5}}), cref("logcosh", {{"shift", -0.5}}),
                                Conditioning::TreeKey);
        m.informed.init = InitLaw{InitLaw::Kind::Gaussian, 0.0, 0.5};
        m.standard.init = InitLaw{InitLaw::Kind::Gaussian, 0.0, 0.5};
        m.samples = 20000;
        m.tol = 1e-4;
    } else {
        fail(ErrorKind::Parameter, "unknown preset '" + name + "'");
    }
    m.validate();
    return m;
}

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed; });
}

const ValidationCheck* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

namespace {

std::string where(const Env& e) {
    std::ostringstream os;
    os.precision(6);
    os << "t=" << e.t << " x=" << e.x << " price=" << e.price << " b=" << e.b << " c=" << e.c;
    return os.str();
}

struct Tracker {
    ValidationCheck check;
    double worst_excess = -1e300;

    Tracker(std::string name, double limit) {
        check.name = std::move(name);
        check.limit = limit;
        check.worst = 0.0;
    }

    // records value against a pointwise limit
    void observe(double value, double limit, const Env& e) {
        const double excess = value - limit;
        if (excess > worst_excess) {
            worst_excess = excess;
            check.worst = value;
            check.limit = limit;
            check.where = where(e);
        }
        if (excess > 0) check.passed = false;
    }
};

double finite_or_throw(double v, const char* what, const Env& e) {
    if (!std::isfinite(v)) fail(ErrorKind::Model, std::string("non-finite ") + what + " at " + where(e));
    return v;
}

} // namespace

ValidationReport validate(const AgentSpec& agent, const ModelBounds& bounds, size_t probe_budget,
                          const ValidationBox& box, uint64_t seed) {
    if (probe_budget < 1) fail(ErrorKind::Parameter, "probe budget must be >= 1");
    const double L = bounds.L;
    const double pbox = box.price > 0 ? box.price : bounds.C_B();
    ValidationReport rep;
    rep.agent = to_string(agent.population);

    Tracker growth("coefficient_growth", L);
    Tracker run_bound("running_dx_bound", L);
    Tracker term_bound("terminal_dx_bound", L);
    Tracker run_lip("running_dx_lipschitz", L);
    Tracker term_lip("terminal_dx_lipschitz", L);
    Tracker run_cvx("running_convexity", 0.0);
    Tracker term_cvx("terminal_convexity", 0.0);
    Tracker fd("dx_finite_difference", 1e-6);
    Tracker affine_x("affine_x_independence", 0.0);

    CounterStream rs(seed, 0, StreamTag::Probe);
    auto unif = [&](double lo, double hi) { return lo + (hi - lo) * rs.uniform(); };

    for (size_t k = 0; k < probe_budget; ++k) {
        Env e{unif(0.0, bounds.T), unif(-box.x, box.x), unif(-pbox, pbox), unif(-box.b, box.b), unif(-box.c, box.c)};
        Env e2 = e;
        e2.x = unif(-box.x, box.x);
        Env eT = e;
        eT.t = bounds.T;
        Env eT2 = e2;
        eT2.t = bounds.T;

        const double lv = finite_or_throw(agent.drift(e.t, e.price), "drift", e);
        const double s0 = finite_or_throw(agent.vol_common(e.t, e.price), "common volatility", e);
        const double s1 = finite_or_throw(agent.vol_idio(e.t, e.price), "idiosyncratic volatility", e);
        growth.observe(std::abs(lv) + std::abs(s0) + std::abs(s1), L * (1.0 + std::abs(e.price)), e);

        const double dfr = finite_or_throw(agent.running.dx(e), "running d/dx", e);
        const double dfr2 = finite_or_throw(agent.running.dx(e2), "running d/dx", e2);
        const double dgt = finite_or_throw(agent.terminal.dx(eT), "terminal d/dx", eT);
        const double dgt2 = finite_or_throw(agent.terminal.dx(eT2), "terminal d/dx", eT2);
        run_bound.observe(std::abs(dfr), L, e);
        term_bound.observe(std::abs(dgt), L, eT);

        const double dx = std::abs(e.x - e2.x);
        if (dx > 1e-9) {
            run_lip.observe(std::abs(dfr - dfr2) / dx, L, e);
            term_lip.observe(std::abs(dgt - dgt2) / dx, L, eT);
        }
        if (agent.cost_mode == CostMode::Affine) {
            affine_x.observe(std::max(std::abs(dfr - dfr2), std::abs(dgt - dgt2)), 0.0, e);
        }

        const double h = 1e-3 * (1.0 + std::abs(e.x));
        auto second = [&](const CostTerm& c, Env at) {
            const double x0 = at.x;
            at.x = x0 + h;
            const double up = c.value(at);
            at.x = x0 - h;
            const double dn = c.value(at);
            at.x = x0;
            const double mid = c.value(at);
            const double scale = std::abs(up) + std::abs(dn) + 2.0 * std::abs(mid);
            return std::pair{up - 2.0 * mid + dn, 1e-12 * (1.0 + scale)};
        };
        auto [sr, tr] = second(agent.running, e);
        run_cvx.observe(-sr, tr, e);
        auto [st, tt] = second(agent.terminal, eT);
        term_cvx.observe(-st, tt, eT);

        const double hf = 1e-5 * std::max(1.0, std::abs(e.x));
        auto central = [&](const CostTerm& c, Env at) {
            const double x0 = at.x;
            at.x = x0 + hf;
            const double up = finite_or_throw(c.value(at), "cost value", at);
            at.x = x0 - hf;
            const double dn = finite_or_throw(c.value(at), "cost value", at);
            return (up - dn) / (2.0 * hf);
        };
        const double gap_r = std::abs(central(agent.running, e) - dfr) / std::max(1.0, std::abs(dfr));
        const double gap_t = std::abs(central(agent.terminal, eT) - dgt) / std::max(1.0, std::abs(dgt));
        fd.observe(gap_r, 1e-6, e);
        fd.observe(gap_t, 1e-6, eT);
        rep.fd_max_relative_gap = std::max({rep.fd_max_relative_gap, gap_r, gap_t});
    }
    for (Tracker* t : {&growth, &run_bound, &term_bound, &run_lip, &term_lip, &run_cvx, &term_cvx, &fd})
        rep.checks.push_back(t->check);
    if (agent.cost_mode == CostMode::Affine) rep.checks.push_back(affine_x.check);
    return rep;
}

} // namespace mfeq
