#include "doctest.h"

#include <cmath>

#include "mfeq/error.h"
#include "mfeq/model.h"

using namespace mfeq;

namespace {

CoefRef ref(const std::string& name, std::map<std::string, double> p = {}) { return CoefRef{name, std::move(p)}; }

AgentSpec agent_with(CostMode mode, const CoefRef& running, const CoefRef& terminal) {
    return make_agent(Population::Standard, 1.0, 0.5, ref("zero"), ref("const", {{"value", 0.3}}),
                      ref("const", {{"value", 0.7}}), mode, running, terminal, Conditioning::TreeKey);
}

} // namespace

TEST_CASE("catalogue values and derivatives") {
    Env e{0.5, 0.8, -0.4, 1.3, -0.2};
    const CostTerm cb = make_cost(ref("clamp_b", {{"bound", 1.0}}));
    CHECK(cb.dx(e) == 1.0);
    CHECK(cb.value(e) == doctest::Approx(0.8));
    CHECK(cb.uses_common);
    CHECK_FALSE(cb.depends_on_x);

    const CostTerm tb = make_cost(ref("tanh_b", {{"amp", 0.5}}));
    CHECK(tb.dx(e) == doctest::Approx(0.5 * std::tanh(1.3)));

    const CostTerm tc = make_cost(ref("tanh_c"));
    CHECK(tc.uses_factor);
    CHECK(tc.dx(e) == doctest::Approx(std::tanh(-0.2)));

    const CostTerm lc = make_cost(ref("logcosh", {{"scale", 0.5}, {"shift", 1.0}}));
    CHECK(lc.value(e) == doctest::Approx(0.5 * std::log(std::cosh(-0.2))));
    CHECK(lc.dx(e) == doctest::Approx(0.5 * std::tanh(-0.2)));
    CHECK(lc.depends_on_x);

    const ScalarField tp = make_scalar_field(ref("tanh_price", {{"amp", 2.0}}));
    CHECK(tp(0.0, 0.3) == doctest::Approx(2.0 * std::tanh(0.3)));
    const ScalarField ap = make_scalar_field(ref("affine_price", {{"a", 1.0}, {"b", -2.0}}));
    CHECK(ap(0.0, 0.25) == doctest::Approx(0.5));
}

TEST_CASE("unknown names and parameters are rejected") {
    CHECK_THROWS_AS(make_cost(ref("cubic")), Error);
    CHECK_THROWS_AS(make_cost(ref("tanh_b", {{"ampp", 1.0}})), Error);
    CHECK_THROWS_AS(make_scalar_field(ref("sin")), Error);
    CHECK_THROWS_AS(make_cost(ref("clamp_b", {{"bound", 0.0}})), Error);
}

TEST_CASE("presets are valid and pass the assumption checks") {
    for (const auto& name : preset_names()) {
        CAPTURE(name);
        const MarketSpec m = preset(name);
        CHECK_NOTHROW(m.validate());
        for (Population p : {Population::Informed, Population::Standard}) {
            const ValidationReport r = validate(m.agent(p), m.bounds, 2000);
            for (const auto& c : r.checks) {
                CAPTURE(c.name);
                CHECK(c.passed);
            }
            CHECK(r.fd_max_relative_gap <= 1e-6);
        }
    }
    CHECK_THROWS_AS(preset("nope"), Error);
}

TEST_CASE("assumption violations are reported") {
    // dx = 2x exceeds L on the probe box
    const ValidationReport q = validate(agent_with(CostMode::GeneralConvex, ref("quadratic"), ref("zero")),
                                        ModelBounds{1.0, 1.0}, 500);
    CHECK_FALSE(q.passed());
    CHECK_FALSE(q.find("running_dx_bound")->passed);
    CHECK(q.find("running_dx_bound")->worst > 1.0);

    const ValidationReport c = validate(agent_with(CostMode::GeneralConvex, ref("zero"), ref("logcosh", {{"scale", -0.5}})),
                                        ModelBounds{1.0, 1.0}, 500);
    CHECK_FALSE(c.find("terminal_convexity")->passed);

    const ValidationReport a = validate(agent_with(CostMode::Affine, ref("logcosh", {{"scale", 0.5}}), ref("zero")),
                                        ModelBounds{1.0, 1.0}, 500);
    CHECK_FALSE(a.find("affine_x_independence")->passed);

    CHECK_THROWS_AS(validate(agent_with(CostMode::Affine, ref("zero"), ref("zero")), ModelBounds{}, 0), Error);
}

TEST_CASE("market invariants") {
    MarketSpec m = preset("single-informed");
    m.standard.weight = 0.6;
    CHECK_THROWS_AS(m.validate(), Error);
    m = preset("single-informed");
    m.standard.running = make_cost(ref("tanh_c"));
    CHECK_THROWS_AS(m.validate(), Error);
    m = preset("single-informed");
    m.informed.lambda = 0.0;
    CHECK_THROWS_AS(m.validate(), Error);
    const ModelBounds b{2.0, 3.0};
    CHECK(b.C_B() == 8.0);
}
