#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "mfeq/error.h"
#include "mfeq/paths.h"

using namespace mfeq;

namespace {

InitLaws laws() {
    return {InitLaw{InitLaw::Kind::Gaussian, 1.0, 0.5}, InitLaw{InitLaw::Kind::Uniform, -1.0, 3.0}};
}

} // namespace

TEST_CASE("serial and parallel batches are bit-identical") {
    const GridSpec g{2, 1, 4, 1.0};
    const InformedFactorSpec f;
    const ScenarioBatch a = sample_batch(g, 11, 500, f, laws(), Exec::Serial);
    const ScenarioBatch b = sample_batch(g, 11, 500, f, laws(), Exec::Parallel);
    CHECK(a.b.data == b.b.data);
    CHECK(a.c.data == b.c.data);
    CHECK(a.w_I.data == b.w_I.data);
    CHECK(a.w_S.data == b.w_S.data);
    CHECK(a.xi_I == b.xi_I);
    CHECK(a.xi_S == b.xi_S);
    CHECK(a.node_path.idx == b.node_path.idx);
    const ScenarioBatch c = sample_batch(g, 12, 500, f, laws());
    CHECK(a.b.data != c.b.data);
}

TEST_CASE("path moments and factor conventions") {
    const GridSpec g{1, 1, 4, 2.0};
    const size_t n = 40000;
    for (FactorConvention conv : {FactorConvention::Rho, FactorConvention::RhoSquared}) {
        InformedFactorSpec f;
        f.rho = 0.6;
        f.convention = conv;
        const ScenarioBatch b = sample_batch(g, 5, n, f, laws());
        const int J = b.fine_points() - 1;
        double bb = 0, bc = 0, cc = 0;
        for (size_t s = 0; s < n; ++s) {
            CHECK(b.b(s, 0) == 0.0);
            bb += b.b(s, J) * b.b(s, J);
            bc += b.b(s, J) * b.c(s, J);
            cc += b.c(s, J) * b.c(s, J);
        }
        bb /= n;
        bc /= n;
        cc /= n;
        const double a = conv == FactorConvention::Rho ? 0.6 : 0.36;
        const double tol = 5 * 2.0 * std::sqrt(2.0 / n);
        CHECK(std::abs(bb - 2.0) < tol);
        CHECK(std::abs(bc - 2.0 * a) < tol);
        CHECK(std::abs(cc - 2.0 * (a * a + 1 - 0.36)) < tol);
    }
}

TEST_CASE("initial laws") {
    const GridSpec g{1, 1, 2, 1.0};
    const size_t n = 20000;
    const ScenarioBatch b = sample_batch(g, 2, n, InformedFactorSpec{}, laws());
    double m = 0, v = 0, lo = 1e9, hi = -1e9;
    for (size_t s = 0; s < n; ++s) {
        m += b.xi_I[s];
        v += (b.xi_I[s] - 1.0) * (b.xi_I[s] - 1.0);
        lo = std::min(lo, b.xi_S[s]);
        hi = std::max(hi, b.xi_S[s]);
    }
    CHECK(std::abs(m / n - 1.0) < 5 * 0.5 / std::sqrt(double(n)));
    CHECK(std::abs(v / n - 0.25) < 5 * 0.25 * std::sqrt(2.0 / n));
    CHECK(lo >= -1.0);
    CHECK(hi <= 3.0);
    CHECK_THROWS_AS((InitLaw{InitLaw::Kind::Gaussian, 0.0, -1.0}.validate()), Error);
}

TEST_CASE("node paths are the projected walk of B") {
    const GridSpec g{3, 2, 4, 1.0};
    const ScenarioBatch b = sample_batch(g, 3, 300, InformedFactorSpec{}, laws());
    const Lattice lat(g.l);
    REQUIRE(b.node_path.length == g.intervals() - 1);
    for (size_t s = 0; s < b.count; ++s) {
        std::vector<double> x;
        for (int i = 0; i <= g.intervals(); ++i) x.push_back(b.b(s, i * g.m));
        const auto y = project_path(x, g.l);
        for (int i = 1; i < g.intervals(); ++i) CHECK(lat.value(b.node_path.row(s)[i - 1]) == y[i]);
    }
    // coarser level on the same paths
    const ScenarioBatch v = view_at_level(b, 1, 1);
    CHECK(v.spec.n == 1);
    CHECK(v.spec.m == g.m * 4);
    CHECK(v.node_path.length == 1);
    for (size_t s = 0; s < b.count; ++s) {
        const auto y = project_path({0.0, b.b(s, 4 * g.m)}, 1);
        CHECK(Lattice(1).value(v.node_path.row(s)[0]) == y[1]);
    }
    CHECK_THROWS_AS(discretize_at_level(b, 4), Error);
}

TEST_CASE("batch file round trip") {
    const GridSpec g{2, 1, 3, 1.0};
    const ScenarioBatch b = sample_batch(g, 8, 50, InformedFactorSpec{}, laws());
    const std::string path = "test_paths_roundtrip.bin";
    write_batch(path, b);
    const ScenarioBatch r = read_batch(path);
    std::remove(path.c_str());
    CHECK(r.spec == b.spec);
    CHECK(r.seed == b.seed);
    CHECK(r.b.data == b.b.data);
    CHECK(r.c.data == b.c.data);
    CHECK(r.w_S.data == b.w_S.data);
    CHECK(r.xi_I == b.xi_I);
    CHECK(r.node_path.idx == b.node_path.idx);
    CHECK_THROWS_AS(read_batch("does_not_exist.bin"), Error);
}

TEST_CASE("factor parameter checks") {
    InformedFactorSpec f;
    f.rho = 1.5;
    CHECK_THROWS_AS(f.validate(), Error);
    f.rho = 0.5;
    f.kind = FactorKind::Custom;
    CHECK_THROWS_AS(f.validate(), Error);
    f.transform = factor_transform("clip", 0.5);
    CHECK_NOTHROW(f.validate());
    CHECK(f.transform(0.0, 2.0) == 0.5);
    CHECK_THROWS_AS(factor_transform("nope", 1.0), Error);
}
