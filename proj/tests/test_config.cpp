#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "mfeq/config.h"
#include "mfeq/error.h"

using namespace mfeq;

namespace {

std::string config_error(const std::string& text, const Overrides& over = {}) {
    try {
        parse_config_text(text, "t.ini", over);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        return e.what();
    }
    return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

} // namespace

TEST_CASE("minimal file gives the defaults") {
    const RunSpec r = parse_config_text("[run]\nmodel = zero\n");
    CHECK(r == default_spec(Command::Solve));
    CHECK(r.command == Command::Solve);
    CHECK(r.seed == 1);
    CHECK(r.damping == 0.5);
    CHECK(r.max_iter == 100);
    CHECK(r.market.name == "zero");
    CHECK(r.key_mode() == KeyMode::FullPrefix);
}

TEST_CASE("same text parsed twice is identical") {
    const std::string text = "# comment\n[run]\ncommand = clearing\nmodel = convex\nseed = 17\nn_values = 8, 16, 32, 64\n"
                             "[grid]\nm = 8\n[standard]\nlambda = 2\n[factor]\nrho = 0.25\n";
    const RunSpec a = parse_config_text(text), b = parse_config_text(text);
    CHECK(a == b);
    CHECK(echo_config(a) == echo_config(b));
    CHECK(a.command == Command::Clearing);
    CHECK(a.seed == 17);
    CHECK(a.n_values == std::vector<int>{8, 16, 32, 64});
    CHECK(a.market.grid.m == 8);
    CHECK(a.market.standard.lambda == 2.0);
    CHECK(a.market.factor.rho == 0.25);
}

TEST_CASE("echo reproduces the spec for every preset") {
    for (const auto& name : preset_names())
        for (Command c : {Command::Validate, Command::Solve, Command::Refine, Command::Clearing, Command::Informed}) {
            Overrides o;
            o.model = name;
            const RunSpec r = default_spec(c, o);
            const RunSpec back = parse_config_text(echo_config(r));
            CHECK(back == r);
            CHECK(back.market.informed.init.kind == r.market.informed.init.kind);
            CHECK(back.market.informed.init.b == r.market.informed.init.b);
        }
}

TEST_CASE("range errors name section, key and value") {
    const std::string e = config_error("[run]\ndamping = 1.5\n");
    CHECK(contains(e, "configuration error"));
    CHECK(contains(e, "t.ini:2"));
    CHECK(contains(e, "range error: [run] damping = 1.5"));
    CHECK(contains(config_error("[run]\ntol = 0\n"), "[run] tol"));
    CHECK(contains(config_error("[run]\nsamples = 0\n"), "[run] samples"));
    CHECK(contains(config_error("[grid]\nn = 0\n"), "[grid] n = 0"));
    CHECK(contains(config_error("[run]\nlevels = 2,1\n"), "[run] levels"));
    CHECK(contains(config_error("[informed]\nweight = 1.2\n"), "weight"));
}

TEST_CASE("syntax and key errors carry line numbers") {
    CHECK(contains(config_error("[run]\n\nseed\n"), "t.ini:3"));
    CHECK(contains(config_error("[run\n"), "unterminated"));
    CHECK(contains(config_error("seed = 1\n"), "outside of a section"));
    CHECK(contains(config_error("[run]\nsede = 1\n"), "unknown key 'sede'"));
    CHECK(contains(config_error("[nope]\n"), "unknown section [nope]"));
    CHECK(contains(config_error("[run]\nseed = 1\nseed = 2\n"), "t.ini:3"));
    CHECK(contains(config_error("[run]\nseed = 1\n[run]\n"), "repeated"));
    CHECK(contains(config_error("[run]\nseed = x\n"), "expected an integer"));
    CHECK(contains(config_error("[run]\nparallel = yes\n"), "true or false"));
    CHECK(contains(config_error("[run]\nmodel = nope\n"), "unknown preset"));
    CHECK(contains(config_error("[informed]\nrunning = tanh_b(amp=1,amp=2)\n"), "t.ini:2"));
}

TEST_CASE("coefficient and initial law syntax") {
    const CoefRef c = parse_coef("tanh_b(amp=0.5, scale=2)");
    CHECK(c.name == "tanh_b");
    CHECK(c.params.at("amp") == 0.5);
    CHECK(c.params.at("scale") == 2.0);
    CHECK(parse_coef("zero").params.empty());
    CHECK(parse_coef(c.describe()).params == c.params);
    const InitLaw g = parse_init("gaussian(mean=1, sd=0.25)");
    CHECK(g.kind == InitLaw::Kind::Gaussian);
    CHECK(g.a == 1.0);
    CHECK(g.b == 0.25);
    CHECK(parse_init(describe_init(g)).b == 0.25);
    CHECK_THROWS_AS(parse_init("gaussian(mu=1)"), Error);
    CHECK_THROWS_AS(parse_coef("tanh_b(amp=)"), Error);
}

TEST_CASE("command line overrides") {
    Overrides o;
    o.seed = 9;
    o.damping = 0.25;
    o.samples = 123;
    o.mode = "markov";
    o.out_dir = "elsewhere";
    const RunSpec r = parse_config_text("[run]\nseed = 3\n", "t.ini", o);
    CHECK(r.seed == 9);
    CHECK(r.damping == 0.25);
    CHECK(r.market.samples == 123);
    CHECK(r.key_mode() == KeyMode::Markov);
    CHECK(r.market.mode == KeyMode::Markov);
    CHECK(r.out_dir == "elsewhere");
    Overrides bad;
    bad.damping = 2.0;
    CHECK(contains(config_error("[run]\n", bad), "--damping"));
}

TEST_CASE("config files") {
    CHECK_THROWS_AS(parse_config("no_such_file.ini"), Error);
    {
        std::ofstream f("test_config_tmp.ini");
        f << "\xEF\xBB\xBF[run]\nmodel = deterministic\n";
    }
    const RunSpec r = parse_config("test_config_tmp.ini");
    std::remove("test_config_tmp.ini");
    CHECK(r.model == "deterministic");
    CHECK(command_from_string("refine") == Command::Refine);
    CHECK_THROWS_AS(command_from_string("plot"), Error);
}
