#include "mfeq/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mfeq/csv.h"
#include "mfeq/error.h"

namespace mfeq {

const char* to_string(Command c) {
    switch (c) {
    case Command::Validate: return "validate";
    case Command::Solve: return "solve";
    case Command::Refine: return "refine";
    case Command::Clearing: return "clearing";
    case Command::Informed: return "informed";
    }
    return "solve";
}

Command command_from_string(const std::string& s) {
    for (Command c : {Command::Validate, Command::Solve, Command::Refine, Command::Clearing, Command::Informed})
        if (s == to_string(c)) return c;
    fail(ErrorKind::Config, "unknown command '" + s + "'");
}

KeyMode RunSpec::key_mode() const {
    if (mode == "auto") return market.grid.n <= 2 ? KeyMode::FullPrefix : KeyMode::Markov;
    return key_mode_from_string(mode);
}

bool RunSpec::operator==(const RunSpec& o) const { return echo_config(*this) == echo_config(o); }

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool to_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const char* b = t.data();
    const char* e = b + t.size();
    if (*b == '+') ++b;
    auto r = std::from_chars(b, e, out);
    return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

template <class I>
bool to_int(const std::string& s, I& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    return r.ec == std::errc() && r.ptr == t.data() + t.size();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

struct Entry {
    std::string value;
    int line = 0;
};

using Section = std::map<std::string, Entry>;

class Ctx {
  public:
    explicit Ctx(std::string origin) : origin_(std::move(origin)) {}

    [[noreturn]] void error(int line, const std::string& msg) const {
        fail(ErrorKind::Config, origin_ + (line > 0 ? ":" + std::to_string(line) : "") + ": " + msg);
    }
    [[noreturn]] void range(const std::string& sec, const std::string& key, const Entry& e, const std::string& need) const {
        error(e.line, "range error: [" + sec + "] " + key + " = " + e.value + " " + need);
    }

    double real(const std::string& sec, const std::string& key, const Entry& e) const {
        double v;
        if (!to_double(e.value, v)) error(e.line, "[" + sec + "] " + key + ": expected a real number, got '" + e.value + "'");
        return v;
    }
    template <class I>
    I integer(const std::string& sec, const std::string& key, const Entry& e) const {
        I v;
        if (!to_int(e.value, v)) error(e.line, "[" + sec + "] " + key + ": expected an integer, got '" + e.value + "'");
        return v;
    }
    bool boolean(const std::string& sec, const std::string& key, const Entry& e) const {
        const std::string v = trim(e.value);
        if (v == "true") return true;
        if (v == "false") return false;
        error(e.line, "[" + sec + "] " + key + ": expected true or false, got '" + e.value + "'");
    }
    std::vector<int> int_list(const std::string& sec, const std::string& key, const Entry& e) const {
        std::vector<int> out;
        for (const auto& item : split_list(e.value)) out.push_back(integer<int>(sec, key, Entry{item, e.line}));
        if (out.empty()) error(e.line, "[" + sec + "] " + key + ": empty list");
        return out;
    }
    template <class F>
    auto wrap(int line, F&& f) const {
        try {
            return f();
        } catch (const Error& err) {
            error(line, err.what());
        }
    }

  private:
    std::string origin_;
};

const std::map<std::string, std::vector<std::string>>& known_keys() {
    static const std::map<std::string, std::vector<std::string>> keys = {
        {"run",
         {"command", "model", "seed", "samples", "damping", "tol", "max_iter", "mode", "out_dir", "min_bucket", "parallel",
          "probe_budget", "levels", "l_per_n", "refine_seeds", "n_values", "seeds", "replications", "n_s", "scaling", "L"}},
        {"grid", {"n", "l", "m", "T"}},
        {"informed",
         {"lambda", "weight", "drift", "vol_common", "vol_idio", "cost_mode", "running", "terminal", "conditioning", "init"}},
        {"standard",
         {"lambda", "weight", "drift", "vol_common", "vol_idio", "cost_mode", "running", "terminal", "conditioning", "init"}},
        {"factor", {"rho", "convention", "transform", "transform_param"}},
    };
    return keys;
}

void apply_agent(const Ctx& cx, const std::string& sec, const Section& s, AgentSpec& a) {
    CoefRef drift = a.drift.ref, vc = a.vol_common.ref, vi = a.vol_idio.ref, run = a.running.ref, term = a.terminal.ref;
    double lambda = a.lambda, weight = a.weight;
    CostMode mode = a.cost_mode;
    Conditioning cond = a.conditioning;
    InitLaw init = a.init;
    for (const auto& [k, e] : s) {
        if (k == "lambda") {
            lambda = cx.real(sec, k, e);
            if (!(lambda > 0)) cx.range(sec, k, e, "must be > 0");
        } else if (k == "weight") {
            weight = cx.real(sec, k, e);
            if (!(weight > 0 && weight < 1)) cx.range(sec, k, e, "must lie in (0, 1)");
        } else if (k == "drift") {
            drift = cx.wrap(e.line, [&] { return parse_coef(e.value); });
        } else if (k == "vol_common") {
            vc = cx.wrap(e.line, [&] { return parse_coef(e.value); });
        } else if (k == "vol_idio") {
            vi = cx.wrap(e.line, [&] { return parse_coef(e.value); });
        } else if (k == "running") {
            run = cx.wrap(e.line, [&] { return parse_coef(e.value); });
        } else if (k == "terminal") {
            term = cx.wrap(e.line, [&] { return parse_coef(e.value); });
        } else if (k == "cost_mode") {
            const std::string v = trim(e.value);
            if (v == "affine") mode = CostMode::Affine;
            else if (v == "convex") mode = CostMode::GeneralConvex;
            else cx.error(e.line, "[" + sec + "] cost_mode must be affine or convex");
        } else if (k == "conditioning") {
            const std::string v = trim(e.value);
            if (v == "key") cond = Conditioning::TreeKey;
            else if (v == "key+factors") cond = Conditioning::TreeKeyFactors;
            else cx.error(e.line, "[" + sec + "] conditioning must be key or key+factors");
        } else if (k == "init") {
            init = cx.wrap(e.line, [&] { return parse_init(e.value); });
        }
    }
    const int line = s.empty() ? 0 : s.begin()->second.line;
    a = cx.wrap(line, [&] {
        return make_agent(a.population, lambda, weight, drift, vc, vi, mode, run, term, cond);
    });
    a.init = init;
}

} // namespace

CoefRef parse_coef(const std::string& text) {
    const std::string t = trim(text);
    CoefRef ref;
    const auto open = t.find('(');
    if (open == std::string::npos) {
        ref.name = t;
    } else {
        if (t.back() != ')') fail(ErrorKind::Config, "coefficient '" + t + "': missing ')'");
        ref.name = trim(t.substr(0, open));
        const std::string body = t.substr(open + 1, t.size() - open - 2);
        if (!trim(body).empty()) {
            for (const auto& item : split_list(body)) {
                const auto eq = item.find('=');
                if (eq == std::string::npos) fail(ErrorKind::Config, "coefficient '" + t + "': expected key=value");
                const std::string k = trim(item.substr(0, eq));
                double v;
                if (!to_double(item.substr(eq + 1), v)) fail(ErrorKind::Config, "coefficient '" + t + "': bad number for " + k);
                if (ref.params.count(k)) fail(ErrorKind::Config, "coefficient '" + t + "': repeated parameter " + k);
                ref.params[k] = v;
            }
        }
    }
    if (ref.name.empty()) fail(ErrorKind::Config, "empty coefficient name");
    return ref;
}

InitLaw parse_init(const std::string& text) {
    const CoefRef r = parse_coef(text);
    auto get = [&](const char* k, double def) {
        auto it = r.params.find(k);
        return it == r.params.end() ? def : it->second;
    };
    auto only = [&](std::initializer_list<const char*> keys) {
        for (const auto& [k, v] : r.params)
            if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
                fail(ErrorKind::Config, "initial law '" + r.name + "' has no parameter '" + k + "'");
    };
    InitLaw law;
    if (r.name == "point") {
        only({"value"});
        law = {InitLaw::Kind::PointMass, get("value", 0.0), 0.0};
    } else if (r.name == "gaussian") {
        only({"mean", "sd"});
        law = {InitLaw::Kind::Gaussian, get("mean", 0.0), get("sd", 1.0)};
    } else if (r.name == "uniform") {
        only({"lo", "hi"});
        law = {InitLaw::Kind::Uniform, get("lo", 0.0), get("hi", 1.0)};
    } else {
        fail(ErrorKind::Config, "unknown initial law '" + r.name + "' (point, gaussian, uniform)");
    }
    law.validate();
    return law;
}

std::string describe_init(const InitLaw& law) {
    switch (law.kind) {
    case InitLaw::Kind::PointMass: return "point(value=" + fmt_real(law.a) + ")";
    case InitLaw::Kind::Gaussian: return "gaussian(mean=" + fmt_real(law.a) + ",sd=" + fmt_real(law.b) + ")";
    case InitLaw::Kind::Uniform: return "uniform(lo=" + fmt_real(law.a) + ",hi=" + fmt_real(law.b) + ")";
    }
    return "";
}

RunSpec parse_config_text(const std::string& text, const std::string& origin, const Overrides& over) {
    const Ctx cx(origin);
    std::map<std::string, Section> secs;
    std::string current;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (line == 1 && raw.rfind("\xEF\xBB\xBF", 0) == 0) raw = raw.substr(3);
        const auto hash = raw.find_first_of("#;");
        const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') cx.error(line, "syntax error: unterminated section header");
            current = trim(s.substr(1, s.size() - 2));
            if (!known_keys().count(current)) cx.error(line, "unknown section [" + current + "]");
            if (secs.count(current)) cx.error(line, "section [" + current + "] repeated");
            secs[current];
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) cx.error(line, "syntax error: expected key = value");
        if (current.empty()) cx.error(line, "syntax error: key outside of a section");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) cx.error(line, "syntax error: empty key");
        const auto& allowed = known_keys().at(current);
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            cx.error(line, "unknown key '" + key + "' in [" + current + "]");
        if (secs[current].count(key)) cx.error(line, "key '" + key + "' repeated in [" + current + "]");
        secs[current][key] = Entry{value, line};
    }

    RunSpec r;
    Section& run = secs["run"];
    if (over.model) run["model"] = Entry{*over.model, 0};
    if (run.count("model")) r.model = trim(run["model"].value);
    const int model_line = run.count("model") ? run["model"].line : 0;
    r.market = cx.wrap(model_line, [&] { return preset(r.model); });

    for (const auto& [k, e] : run) {
        const std::string sec = "run";
        if (k == "command") {
            r.command = cx.wrap(e.line, [&] { return command_from_string(trim(e.value)); });
        } else if (k == "seed") {
            r.seed = cx.integer<uint64_t>(sec, k, e);
        } else if (k == "samples") {
            const auto v = cx.integer<long long>(sec, k, e);
            if (v < 1) cx.range(sec, k, e, "must be >= 1");
            r.market.samples = static_cast<size_t>(v);
        } else if (k == "damping") {
            r.damping = cx.real(sec, k, e);
            if (!(r.damping > 0 && r.damping <= 1)) cx.range(sec, k, e, "must lie in (0, 1]");
        } else if (k == "tol") {
            r.market.tol = cx.real(sec, k, e);
            if (!(r.market.tol > 0)) cx.range(sec, k, e, "must be > 0");
        } else if (k == "max_iter") {
            r.max_iter = cx.integer<int>(sec, k, e);
            if (r.max_iter < 1) cx.range(sec, k, e, "must be >= 1");
        } else if (k == "mode") {
            r.mode = trim(e.value);
            if (r.mode != "auto" && r.mode != "prefix" && r.mode != "markov") cx.range(sec, k, e, "must be prefix, markov or auto");
        } else if (k == "out_dir") {
            r.out_dir = trim(e.value);
            if (r.out_dir.empty()) cx.range(sec, k, e, "must not be empty");
        } else if (k == "min_bucket") {
            r.min_bucket = cx.integer<int>(sec, k, e);
            if (r.min_bucket < 1) cx.range(sec, k, e, "must be >= 1");
        } else if (k == "parallel") {
            r.parallel = cx.boolean(sec, k, e);
        } else if (k == "probe_budget") {
            const auto v = cx.integer<long long>(sec, k, e);
            if (v < 1) cx.range(sec, k, e, "must be >= 1");
            r.probe_budget = static_cast<size_t>(v);
        } else if (k == "levels") {
            r.levels = cx.int_list(sec, k, e);
            for (size_t i = 0; i < r.levels.size(); ++i)
                if (r.levels[i] < 1 || (i > 0 && r.levels[i] <= r.levels[i - 1]))
                    cx.range(sec, k, e, "must be positive and strictly ascending");
        } else if (k == "l_per_n") {
            r.l_per_n = cx.integer<int>(sec, k, e);
            if (r.l_per_n < 0 || r.l_per_n > 6) cx.range(sec, k, e, "must lie in [0, 6]");
        } else if (k == "refine_seeds") {
            r.refine_seeds = cx.integer<int>(sec, k, e);
            if (r.refine_seeds < 1) cx.range(sec, k, e, "must be >= 1");
        } else if (k == "n_values") {
            r.n_values = cx.int_list(sec, k, e);
            for (int v : r.n_values)
                if (v < 2) cx.range(sec, k, e, "entries must be >= 2");
        } else if (k == "seeds") {
            r.seeds = cx.integer<int>(sec, k, e);
            if (r.seeds < 1) cx.range(sec, k, e, "must be >= 1");
        } else if (k == "replications") {
            r.replications = cx.integer<int>(sec, k, e);
            if (r.replications < 1) cx.range(sec, k, e, "must be >= 1");
        } else if (k == "n_s") {
            r.n_s = cx.integer<int>(sec, k, e);
            if (r.n_s < 1) cx.range(sec, k, e, "must be >= 1");
        } else if (k == "scaling") {
            r.scaling = trim(e.value);
            if (r.scaling != "mean-field" && r.scaling != "finite-market")
                cx.range(sec, k, e, "must be mean-field or finite-market");
        } else if (k == "L") {
            r.market.bounds.L = cx.real(sec, k, e);
            if (!(r.market.bounds.L > 0)) cx.range(sec, k, e, "must be > 0");
        }
    }

    for (const auto& [k, e] : secs["grid"]) {
        const std::string sec = "grid";
        GridSpec& g = r.market.grid;
        if (k == "n") {
            g.n = cx.integer<int>(sec, k, e);
            if (g.n < 1 || g.n > 20) cx.range(sec, k, e, "must lie in [1, 20]");
        } else if (k == "l") {
            g.l = cx.integer<int>(sec, k, e);
            if (g.l < 0 || g.l > 12) cx.range(sec, k, e, "must lie in [0, 12]");
        } else if (k == "m") {
            g.m = cx.integer<int>(sec, k, e);
            if (g.m < 1) cx.range(sec, k, e, "must be >= 1");
        } else if (k == "T") {
            g.T = cx.real(sec, k, e);
            if (!(g.T > 0)) cx.range(sec, k, e, "must be > 0");
            r.market.bounds.T = g.T;
        }
    }

    apply_agent(cx, "informed", secs["informed"], r.market.informed);
    apply_agent(cx, "standard", secs["standard"], r.market.standard);

    for (const auto& [k, e] : secs["factor"]) {
        const std::string sec = "factor";
        auto& f = r.market.factor;
        if (k == "rho") {
            f.rho = cx.real(sec, k, e);
            if (std::abs(f.rho) > 1) cx.range(sec, k, e, "must lie in [-1, 1]");
        } else if (k == "convention") {
            const std::string v = trim(e.value);
            if (v == "rho") f.convention = FactorConvention::Rho;
            else if (v == "rho-squared") f.convention = FactorConvention::RhoSquared;
            else cx.range(sec, k, e, "must be rho or rho-squared");
        } else if (k == "transform") {
            f.transform_name = trim(e.value);
        } else if (k == "transform_param") {
            f.transform_param = cx.real(sec, k, e);
        }
    }
    {
        auto& f = r.market.factor;
        const int line = secs["factor"].count("transform") ? secs["factor"]["transform"].line : 0;
        if (f.transform_name == "none") {
            f.kind = FactorKind::CorrelatedBM;
            f.transform = nullptr;
        } else {
            f.kind = FactorKind::Custom;
            f.transform = cx.wrap(line, [&] { return factor_transform(f.transform_name, f.transform_param); });
        }
    }

    if (over.seed) r.seed = *over.seed;
    if (over.out_dir) r.out_dir = *over.out_dir;
    if (over.mode) {
        if (*over.mode != "auto" && *over.mode != "prefix" && *over.mode != "markov")
            cx.error(0, "range error: --mode must be prefix, markov or auto");
        r.mode = *over.mode;
    }
    if (over.damping) {
        if (!(*over.damping > 0 && *over.damping <= 1)) cx.error(0, "range error: --damping must lie in (0, 1]");
        r.damping = *over.damping;
    }
    if (over.tol) {
        if (!(*over.tol > 0)) cx.error(0, "range error: --tol must be > 0");
        r.market.tol = *over.tol;
    }
    if (over.max_iter) {
        if (*over.max_iter < 1) cx.error(0, "range error: --max-iter must be >= 1");
        r.max_iter = *over.max_iter;
    }
    if (over.samples) {
        if (*over.samples < 1) cx.error(0, "range error: --samples must be >= 1");
        r.market.samples = *over.samples;
    }

    r.market.mode = r.key_mode();
    cx.wrap(0, [&] {
        r.market.grid.validate();
        r.market.validate();
        return 0;
    });
    return r;
}

RunSpec parse_config(const std::string& path, const Overrides& over) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Input, "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path, over);
}

RunSpec default_spec(Command command, const Overrides& over) {
    return parse_config_text("[run]\ncommand = " + std::string(to_string(command)) + "\n", "<defaults>", over);
}

std::string echo_config(const RunSpec& r) {
    std::ostringstream os;
    auto ints = [](const std::vector<int>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    const MarketSpec& m = r.market;
    os << "[run]\n"
       << "command = " << to_string(r.command) << '\n'
       << "model = " << r.model << '\n'
       << "seed = " << r.seed << '\n'
       << "samples = " << m.samples << '\n'
       << "damping = " << fmt_real(r.damping) << '\n'
       << "tol = " << fmt_real(m.tol) << '\n'
       << "max_iter = " << r.max_iter << '\n'
       << "mode = " << r.mode << '\n'
       << "out_dir = " << r.out_dir << '\n'
       << "min_bucket = " << r.min_bucket << '\n'
       << "parallel = " << (r.parallel ? "true" : "false") << '\n'
       << "probe_budget = " << r.probe_budget << '\n'
       << "levels = " << ints(r.levels) << '\n'
       << "l_per_n = " << r.l_per_n << '\n'
       << "refine_seeds = " << r.refine_seeds << '\n'
       << "n_values = " << ints(r.n_values) << '\n'
       << "seeds = " << r.seeds << '\n'
       << "replications = " << r.replications << '\n'
       << "n_s = " << r.n_s << '\n'
       << "scaling = " << r.scaling << '\n'
       << "L = " << fmt_real(m.bounds.L) << '\n'
       << "\n[grid]\n"
       << "n = " << m.grid.n << '\n'
       << "l = " << m.grid.l << '\n'
       << "m = " << m.grid.m << '\n'
       << "T = " << fmt_real(m.grid.T) << '\n';
    for (const AgentSpec* a : {&m.informed, &m.standard}) {
        os << "\n[" << to_string(a->population) << "]\n"
           << "lambda = " << fmt_real(a->lambda) << '\n'
           << "weight = " << fmt_real(a->weight) << '\n'
           << "drift = " << a->drift.ref.describe() << '\n'
           << "vol_common = " << a->vol_common.ref.describe() << '\n'
           << "vol_idio = " << a->vol_idio.ref.describe() << '\n'
           << "cost_mode = " << to_string(a->cost_mode) << '\n'
           << "running = " << a->running.ref.describe() << '\n'
           << "terminal = " << a->terminal.ref.describe() << '\n'
           << "conditioning = " << to_string(a->conditioning) << '\n'
           << "init = " << describe_init(a->init) << '\n';
    }
    os << "\n[factor]\n"
       << "rho = " << fmt_real(m.factor.rho) << '\n'
       << "convention = " << (m.factor.convention == FactorConvention::Rho ? "rho" : "rho-squared") << '\n'
       << "transform = " << m.factor.transform_name << '\n'
       << "transform_param = " << fmt_real(m.factor.transform_param) << '\n';
    return os.str();
}

} // namespace mfeq
