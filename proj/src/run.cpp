#include "mfeq/run.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "mfeq/csv.h"
#include "mfeq/equilibrium.h"
#include "mfeq/error.h"
#include "mfeq/market.h"

namespace mfeq {

namespace {

namespace fs = std::filesystem;

constexpr uint64_t kFreshSeedOffset = 0x9E3779B97F4A7C15ull;
constexpr uint64_t kProbeSeedOffset = 0xD1B54A32D192ED03ull;

class Session {
  public:
    Session(const RunSpec& spec, RunResult& res, std::ostream* log) : spec_(spec), res_(res), log_(log) {
        std::error_code ec;
        fs::create_directories(spec.out_dir, ec);
        if (ec || !fs::is_directory(spec.out_dir)) fail(ErrorKind::Input, "cannot create out_dir '" + spec.out_dir + "'");
        const fs::path probe = fs::path(spec.out_dir) / ".write_test";
        std::ofstream t(probe);
        if (!t) fail(ErrorKind::Input, "out_dir '" + spec.out_dir + "' is not writable");
        t.close();
        fs::remove(probe, ec);
        std::istringstream cfg(echo_config(spec));
        std::string line;
        header_ = "# mfeq " + std::string(to_string(spec.command)) + "\n";
        while (std::getline(cfg, line))
            if (!line.empty()) header_ += "# " + line + "\n";
    }

    // CSV artifacts carry the config echo as leading comment lines
    void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
        write(name, [&](std::ostream& os) {
            os << header_;
            body(os);
        });
    }

    void text(const std::string& name, const std::function<void(std::ostream&)>& body) {
        write(name, [&](std::ostream& os) {
            body(os);
            os << "\n[config]\n" << echo_config(spec_);
        });
    }

    void check(const std::string& name, bool passed, const std::string& detail) {
        res_.checks.push_back({name, passed, detail});
        if (log_) *log_ << (passed ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    }

    void note(const std::string& s) {
        if (log_) *log_ << s << '\n';
    }

  private:
    void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
        const fs::path p = fs::path(spec_.out_dir) / name;
        res_.artifacts.push_back({name, true});
        std::ofstream os(p, std::ios::binary);
        if (!os) fail(ErrorKind::Input, "cannot write '" + p.string() + "'");
        body(os);
        os.flush();
        if (!os) fail(ErrorKind::Input, "write failed for '" + p.string() + "'");
        res_.artifacts.back().partial = false;
    }

    const RunSpec& spec_;
    RunResult& res_;
    std::ostream* log_;
    std::string header_;
};

std::string cmp(double v, const char* op, double lim) { return fmt_real(v) + " " + op + " " + fmt_real(lim); }

Exec exec_of(const RunSpec& s) { return s.parallel ? Exec::Parallel : Exec::Serial; }

FixedPointOptions fp_options(const RunSpec& s) {
    FixedPointOptions fo;
    fo.damping = s.damping;
    fo.tol = s.market.tol;
    fo.max_iter = s.max_iter;
    fo.min_count = s.min_bucket;
    fo.phi.exec = exec_of(s);
    fo.phi.solve.exec = exec_of(s);
    return fo;
}

ScenarioBatch batch_for(const RunSpec& s, uint64_t seed, size_t count) {
    return sample_batch(s.market.grid, seed, count, s.market.factor, s.market.init_laws(), exec_of(s));
}

void do_validate(const RunSpec& s, Session& io) {
    std::vector<ValidationReport> reps;
    for (const AgentSpec* a : {&s.market.informed, &s.market.standard})
        reps.push_back(validate(*a, s.market.bounds, s.probe_budget, ValidationBox{}, s.seed));
    io.csv("validation.csv", [&](std::ostream& os) {
        os << "agent,check,passed,worst,limit,where\n";
        for (const auto& r : reps)
            for (const auto& c : r.checks)
                os << r.agent << ',' << c.name << ',' << (c.passed ? "true" : "false") << ',' << fmt_real(c.worst) << ','
                   << fmt_real(c.limit) << ",\"" << c.where << "\"\n";
    });
    for (const auto& r : reps)
        for (const auto& c : r.checks) io.check(r.agent + "." + c.name, c.passed, cmp(c.worst, "<=", c.limit));
}

void boundedness_checks(const EquilibriumReport& rep, double C_B, Session& io) {
    double sp = rep.initial_sup_price, sy = 0.0;
    for (const auto& it : rep.iterates) {
        sp = std::max(sp, it.sup_price);
        sy = std::max({sy, it.sup_Y_I, it.sup_Y_S});
    }
    sy = std::max({sy, rep.final_phi.sup_Y_I, rep.final_phi.sup_Y_S});
    io.check("sup_price_all_iterates", sp <= C_B, cmp(sp, "<=", C_B));
    io.check("sup_Y_all_iterates", sy <= C_B, cmp(sy, "<=", C_B));
}

void write_trace(const EquilibriumReport& rep, Session& io) {
    io.csv("trace.csv", [&](std::ostream& os) {
        os << "iteration,residual,sup_price,sup_Y_I,sup_Y_S\n";
        for (size_t k = 0; k < rep.iterates.size(); ++k) {
            const auto& it = rep.iterates[k];
            os << k + 1 << ',' << fmt_real(it.residual) << ',' << fmt_real(it.sup_price) << ',' << fmt_real(it.sup_Y_I)
               << ',' << fmt_real(it.sup_Y_S) << '\n';
        }
    });
}

void do_solve(const RunSpec& s, Session& io, RunResult& res) {
    const MarketSpec& mk = s.market;
    const FixedPointOptions fo = fp_options(s);
    const ScenarioBatch batch = batch_for(s, s.seed, mk.samples);
    const EquilibriumReport rep = solve_fixed_point(batch, mk, fo);
    res.warnings.insert(res.warnings.end(), rep.warnings.begin(), rep.warnings.end());
    io.csv("price.csv", [&](std::ostream& os) { write_price_csv(os, rep.price); });
    write_trace(rep, io);

    const uint64_t fresh = s.seed ^ kFreshSeedOffset;
    const ConsistencyResult cons = consistency_residual(rep, mk, fresh, mk.samples, fo);
    io.csv("consistency.csv", [&](std::ostream& os) {
        os << "interval,residual,slack\n";
        for (size_t i = 0; i < cons.residual.size(); ++i)
            os << i << ',' << fmt_real(cons.residual[i]) << ',' << fmt_real(cons.slack[i]) << '\n';
    });

    // decoupling probe on a fresh batch of probe_budget samples
    const ScenarioBatch pb = batch_for(s, s.seed ^ kProbeSeedOffset, s.probe_budget);
    const Workspace pws = make_workspace(pb, mk.mode, s.min_bucket, exec_of(s));
    const PathArray ppath = price_path(rep.price, *pws.buckets);
    std::vector<std::pair<std::string, ProbeResult>> probes;
    for (const AgentSpec* a : {&mk.informed, &mk.standard}) {
        SolveOptions so = fo.phi.solve;
        probes.emplace_back(to_string(a->population),
                            decoupling_probe(*a, ppath, pb, pws.plan, mk.bounds.L, 0, 0.0, 1.0, so));
    }
    io.csv("probe.csv", [&](std::ostream& os) {
        os << "agent,ratio,gamma_p\n";
        for (const auto& [n, p] : probes) os << n << ',' << fmt_real(p.ratio) << ',' << fmt_real(p.gamma_p) << '\n';
    });

    io.text("report.txt", [&](std::ostream& os) {
        write_report(os, rep, mk, fo);
        os << "consistency_fresh_seed = " << fresh << '\n';
        for (size_t i = 0; i < cons.residual.size(); ++i)
            os << "consistency_residual[" << i << "] = " << fmt_real(cons.residual[i]) << " (tol "
               << fmt_real(cons.tol) << " + " << fmt_real(cons.slack[i]) << ")\n";
        for (const auto& [n, p] : probes)
            os << "decoupling_" << n << " = " << fmt_real(p.ratio) << " (Gamma_p " << fmt_real(p.gamma_p) << ")\n";
    });

    const Diagnostics& d = rep.diag;
    io.check("converged", rep.converged,
             "iterations " + std::to_string(rep.iterations) + ", residual " + fmt_real(rep.residual_trace.back()));
    boundedness_checks(rep, d.C_B, io);
    io.check("time_lipschitz", d.time_lipschitz_ok, cmp(d.time_lipschitz_max, "<=", 2 * d.L + d.time_lipschitz_slack));
    io.check("cond_variation_price", d.cv_price_ok(), cmp(d.cv_price.value, "<=", 2 * d.L * d.T + 3 * d.cv_price.se));
    io.check("cond_variation_Y", d.cv_Y_ok(),
             "I " + cmp(d.cv_Y_I.value, "<=", d.T * d.L + 3 * d.cv_Y_I.se) + ", S " +
                 cmp(d.cv_Y_S.value, "<=", d.T * d.L + 3 * d.cv_Y_S.se));
    io.check("consistency_residual", cons.passed, "fresh seed " + std::to_string(fresh));
    for (const auto& [n, p] : probes) io.check("decoupling_" + n, p.within, cmp(p.ratio, "<=", p.gamma_p));
}

void do_refine(const RunSpec& s, Session& io) {
    const MarketSpec& mk = s.market;
    const int nmax = s.levels.back();
    const int lmax = std::min(12, s.l_per_n * nmax);
    GridSpec fine = mk.grid;
    fine.n = nmax;
    fine.l = lmax;
    const KeyMode mode = s.mode == "auto" ? KeyMode::Markov : key_mode_from_string(s.mode);
    const FixedPointOptions fo = fp_options(s);
    struct Row {
        uint64_t seed;
        RefinementResult r;
    };
    std::vector<Row> rows;
    int good = 0;
    for (int k = 0; k < s.refine_seeds; ++k) {
        const uint64_t seed = s.seed + static_cast<uint64_t>(k);
        const ScenarioBatch batch = sample_batch(fine, seed, mk.samples, mk.factor, mk.init_laws(), exec_of(s));
        rows.push_back({seed, refinement_study(mk, s.levels, batch, s.l_per_n, mode, fo)});
        good += rows.back().r.decreasing() ? 1 : 0;
    }
    io.csv("refinement.csv", [&](std::ostream& os) {
        os << "seed,n_coarse,n_fine,median_dm,mean_dm\n";
        for (const auto& row : rows)
            for (size_t p = 0; p < row.r.median_dm.size(); ++p)
                os << row.seed << ',' << s.levels[p] << ',' << s.levels[p + 1] << ',' << fmt_real(row.r.median_dm[p]) << ','
                   << fmt_real(row.r.mean_dm[p]) << '\n';
    });
    io.csv("refinement_levels.csv", [&](std::ostream& os) {
        os << "seed,n,l,iterations,converged,sup_price,time_lipschitz_max,cond_variation_price\n";
        for (const auto& row : rows)
            for (const auto& lv : row.r.levels)
                os << row.seed << ',' << lv.n << ',' << lv.l << ',' << lv.iterations << ',' << (lv.converged ? "true" : "false")
                   << ',' << fmt_real(lv.diag.sup_price) << ',' << fmt_real(lv.diag.time_lipschitz_max) << ','
                   << fmt_real(lv.diag.cv_price.value) << '\n';
    });
    const int need = (4 * s.refine_seeds + 4) / 5;
    io.check("median_dm_decreasing", good >= need,
             std::to_string(good) + " of " + std::to_string(s.refine_seeds) + " seeds (need " + std::to_string(need) + ")");
}

void do_clearing(const RunSpec& s, Session& io, RunResult& res) {
    const MarketSpec& mk = s.market;
    if (s.n_values.size() < 4) fail(ErrorKind::Config, "clearing study needs at least 4 values of N for a slope");
    const FixedPointOptions fo = fp_options(s);
    const ScenarioBatch batch = batch_for(s, s.seed, mk.samples);
    const EquilibriumReport rep = solve_fixed_point(batch, mk, fo);
    res.warnings.insert(res.warnings.end(), rep.warnings.begin(), rep.warnings.end());
    std::vector<uint64_t> seeds;
    for (int k = 0; k < s.seeds; ++k) seeds.push_back(s.seed + 1000 + static_cast<uint64_t>(k));
    const ClearingReport cr = rate_study(rep, mk, s.n_values, seeds, s.replications, exec_of(s));
    io.csv("clearing.csv", [&](std::ostream& os) { write_clearing_csv(os, cr); });
    const std::string slope = cr.exact ? "exact clearing (all residuals 0), slope undefined"
                                       : "slope " + fmt_real(cr.slope) + " (stderr " + fmt_real(cr.slope_stderr) + ")";
    io.text("clearing.txt", [&](std::ostream& os) {
        os << slope << '\n';
        os << "fixed_point_converged = " << (rep.converged ? "true" : "false") << '\n';
        os << "seeds = " << cr.seeds << ", replications = " << cr.replications << '\n';
    });
    io.note(slope);
    io.check("fixed_point_converged", rep.converged, "iterations " + std::to_string(rep.iterations));
    for (size_t k = 0; k < cr.N_values.size(); ++k)
        io.check("bound_N" + std::to_string(cr.N_values[k]), cr.within[k],
                 cmp(cr.residuals[k], "<=", cr.bounds[k] + 3 * cr.stderrs[k]));
    io.check("slope", cr.exact || cr.slope_in(-1.25, -0.75), slope);
}

void do_informed(const RunSpec& s, Session& io, RunResult& res) {
    const MarketSpec& mk = s.market;
    InformedScenario sc;
    sc.N_S = s.n_s;
    sc.rho = mk.factor.rho;
    sc.scaling = s.scaling == "finite-market" ? PenaltyScaling::FiniteMarket : PenaltyScaling::MeanField;
    const FixedPointOptions fo = fp_options(s);
    const ScenarioBatch batch = batch_for(s, s.seed, mk.samples);
    const InferenceResult ir = informed_inference_check(sc, mk, batch, fo);
    res.warnings.insert(res.warnings.end(), ir.eq.warnings.begin(), ir.eq.warnings.end());
    io.csv("inference.csv", [&](std::ostream& os) { write_inference_csv(os, ir); });
    io.csv("price.csv", [&](std::ostream& os) { write_price_csv(os, ir.eq.price); });
    io.text("inference.txt", [&](std::ostream& os) {
        os << "max_gap = " << fmt_real(ir.max_gap) << '\n'
           << "threshold_at_worst = " << fmt_real(ir.threshold_at_max) << '\n'
           << "scaling = " << s.scaling << ", N_S = " << s.n_s << '\n'
           << "fixed_point_converged = " << (ir.eq.converged ? "true" : "false") << '\n';
    });
    io.check("fixed_point_converged", ir.eq.converged, "iterations " + std::to_string(ir.eq.iterations));
    io.check("inference_identity", ir.passed, "max gap " + fmt_real(ir.max_gap));
}

void write_manifest(const RunSpec& s, const RunResult& r, double seconds) {
    std::ofstream os(fs::path(s.out_dir) / "manifest.txt", std::ios::binary);
    if (!os) return;
    const char* status = r.status == 0 ? "pass" : (r.status == 1 ? "fail" : "error");
    os << "command = " << to_string(s.command) << '\n'
       << "status = " << status << '\n'
       << "seed = " << s.seed << '\n'
       << "elapsed_seconds = " << fmt_real(seconds) << '\n';
    for (const auto& a : r.artifacts) os << "file = " << a.file << (a.partial ? " (partial)" : "") << '\n';
    for (const auto& c : r.checks) os << "check = " << c.name << ' ' << (c.passed ? "pass" : "fail") << " | " << c.detail << '\n';
    for (const auto& w : r.warnings) os << "warning = " << w << '\n';
    if (!r.error.empty()) os << "error = " << r.error << '\n';
    os << "\n[config]\n" << echo_config(s);
}

} // namespace

RunResult run(const RunSpec& spec, std::ostream* log) {
    RunResult res;
    const auto t0 = std::chrono::steady_clock::now();
    std::unique_ptr<Session> io;
    try {
        io = std::make_unique<Session>(spec, res, log);
        switch (spec.command) {
        case Command::Validate: do_validate(spec, *io); break;
        case Command::Solve: do_solve(spec, *io, res); break;
        case Command::Refine: do_refine(spec, *io); break;
        case Command::Clearing: do_clearing(spec, *io, res); break;
        case Command::Informed: do_informed(spec, *io, res); break;
        }
        res.status = 0;
        for (const auto& c : res.checks)
            if (!c.passed) res.status = 1;
    } catch (const Error& e) {
        res.status = 2;
        res.error = e.what();
        for (auto& a : res.artifacts) a.partial = true;
        if (log) *log << "ERROR " << e.what() << '\n';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (io) write_manifest(spec, res, secs);
    for (const auto& w : res.warnings)
        if (log) *log << "warning: " << w << '\n';
    return res;
}

} // namespace mfeq
