#include "mfeq/estimator.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "mfeq/error.h"

namespace mfeq {

namespace {

// monomial index -> (first var, second var); -1 for absent
constexpr int kMono[10][2] = {{-1, -1}, {0, -1}, {1, -1}, {2, -1}, {0, 0},
                              {0, 1},   {0, 2},  {1, 1},  {1, 2},  {2, 2}};

int mono_degree(int k) { return (kMono[k][0] >= 0) + (kMono[k][1] >= 0); }

bool mono_active(int k, const std::array<bool, 3>& active, int degree) {
    if (mono_degree(k) > degree) return false;
    for (int q = 0; q < 2; ++q)
        if (kMono[k][q] >= 0 && !active[kMono[k][q]]) return false;
    return true;
}

inline void features(const double* u, double* phi) {
    phi[0] = 1.0;
    phi[1] = u[0];
    phi[2] = u[1];
    phi[3] = u[2];
    phi[4] = u[0] * u[0];
    phi[5] = u[0] * u[1];
    phi[6] = u[0] * u[2];
    phi[7] = u[1] * u[1];
    phi[8] = u[1] * u[2];
    phi[9] = u[2] * u[2];
}

} // namespace

void StateColumns::load(size_t s, int j, double* z) const {
    z[0] = x ? (*x)(s, j) : 0.0;
    z[1] = b ? (*b)(s, j) : 0.0;
    z[2] = c ? (*c)(s, j) : 0.0;
}

double Fit::eval(const double* z) const {
    if (degree == 0) return coef[0];
    double u[3];
    for (int v = 0; v < 3; ++v) u[v] = active[v] ? (z[v] - mean[v]) / scale[v] : 0.0;
    double phi[10];
    features(u, phi);
    double y = 0.0;
    for (int k = 0; k < 10; ++k) y += coef[k] * phi[k];
    return std::clamp(y, lo, hi);
}

double Fit::mean_se() const {
    if (n <= 0) return 0.0;
    return resid_sd * std::sqrt(static_cast<double>(p) / n);
}

Fit fit_samples(const std::vector<uint32_t>& members, const BasisSpec& basis, const PathArray& target,
                const StateColumns& state, int j) {
    Fit f;
    const size_t n = members.size();
    f.n = static_cast<int>(n);
    if (n == 0) fail(ErrorKind::Estimation, "empty sample set");

    double lo = target(members[0], j), hi = lo, sum = 0.0;
    for (uint32_t s : members) {
        const double y = target(s, j);
        lo = std::min(lo, y);
        hi = std::max(hi, y);
        sum += y;
    }
    f.lo = lo;
    f.hi = hi;
    const double ybar = lo == hi ? lo : std::clamp(sum / n, lo, hi);

    auto constant_fit = [&]() {
        f.degree = 0;
        f.active = {false, false, false};
        f.coef = {};
        f.coef[0] = ybar;
        f.p = 1;
        double ss = 0.0;
        for (uint32_t s : members) ss += (target(s, j) - ybar) * (target(s, j) - ybar);
        f.resid_sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    };

    const bool wants_vars = basis.use[0] || basis.use[1] || basis.use[2];
    if (basis.degree == 0 || !wants_vars) {
        constant_fit();
        return f;
    }

    // standardise the requested variables; drop those without spread
    double z[3];
    std::array<double, 3> s1{0, 0, 0}, s2{0, 0, 0};
    for (uint32_t s : members) {
        state.load(s, j, z);
        for (int v = 0; v < 3; ++v) s1[v] += z[v];
    }
    for (int v = 0; v < 3; ++v) f.mean[v] = s1[v] / n;
    for (uint32_t s : members) {
        state.load(s, j, z);
        for (int v = 0; v < 3; ++v) s2[v] += (z[v] - f.mean[v]) * (z[v] - f.mean[v]);
    }
    for (int v = 0; v < 3; ++v) {
        const double sd = n > 1 ? std::sqrt(s2[v] / (n - 1)) : 0.0;
        f.active[v] = basis.use[v] && sd > 1e-9 * (1.0 + std::abs(f.mean[v]));
        f.scale[v] = f.active[v] ? sd : 1.0;
        if (basis.use[v] && !f.active[v]) f.reduced = true;
    }

    for (int d = basis.degree; d >= 1; --d) {
        std::vector<int> idx;
        for (int k = 0; k < 10; ++k)
            if (mono_active(k, f.active, d)) idx.push_back(k);
        const int p = static_cast<int>(idx.size());
        if (p == 1) break;
        if (n < static_cast<size_t>(2 * p)) {
            f.reduced = true;
            continue;
        }
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd h = Eigen::VectorXd::Zero(p);
        double u[3], phi[10], q[10];
        for (uint32_t s : members) {
            state.load(s, j, z);
            for (int v = 0; v < 3; ++v) u[v] = f.active[v] ? (z[v] - f.mean[v]) / f.scale[v] : 0.0;
            features(u, phi);
            for (int a = 0; a < p; ++a) q[a] = phi[idx[a]];
            const double y = target(s, j);
            for (int a = 0; a < p; ++a) {
                h(a) += q[a] * y;
                for (int b = 0; b <= a; ++b) G(a, b) += q[a] * q[b];
            }
        }
        for (int a = 0; a < p; ++a)
            for (int b = 0; b < a; ++b) G(b, a) = G(a, b);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12)) {
            f.reduced = true;
            continue;
        }
        const Eigen::VectorXd beta = ldlt.solve(h);
        f.coef = {};
        for (int a = 0; a < p; ++a) f.coef[idx[a]] = beta(a);
        f.degree = d;
        f.p = p;
        double ss = 0.0;
        for (uint32_t s : members) {
            state.load(s, j, z);
            for (int v = 0; v < 3; ++v) u[v] = f.active[v] ? (z[v] - f.mean[v]) / f.scale[v] : 0.0;
            features(u, phi);
            double yhat = 0.0;
            for (int a = 0; a < p; ++a) yhat += beta(a) * phi[idx[a]];
            ss += (target(s, j) - yhat) * (target(s, j) - yhat);
        }
        f.resid_sd = n > static_cast<size_t>(p) ? std::sqrt(ss / (n - p)) : 0.0;
        if (d < basis.degree) f.reduced = true;
        return f;
    }
    constant_fit();
    f.reduced = true;
    return f;
}

int nearest_key(const std::vector<TreeKey>& keys, const TreeKey& key) {
    if (keys.empty()) fail(ErrorKind::Estimation, "no keys to fall back on");
    auto it = std::lower_bound(keys.begin(), keys.end(), key);
    if (it != keys.end() && *it == key) return static_cast<int>(it - keys.begin());
    int best = -1;
    size_t best_common = 0;
    long best_dist = 0;
    for (size_t k = 0; k < keys.size(); ++k) {
        const auto& a = keys[k].prefix;
        const auto& b = key.prefix;
        const size_t len = std::min(a.size(), b.size());
        size_t common = 0;
        // the last entry is compared by distance, not equality
        while (common + 1 < len && a[common] == b[common]) ++common;
        const long dist = (a.empty() || b.empty()) ? 0 : std::labs(static_cast<long>(a.back()) - b.back());
        if (best < 0 || common > best_common || (common == best_common && dist < best_dist)) {
            best = static_cast<int>(k);
            best_common = common;
            best_dist = dist;
        }
    }
    return best;
}

std::shared_ptr<const EstimationPlan> make_plan(std::shared_ptr<const Buckets> buckets, int min_count) {
    if (min_count < 1) fail(ErrorKind::Parameter, "minimum bucket count must be >= 1");
    auto plan = std::make_shared<EstimationPlan>();
    plan->buckets = buckets;
    plan->min_count = min_count;
    const GridSpec& spec = buckets->spec;
    const Lattice lat(spec.l);
    const int nint = spec.intervals();
    plan->intervals.resize(nint);
    for (int i = 0; i < nint; ++i) {
        const auto& ib = buckets->intervals[i];
        auto& ip = plan->intervals[i];
        const int nk = static_cast<int>(ib.keys.size());
        ip.keys.resize(nk);
        auto parent_len = [&](const TreeKey& k) { return k.mode == KeyMode::FullPrefix ? static_cast<int>(k.prefix.size()) - 1 : 0; };
        auto same_prefix = [&](const TreeKey& a, const TreeKey& b, int len) {
            if (a.mode == KeyMode::Markov) return true;
            return std::equal(a.prefix.begin(), a.prefix.begin() + len, b.prefix.begin());
        };
        for (int k = 0; k < nk; ++k) {
            if (static_cast<int>(ib.members[k].size()) >= min_count) continue;
            auto& kp = ip.keys[k];
            kp.direct = false;
            ++plan->fallback_keys;
            const TreeKey& key = ib.keys[k];
            const int plen = std::max(0, parent_len(key));
            const int from = key.last(lat);
            double total = 0.0;
            for (int o = 0; o < nk; ++o) {
                if (o == k || static_cast<int>(ib.members[o].size()) < min_count) continue;
                if (!same_prefix(ib.keys[o], key, plen)) continue;
                const double w = transition_prob(spec, from, ib.keys[o].last(lat));
                if (w > 0) {
                    kp.siblings.emplace_back(o, w);
                    total += w;
                }
            }
            if (total > 0) {
                for (auto& [o, w] : kp.siblings) w /= total;
                continue;
            }
            kp.siblings.clear();
            ++plan->pooled_keys;
            // widen the shared prefix until the pool is large enough
            std::vector<uint32_t> pool;
            for (int len = plen; len >= 0; --len) {
                pool.clear();
                for (int o = 0; o < nk; ++o)
                    if (same_prefix(ib.keys[o], key, len)) pool.insert(pool.end(), ib.members[o].begin(), ib.members[o].end());
                if (static_cast<int>(pool.size()) >= min_count || key.mode == KeyMode::Markov) break;
            }
            std::sort(pool.begin(), pool.end());
            kp.pool = static_cast<int>(ip.pools.size());
            ip.pools.push_back(std::move(pool));
        }
    }
    return plan;
}

TimeFits fit_time(const EstimationPlan& plan, int j, const BasisSpec& basis, const PathArray& target,
                  const StateColumns& state, Exec exec) {
    return fit_at(plan, plan.spec().interval_of(j), j, basis, target, state, exec);
}

TimeFits fit_at(const EstimationPlan& plan, int i, int j, const BasisSpec& basis, const PathArray& target,
                const StateColumns& state, Exec exec) {
    const auto& ib = plan.buckets->intervals[i];
    const auto& ip = plan.intervals[i];
    TimeFits tf;
    const int nk = static_cast<int>(ib.keys.size());
    const int np = static_cast<int>(ip.pools.size());
    tf.keys.resize(nk);
    tf.pools.resize(np);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (int t = 0; t < nk + np; ++t) {
        if (t < nk) {
            if (ip.keys[t].direct) tf.keys[t] = fit_samples(ib.members[t], basis, target, state, j);
        } else {
            tf.pools[t - nk] = fit_samples(ip.pools[t - nk], basis, target, state, j);
        }
    }
    return tf;
}

double eval_key(const EstimationPlan& plan, const TimeFits& fits, int i, int key, const double* z) {
    const auto& kp = plan.intervals[i].keys[key];
    if (kp.direct) return fits.keys[key].eval(z);
    if (kp.pool >= 0) return fits.pools[kp.pool].eval(z);
    double y = 0.0;
    bool same = true;
    const double first = fits.keys[kp.siblings.front().first].eval(z);
    for (const auto& [o, w] : kp.siblings) {
        const double v = fits.keys[o].eval(z);
        same = same && v == first;
        y += w * v;
    }
    return same ? first : y;
}

double key_se(const EstimationPlan& plan, const TimeFits& fits, int i, int key) {
    const auto& kp = plan.intervals[i].keys[key];
    if (kp.direct) return fits.keys[key].mean_se();
    if (kp.pool >= 0) return fits.pools[kp.pool].mean_se();
    double v = 0.0;
    for (const auto& [o, w] : kp.siblings) {
        const double se = fits.keys[o].mean_se();
        v += w * w * se * se;
    }
    return std::sqrt(v);
}

void eval_time(const EstimationPlan& plan, const TimeFits& fits, int j, const StateColumns& state,
               PathArray& out, Exec exec) {
    const int i = plan.spec().interval_of(j);
    const long long count = static_cast<long long>(plan.count());
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
    for (long long ss = 0; ss < count; ++ss) {
        const auto s = static_cast<size_t>(ss);
        double z[3];
        state.load(s, j, z);
        out(s, j) = eval_key(plan, fits, i, plan.buckets->key_id(s, i), z);
    }
}

} // namespace mfeq
