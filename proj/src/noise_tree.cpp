#include "mfeq/noise_tree.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mfeq/error.h"

namespace mfeq {

void GridSpec::validate() const {
    if (n < 1) fail(ErrorKind::Parameter, "grid n must be >= 1");
    if (n > 20) fail(ErrorKind::Parameter, "grid n too large");
    if (l < 0) fail(ErrorKind::Parameter, "grid l must be >= 0");
    if (l > 12) fail(ErrorKind::Parameter, "grid l too large");
    if (m < 1) fail(ErrorKind::Parameter, "grid m must be >= 1");
    if (!(T > 0.0) || !std::isfinite(T)) fail(ErrorKind::Parameter, "grid T must be > 0");
}

double GridSpec::fine_time(int j) const {
    const int i = j / m;
    const int k = j % m;
    return node_time(i) + k * fine_dt();
}

int GridSpec::interval_of(int j) const {
    return std::min(j / m, intervals() - 1);
}

Lattice::Lattice(int l) : l_(l) {
    if (l < 0) fail(ErrorKind::Parameter, "lattice resolution must be >= 0");
    step_ = std::ldexp(1.0, -l);
    bound_ = std::ldexp(1.0, l);
    size_ = (1 << (2 * l + 1)) + 1;
}

int Lattice::index_of(double v) const {
    if (!std::isfinite(v)) fail(ErrorKind::Data, "non-finite lattice value");
    const double k = (v + bound_) / step_;
    const double r = std::nearbyint(k);
    if (r != k || r < 0 || r >= size_) {
        std::ostringstream os;
        os << "value " << v << " is not on the lattice with l=" << l_;
        fail(ErrorKind::Data, os.str());
    }
    return static_cast<int>(r);
}

std::vector<double> Lattice::points() const {
    std::vector<double> p(size_);
    for (int i = 0; i < size_; ++i) p[i] = value(i);
    return p;
}

double project_scalar(double x, int l) {
    if (!std::isfinite(x)) fail(ErrorKind::Input, "project_scalar: non-finite input");
    if (l < 0) fail(ErrorKind::Parameter, "project_scalar: l must be >= 0");
    const double bound = std::ldexp(1.0, l);
    if (std::abs(x) <= bound) return std::ldexp(std::floor(std::ldexp(x, l)), -l);
    return x > 0 ? bound : -bound;
}

int project_index(double x, int l) {
    const double y = project_scalar(x, l);
    const double bound = std::ldexp(1.0, l);
    return static_cast<int>(std::ldexp(y + bound, l));
}

std::vector<double> project_path(const std::vector<double>& xs, int l) {
    if (xs.empty()) fail(ErrorKind::Input, "project_path: empty input");
    std::vector<double> ys(xs.size());
    ys[0] = project_scalar(xs[0], l);
    for (size_t k = 1; k < xs.size(); ++k) {
        if (!std::isfinite(xs[k])) fail(ErrorKind::Input, "project_path: non-finite input");
        ys[k] = project_scalar(ys[k - 1] + xs[k] - xs[k - 1], l);
    }
    return ys;
}

std::vector<int> project_path_indices(const double* xs, int len, int l) {
    if (len < 1) fail(ErrorKind::Input, "project_path: empty input");
    std::vector<int> out(len);
    const double bound = std::ldexp(1.0, l);
    double y = project_scalar(xs[0], l);
    out[0] = static_cast<int>(std::ldexp(y + bound, l));
    for (int k = 1; k < len; ++k) {
        y = project_scalar(y + xs[k] - xs[k - 1], l);
        out[k] = static_cast<int>(std::ldexp(y + bound, l));
    }
    return out;
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double transition_prob(const GridSpec& spec, int from, int to) {
    const Lattice lat(spec.l);
    if (!lat.contains(from) || !lat.contains(to)) fail(ErrorKind::Input, "transition_prob: index off lattice");
    const double s = std::sqrt(spec.interval_length());
    const double v = lat.value(from);
    const double w = lat.value(to);
    const int top = lat.size() - 1;
    // floor cells are [w, w+step); the bottom node also takes everything below,
    // the top node everything at or above the bound
    if (to == top) return normal_cdf((v - lat.bound()) / s);
    const double hi = normal_cdf((w + lat.step() - v) / s);
    if (to == 0) return hi;
    return hi - normal_cdf((w - v) / s);
}

TransitionKernel transition_matrix(const GridSpec& spec) {
    spec.validate();
    const Lattice lat(spec.l);
    TransitionKernel k;
    k.spec = spec;
    k.size = lat.size();
    k.matrix.assign(static_cast<size_t>(k.size) * k.size, 0.0);
    for (int v = 0; v < k.size; ++v) {
        double* row = k.matrix.data() + static_cast<size_t>(v) * k.size;
        for (int w = 0; w < k.size; ++w) row[w] = transition_prob(spec, v, w);
    }
    return k;
}

const char* to_string(KeyMode mode) {
    return mode == KeyMode::FullPrefix ? "prefix" : "markov";
}

KeyMode key_mode_from_string(const std::string& s) {
    if (s == "prefix" || s == "full" || s == "fullprefix") return KeyMode::FullPrefix;
    if (s == "markov") return KeyMode::Markov;
    fail(ErrorKind::Parameter, "unknown key mode '" + s + "'");
}

int TreeKey::last(const Lattice& lat) const {
    if (prefix.empty()) return lat.zero_index();
    return prefix.back();
}

std::string TreeKey::label(const Lattice& lat) const {
    std::ostringstream os;
    os.precision(17);
    if (prefix.empty()) return "root";
    for (size_t k = 0; k < prefix.size(); ++k) {
        if (k) os << '|';
        os << lat.value(prefix[k]);
    }
    return os.str();
}

NodePaths node_paths_from_values(const std::vector<std::vector<double>>& values, int l) {
    const Lattice lat(l);
    NodePaths np;
    np.count = values.size();
    np.length = values.empty() ? 0 : static_cast<int>(values[0].size());
    np.idx.reserve(np.count * np.length);
    for (const auto& row : values) {
        if (static_cast<int>(row.size()) != np.length) fail(ErrorKind::Data, "ragged node paths");
        for (double v : row) np.idx.push_back(lat.index_of(v));
    }
    return np;
}

TreeKey make_key(KeyMode mode, int interval, const int* path, const Lattice& lat) {
    TreeKey key;
    key.mode = mode;
    key.interval = interval;
    if (mode == KeyMode::FullPrefix) {
        key.prefix.assign(path, path + interval);
    } else {
        key.prefix.push_back(interval == 0 ? lat.zero_index() : path[interval - 1]);
    }
    return key;
}

int Buckets::find(int i, const TreeKey& key) const {
    const auto& keys = intervals[i].keys;
    auto it = std::lower_bound(keys.begin(), keys.end(), key);
    if (it == keys.end() || !(*it == key)) return -1;
    return static_cast<int>(it - keys.begin());
}

namespace {

void bucket_interval(const NodePaths& paths, const Lattice& lat, KeyMode mode, int i,
                     IntervalBuckets& out, std::vector<int>& key_of, int nint) {
    const size_t count = paths.count;
    std::vector<uint32_t> order(count);
    std::iota(order.begin(), order.end(), 0u);
    auto span = [&](uint32_t s) -> std::pair<const int*, const int*> {
        const int* r = paths.row(s);
        if (i == 0) return {r, r};
        if (mode == KeyMode::FullPrefix) return {r, r + i};
        return {r + i - 1, r + i};
    };
    std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        auto [a0, a1] = span(a);
        auto [b0, b1] = span(b);
        return std::lexicographical_compare(a0, a1, b0, b1);
    });
    size_t k = 0;
    while (k < count) {
        size_t e = k + 1;
        auto [k0, k1] = span(order[k]);
        while (e < count) {
            auto [e0, e1] = span(order[e]);
            if (!std::equal(k0, k1, e0, e1)) break;
            ++e;
        }
        const int id = static_cast<int>(out.keys.size());
        out.keys.push_back(make_key(mode, i, paths.row(order[k]), lat));
        std::vector<uint32_t> mem(order.begin() + k, order.begin() + e);
        for (uint32_t s : mem) key_of[static_cast<size_t>(s) * nint + i] = id;
        out.members.push_back(std::move(mem));
        k = e;
    }
}

} // namespace

Buckets bucket_samples(const NodePaths& paths, const GridSpec& spec, KeyMode mode, Exec exec) {
    spec.validate();
    const Lattice lat(spec.l);
    const int nint = spec.intervals();
    if (paths.length != nint - 1) fail(ErrorKind::Data, "node path length must be 2^n - 1");
    for (int v : paths.idx) {
        if (!lat.contains(v)) fail(ErrorKind::Data, "node path entry off the lattice");
    }
    Buckets b;
    b.spec = spec;
    b.mode = mode;
    b.count = paths.count;
    b.intervals.resize(nint);
    b.key_of.assign(paths.count * nint, -1);
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
    for (int i = 0; i < nint; ++i) bucket_interval(paths, lat, mode, i, b.intervals[i], b.key_of, nint);
    return b;
}

} // namespace mfeq
