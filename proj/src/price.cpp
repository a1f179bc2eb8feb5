#include "mfeq/price.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfeq/csv.h"
#include "mfeq/error.h"
#include "mfeq/estimator.h"

namespace mfeq {

int DiscretePrice::resolve(int i, const TreeKey& key) const {
    return nearest_key(keys[i], key);
}

double DiscretePrice::sup_abs() const {
    double s = 0.0;
    for (const auto& v : values)
        for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

double DiscretePrice::value_at(int i, int key, double t) const {
    const double u = (t - spec.node_time(i)) / spec.fine_dt();
    const int k = std::clamp(static_cast<int>(std::floor(u)), 0, spec.m - 1);
    const double w = std::clamp(u - k, 0.0, 1.0);
    const double* v = at(i, key);
    return (1.0 - w) * v[k] + w * v[k + 1];
}

DiscretePrice make_price(const Buckets& buckets, double fill) {
    DiscretePrice p;
    p.spec = buckets.spec;
    p.mode = buckets.mode;
    const int nint = buckets.spec.intervals();
    p.keys.resize(nint);
    p.values.resize(nint);
    for (int i = 0; i < nint; ++i) {
        p.keys[i] = buckets.intervals[i].keys;
        p.values[i].assign(p.keys[i].size() * p.sub_points(), fill);
    }
    return p;
}

std::vector<std::vector<int>> key_map(const DiscretePrice& price, const Buckets& buckets) {
    if (!(price.spec == buckets.spec) || price.mode != buckets.mode) fail(ErrorKind::Shape, "price and buckets disagree on grid or mode");
    const int nint = price.spec.intervals();
    std::vector<std::vector<int>> map(nint);
    for (int i = 0; i < nint; ++i) {
        const auto& bk = buckets.intervals[i].keys;
        map[i].resize(bk.size());
        for (size_t k = 0; k < bk.size(); ++k) map[i][k] = price.resolve(i, bk[k]);
    }
    return map;
}

PathArray price_path(const DiscretePrice& price, const Buckets& buckets) {
    const auto map = key_map(price, buckets);
    const GridSpec& spec = price.spec;
    const int nf = spec.fine_steps();
    PathArray out(buckets.count, nf + 1);
    for (size_t s = 0; s < buckets.count; ++s) {
        for (int j = 0; j <= nf; ++j) {
            const int i = spec.interval_of(j);
            const int k = j - i * spec.m;
            out(s, j) = price.at(i, map[i][buckets.key_id(s, i)])[k];
        }
    }
    return out;
}

double price_metric(const DiscretePrice& a, const DiscretePrice& b) {
    if (!(a.spec == b.spec) || a.mode != b.mode || a.keys != b.keys) fail(ErrorKind::Shape, "price_metric: prices on different key sets");
    double d = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i)
        for (size_t k = 0; k < a.values[i].size(); ++k) d = std::max(d, std::abs(a.values[i][k] - b.values[i][k]));
    return d;
}

DiscretePrice blend(const DiscretePrice& a, const DiscretePrice& b, double wb) {
    if (!(a.spec == b.spec) || a.keys != b.keys) fail(ErrorKind::Shape, "blend: prices on different key sets");
    DiscretePrice out = a;
    for (size_t i = 0; i < a.values.size(); ++i)
        for (size_t k = 0; k < a.values[i].size(); ++k) out.values[i][k] = (1.0 - wb) * a.values[i][k] + wb * b.values[i][k];
    return out;
}

void write_price_csv(std::ostream& os, const DiscretePrice& price) {
    const Lattice lat(price.spec.l);
    os << "interval,key,sub_time,price\n";
    for (size_t i = 0; i < price.keys.size(); ++i) {
        for (size_t k = 0; k < price.keys[i].size(); ++k) {
            const std::string label = price.keys[i][k].label(lat);
            const double* v = price.at(static_cast<int>(i), static_cast<int>(k));
            for (int q = 0; q < price.sub_points(); ++q) {
                const double t = price.spec.fine_time(static_cast<int>(i) * price.spec.m + q);
                os << i << ',' << label << ',' << fmt_real(t) << ',' << fmt_real(v[q]) << '\n';
            }
        }
    }
}

} // namespace mfeq
