#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mfeq/noise_tree.h"
#include "mfeq/paths.h"

namespace mfeq {

// Tree price: per interval and reached key, m+1 values on the sub-time grid
// of [t_i, t_{i+1}].
struct DiscretePrice {
    GridSpec spec;
    KeyMode mode = KeyMode::FullPrefix;
    std::vector<std::vector<TreeKey>> keys;
    std::vector<std::vector<double>> values;

    int sub_points() const { return spec.m + 1; }
    double* at(int i, int key) { return values[i].data() + static_cast<size_t>(key) * sub_points(); }
    const double* at(int i, int key) const { return values[i].data() + static_cast<size_t>(key) * sub_points(); }

    // exact key or its nearest reached neighbour
    int resolve(int i, const TreeKey& key) const;
    double sup_abs() const;
    // linear interpolation between sub-time points
    double value_at(int i, int key, double t) const;
};

DiscretePrice make_price(const Buckets& buckets, double fill = 0.0);

// price key id for every bucket key, per interval
std::vector<std::vector<int>> key_map(const DiscretePrice& price, const Buckets& buckets);

// Price along every sample path on the fine grid, cadlag at nodes.
PathArray price_path(const DiscretePrice& price, const Buckets& buckets);

// max over intervals, keys and sub-times of |a - b|
double price_metric(const DiscretePrice& a, const DiscretePrice& b);

DiscretePrice blend(const DiscretePrice& a, const DiscretePrice& b, double weight_b);

void write_price_csv(std::ostream& os, const DiscretePrice& price);

} // namespace mfeq
