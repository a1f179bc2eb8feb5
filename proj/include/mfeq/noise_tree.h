#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "mfeq/exec.h"

namespace mfeq {

struct GridSpec {
    int n = 2;      // time depth, 2^n intervals
    int l = 1;      // space resolution, step 2^-l, bound 2^l
    int m = 8;      // sub-steps per interval
    double T = 1.0;

    void validate() const;

    int intervals() const { return 1 << n; }
    int fine_steps() const { return intervals() * m; }
    double interval_length() const { return T / intervals(); }
    double fine_dt() const { return interval_length() / m; }

    // t_i = i * (T / 2^n)
    double node_time(int i) const { return i * interval_length(); }
    double fine_time(int j) const;

    // interval holding fine index j; t = T belongs to the last interval
    int interval_of(int j) const;

    bool operator==(const GridSpec&) const = default;
};

class Lattice {
  public:
    explicit Lattice(int l);

    int l() const { return l_; }
    double step() const { return step_; }
    double bound() const { return bound_; }
    int size() const { return size_; }
    int zero_index() const { return size_ / 2; }

    double value(int idx) const { return -bound_ + idx * step_; }
    bool contains(int idx) const { return idx >= 0 && idx < size_; }

    // index of an exact lattice value; throws a data error otherwise
    int index_of(double v) const;

    std::vector<double> points() const;

  private:
    int l_;
    double step_;
    double bound_;
    int size_;
};

double project_scalar(double x, int l);
int project_index(double x, int l);

std::vector<double> project_path(const std::vector<double>& xs, int l);
std::vector<int> project_path_indices(const double* xs, int len, int l);

double normal_cdf(double x);

// P(project(v + dB) = w) with dB ~ N(0, T / 2^n)
double transition_prob(const GridSpec& spec, int from, int to);

struct TransitionKernel {
    GridSpec spec;
    int size = 0;
    std::vector<double> matrix; // row-major, size x size

    double operator()(int from, int to) const { return matrix[static_cast<size_t>(from) * size + to]; }
};

TransitionKernel transition_matrix(const GridSpec& spec);

enum class KeyMode { FullPrefix, Markov };

const char* to_string(KeyMode mode);
KeyMode key_mode_from_string(const std::string& s);

struct TreeKey {
    KeyMode mode = KeyMode::FullPrefix;
    int interval = 0;
    std::vector<int> prefix;

    auto operator<=>(const TreeKey&) const = default;
    bool operator==(const TreeKey&) const = default;

    // lattice index of V_i (interval 0 maps to the zero node)
    int last(const Lattice& lat) const;
    std::string label(const Lattice& lat) const;
};

// Per-sample node paths, stored row-major as lattice indices.
struct NodePaths {
    size_t count = 0;
    int length = 0;
    std::vector<int> idx;

    const int* row(size_t s) const { return idx.data() + s * length; }
};

NodePaths node_paths_from_values(const std::vector<std::vector<double>>& values, int l);

struct IntervalBuckets {
    std::vector<TreeKey> keys;                  // sorted
    std::vector<std::vector<uint32_t>> members; // ascending sample indices
};

struct Buckets {
    GridSpec spec;
    KeyMode mode = KeyMode::FullPrefix;
    size_t count = 0;
    std::vector<IntervalBuckets> intervals;
    std::vector<int> key_of; // count x intervals

    int key_id(size_t s, int i) const { return key_of[s * intervals.size() + i]; }
    int find(int i, const TreeKey& key) const;
};

TreeKey make_key(KeyMode mode, int interval, const int* path, const Lattice& lat);

Buckets bucket_samples(const NodePaths& paths, const GridSpec& spec, KeyMode mode,
                       Exec exec = Exec::Parallel);

} // namespace mfeq
