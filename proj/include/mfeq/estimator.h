#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mfeq/exec.h"
#include "mfeq/noise_tree.h"
#include "mfeq/paths.h"

namespace mfeq {

// Regression variables: own state X, common noise B, informed factor C.
enum Var { VarX = 0, VarB = 1, VarC = 2 };

struct BasisSpec {
    std::array<bool, 3> use{false, false, false};
    int degree = 0; // total degree, 0..2
};

// Fitted conditional mean on one sample set; features are standardised
// monomials, coef is laid out over all ten degree-2 monomials in (X, B, C).
struct Fit {
    int degree = 0;
    std::array<bool, 3> active{false, false, false};
    std::array<double, 3> mean{0, 0, 0};
    std::array<double, 3> scale{1, 1, 1};
    std::array<double, 10> coef{};
    double lo = 0.0;
    double hi = 0.0;
    double resid_sd = 0.0;
    int n = 0;
    int p = 1;
    bool reduced = false;

    double eval(const double* z) const;
    double mean_se() const;
};

// Per-sample state columns, each a PathArray row-major array (may be null).
struct StateColumns {
    const PathArray* x = nullptr;
    const PathArray* b = nullptr;
    const PathArray* c = nullptr;

    void load(size_t s, int j, double* z) const;
};

Fit fit_samples(const std::vector<uint32_t>& members, const BasisSpec& basis, const PathArray& target,
                const StateColumns& state, int j);

struct KeyPlan {
    bool direct = true;
    std::vector<std::pair<int, double>> siblings; // kernel weights, normalised
    int pool = -1;
};

struct IntervalPlan {
    std::vector<KeyPlan> keys;
    std::vector<std::vector<uint32_t>> pools;
};

// Which sample set feeds the estimate at every key. Buckets under min_count
// borrow a kernel-weighted average of adequate sibling keys, or failing
// that a fit on the pooled parent bucket.
struct EstimationPlan {
    std::shared_ptr<const Buckets> buckets;
    int min_count = 30;
    std::vector<IntervalPlan> intervals;
    size_t fallback_keys = 0;
    size_t pooled_keys = 0;

    const GridSpec& spec() const { return buckets->spec; }
    size_t count() const { return buckets->count; }
};

std::shared_ptr<const EstimationPlan> make_plan(std::shared_ptr<const Buckets> buckets, int min_count);

struct TimeFits {
    std::vector<Fit> keys;
    std::vector<Fit> pools;
};

TimeFits fit_time(const EstimationPlan& plan, int j, const BasisSpec& basis, const PathArray& target,
                  const StateColumns& state, Exec exec);

// Fits column j of the target on the buckets of interval i.
TimeFits fit_at(const EstimationPlan& plan, int i, int j, const BasisSpec& basis, const PathArray& target,
                const StateColumns& state, Exec exec);

double eval_key(const EstimationPlan& plan, const TimeFits& fits, int i, int key, const double* z);

// Standard error of the conditional mean at a key.
double key_se(const EstimationPlan& plan, const TimeFits& fits, int i, int key);

// Evaluates the fits at every sample for column j, writing into out(s, j).
void eval_time(const EstimationPlan& plan, const TimeFits& fits, int j, const StateColumns& state,
               PathArray& out, Exec exec);

// Nearest reached key at interval i for a possibly unseen key.
int nearest_key(const std::vector<TreeKey>& keys, const TreeKey& key);

} // namespace mfeq
