#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfeq/exec.h"
#include "mfeq/noise_tree.h"

namespace mfeq {

// Row-major samples x times.
struct PathArray {
    size_t rows = 0;
    int cols = 0;
    std::vector<double> data;

    PathArray() = default;
    PathArray(size_t r, int c, double fill = 0.0) : rows(r), cols(c), data(r * static_cast<size_t>(c), fill) {}

    double* row(size_t s) { return data.data() + s * cols; }
    const double* row(size_t s) const { return data.data() + s * cols; }
    double& operator()(size_t s, int j) { return data[s * cols + j]; }
    double operator()(size_t s, int j) const { return data[s * cols + j]; }
};

enum class FactorKind { CorrelatedBM, Custom };
enum class FactorConvention { Rho, RhoSquared };

struct InformedFactorSpec {
    FactorKind kind = FactorKind::CorrelatedBM;
    double rho = 0.5;
    FactorConvention convention = FactorConvention::Rho;
    std::string transform_name = "none";
    double transform_param = 1.0;
    std::function<double(double t, double c)> transform; // used when kind == Custom

    void validate() const;
};

// Named pathwise maps for the Custom factor kind.
std::function<double(double, double)> factor_transform(const std::string& name, double param);

struct InitLaw {
    enum class Kind { PointMass, Gaussian, Uniform };
    Kind kind = Kind::PointMass;
    double a = 0.0; // point value, mean, or lower end
    double b = 0.0; // standard deviation or upper end

    void validate() const;
    std::string describe() const;
};

struct InitLaws {
    InitLaw informed;
    InitLaw standard;
};

struct ScenarioBatch {
    GridSpec spec;
    uint64_t seed = 0;
    size_t count = 0;
    std::vector<double> fine_grid;
    PathArray b, c, w_I, w_S;
    std::vector<double> xi_I, xi_S;
    NodePaths node_path;

    int fine_points() const { return static_cast<int>(fine_grid.size()); }
};

class CounterStream;

double draw_init(const InitLaw& law, CounterStream& rs);
// Brownian path on the grid from one stream, starting at 0.
void brownian_row(CounterStream rs, const std::vector<double>& grid, double* out);

ScenarioBatch sample_batch(const GridSpec& spec, uint64_t seed, size_t count,
                           const InformedFactorSpec& factor, const InitLaws& init,
                           Exec exec = Exec::Parallel);

// Node paths of a coarser dyadic level read off the same common-noise paths.
NodePaths discretize_at_level(const ScenarioBatch& batch, int n_level, int l_level);
NodePaths discretize_at_level(const ScenarioBatch& batch, int n_level);

// Same paths viewed on a coarser tree: n' intervals with m * 2^(n - n') sub-steps.
ScenarioBatch view_at_level(const ScenarioBatch& batch, int n_level, int l_level);

void write_batch(const std::string& path, const ScenarioBatch& batch);
ScenarioBatch read_batch(const std::string& path);

void write_batch_summary_csv(std::ostream& os, const ScenarioBatch& batch);

} // namespace mfeq
