#include "mfeq/paths.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mfeq/csv.h"
#include "mfeq/error.h"
#include "mfeq/rng.h"

namespace mfeq {

void InformedFactorSpec::validate() const {
    if (!std::isfinite(rho) || std::abs(rho) > 1.0) fail(ErrorKind::Parameter, "factor rho must lie in [-1, 1]");
    if (kind == FactorKind::Custom && !transform) fail(ErrorKind::Parameter, "custom factor needs a transform");
}

std::function<double(double, double)> factor_transform(const std::string& name, double param) {
    if (name == "none") return [](double, double c) { return c; };
    if (name == "tanh") return [param](double, double c) { return std::tanh(param * c); };
    if (name == "clip") return [param](double, double c) { return std::clamp(c, -param, param); };
    fail(ErrorKind::Parameter, "unknown factor transform '" + name + "'");
}

void InitLaw::validate() const {
    if (!std::isfinite(a) || !std::isfinite(b)) fail(ErrorKind::Parameter, "initial law parameters must be finite");
    if (kind == Kind::Gaussian && b < 0) fail(ErrorKind::Parameter, "initial law sd must be >= 0");
    if (kind == Kind::Uniform && b < a) fail(ErrorKind::Parameter, "initial law uniform needs a <= b");
}

std::string InitLaw::describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
    case Kind::PointMass: os << "point(" << a << ")"; break;
    case Kind::Gaussian: os << "gaussian(" << a << "," << b << ")"; break;
    case Kind::Uniform: os << "uniform(" << a << "," << b << ")"; break;
    }
    return os.str();
}

double draw_init(const InitLaw& law, CounterStream& rs) {
    switch (law.kind) {
    case InitLaw::Kind::PointMass: return law.a;
    case InitLaw::Kind::Gaussian: return law.a + law.b * rs.normal();
    case InitLaw::Kind::Uniform: return law.a + (law.b - law.a) * rs.uniform();
    }
    return law.a;
}

void brownian_row(CounterStream rs, const std::vector<double>& grid, double* out) {
    out[0] = 0.0;
    for (size_t j = 1; j < grid.size(); ++j) out[j] = out[j - 1] + std::sqrt(grid[j] - grid[j - 1]) * rs.normal();
}

namespace {

NodePaths project_rows(const PathArray& b, const GridSpec& spec, int stride, int n_level, int l_level) {
    NodePaths np;
    np.count = b.rows;
    np.length = (1 << n_level) - 1;
    np.idx.resize(np.count * np.length);
    std::vector<double> xs(np.length);
    for (size_t s = 0; s < b.rows; ++s) {
        for (int i = 0; i < np.length; ++i) xs[i] = b(s, (i + 1) * stride);
        const auto ys = project_path_indices(xs.data(), np.length, l_level);
        std::copy(ys.begin(), ys.end(), np.idx.begin() + s * np.length);
    }
    (void)spec;
    return np;
}

} // namespace

ScenarioBatch sample_batch(const GridSpec& spec, uint64_t seed, size_t count,
                           const InformedFactorSpec& factor, const InitLaws& init, Exec exec) {
    spec.validate();
    factor.validate();
    init.informed.validate();
    init.standard.validate();
    if (count < 1) fail(ErrorKind::Parameter, "sample count must be >= 1");

    ScenarioBatch batch;
    batch.spec = spec;
    batch.seed = seed;
    batch.count = count;
    const int nf = spec.fine_steps();
    batch.fine_grid.resize(nf + 1);
    for (int j = 0; j <= nf; ++j) batch.fine_grid[j] = spec.fine_time(j);

    batch.b = PathArray(count, nf + 1);
    batch.c = PathArray(count, nf + 1);
    batch.w_I = PathArray(count, nf + 1);
    batch.w_S = PathArray(count, nf + 1);
    batch.xi_I.resize(count);
    batch.xi_S.resize(count);

    const double r = factor.rho;
    const double a = factor.convention == FactorConvention::Rho ? r : r * r;
    const double q = std::sqrt(std::max(0.0, 1.0 - r * r));
    const auto& grid = batch.fine_grid;

#pragma omp parallel if (exec == Exec::Parallel)
    {
        std::vector<double> perp(nf + 1);
#pragma omp for schedule(static)
        for (long long ss = 0; ss < static_cast<long long>(count); ++ss) {
            const auto s = static_cast<size_t>(ss);
            brownian_row(CounterStream(seed, s, StreamTag::Common), grid, batch.b.row(s));
            brownian_row(CounterStream(seed, s, StreamTag::Orthogonal), grid, perp.data());
            brownian_row(CounterStream(seed, s, StreamTag::IdioInformed), grid, batch.w_I.row(s));
            brownian_row(CounterStream(seed, s, StreamTag::IdioStandard), grid, batch.w_S.row(s));
            double* cr = batch.c.row(s);
            const double* br = batch.b.row(s);
            for (int j = 0; j <= nf; ++j) {
                cr[j] = q == 0.0 ? a * br[j] : a * br[j] + q * perp[j];
                if (factor.kind == FactorKind::Custom) cr[j] = factor.transform(grid[j], cr[j]);
            }
            CounterStream ri(seed, s, StreamTag::InitInformed);
            CounterStream rs(seed, s, StreamTag::InitStandard);
            batch.xi_I[s] = draw_init(init.informed, ri);
            batch.xi_S[s] = draw_init(init.standard, rs);
        }
    }
    batch.node_path = project_rows(batch.b, spec, spec.m, spec.n, spec.l);
    return batch;
}

NodePaths discretize_at_level(const ScenarioBatch& batch, int n_level, int l_level) {
    const GridSpec& spec = batch.spec;
    if (n_level < 1 || n_level > spec.n) fail(ErrorKind::Input, "level must satisfy 1 <= n' <= batch depth");
    if (l_level < 0) fail(ErrorKind::Input, "level resolution must be >= 0");
    if (batch.fine_points() != spec.fine_steps() + 1) fail(ErrorKind::Input, "batch fine grid does not match its spec");
    const int stride = spec.m << (spec.n - n_level);
    return project_rows(batch.b, spec, stride, n_level, l_level);
}

NodePaths discretize_at_level(const ScenarioBatch& batch, int n_level) {
    return discretize_at_level(batch, n_level, batch.spec.l);
}

ScenarioBatch view_at_level(const ScenarioBatch& batch, int n_level, int l_level) {
    ScenarioBatch v = batch;
    v.node_path = discretize_at_level(batch, n_level, l_level);
    v.spec.n = n_level;
    v.spec.l = l_level;
    v.spec.m = batch.spec.m << (batch.spec.n - n_level);
    return v;
}

namespace {

constexpr char kMagic[8] = {'M', 'F', 'E', 'Q', 'B', 'A', 'T', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail(ErrorKind::Data, "truncated batch file");
    return v;
}

void put_columns(std::ostream& os, const PathArray& a) {
    for (int j = 0; j < a.cols; ++j)
        for (size_t s = 0; s < a.rows; ++s) put(os, a(s, j));
}

PathArray get_columns(std::istream& is, size_t rows, int cols) {
    PathArray a(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (size_t s = 0; s < rows; ++s) a(s, j) = get<double>(is);
    return a;
}

} // namespace

// Layout: magic, int32 n, l, m, float64 T, uint64 seed, uint64 count, then
// column-major float64 arrays b, c, w_I, w_S, xi_I, xi_S and int32 node paths.
void write_batch(const std::string& path, const ScenarioBatch& batch) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::Input, "cannot open " + path + " for writing");
    os.write(kMagic, sizeof kMagic);
    put<int32_t>(os, batch.spec.n);
    put<int32_t>(os, batch.spec.l);
    put<int32_t>(os, batch.spec.m);
    put<double>(os, batch.spec.T);
    put<uint64_t>(os, batch.seed);
    put<uint64_t>(os, batch.count);
    put_columns(os, batch.b);
    put_columns(os, batch.c);
    put_columns(os, batch.w_I);
    put_columns(os, batch.w_S);
    for (double x : batch.xi_I) put(os, x);
    for (double x : batch.xi_S) put(os, x);
    const auto& np = batch.node_path;
    for (int i = 0; i < np.length; ++i)
        for (size_t s = 0; s < np.count; ++s) put<int32_t>(os, np.row(s)[i]);
    if (!os) fail(ErrorKind::Input, "write failed for " + path);
}

ScenarioBatch read_batch(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Input, "cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) fail(ErrorKind::Data, "not a batch file: " + path);
    ScenarioBatch b;
    b.spec.n = get<int32_t>(is);
    b.spec.l = get<int32_t>(is);
    b.spec.m = get<int32_t>(is);
    b.spec.T = get<double>(is);
    b.spec.validate();
    b.seed = get<uint64_t>(is);
    b.count = get<uint64_t>(is);
    const int cols = b.spec.fine_steps() + 1;
    b.fine_grid.resize(cols);
    for (int j = 0; j < cols; ++j) b.fine_grid[j] = b.spec.fine_time(j);
    b.b = get_columns(is, b.count, cols);
    b.c = get_columns(is, b.count, cols);
    b.w_I = get_columns(is, b.count, cols);
    b.w_S = get_columns(is, b.count, cols);
    b.xi_I.resize(b.count);
    b.xi_S.resize(b.count);
    for (auto& x : b.xi_I) x = get<double>(is);
    for (auto& x : b.xi_S) x = get<double>(is);
    auto& np = b.node_path;
    np.count = b.count;
    np.length = b.spec.intervals() - 1;
    np.idx.resize(np.count * np.length);
    for (int i = 0; i < np.length; ++i)
        for (size_t s = 0; s < np.count; ++s) np.idx[s * np.length + i] = get<int32_t>(is);
    return b;
}

void write_batch_summary_csv(std::ostream& os, const ScenarioBatch& batch) {
    os << "t,mean_b,var_b,mean_c,var_c,mean_w_I,var_w_I,mean_w_S,var_w_S\n";
    const double n = static_cast<double>(batch.count);
    for (int j = 0; j < batch.fine_points(); ++j) {
        os << fmt_real(batch.fine_grid[j]);
        for (const PathArray* a : {&batch.b, &batch.c, &batch.w_I, &batch.w_S}) {
            double s1 = 0.0, s2 = 0.0;
            for (size_t s = 0; s < batch.count; ++s) s1 += (*a)(s, j);
            const double mean = s1 / n;
            for (size_t s = 0; s < batch.count; ++s) s2 += ((*a)(s, j) - mean) * ((*a)(s, j) - mean);
            os << ',' << fmt_real(mean) << ',' << fmt_real(batch.count > 1 ? s2 / (n - 1) : 0.0);
        }
        os << '\n';
    }
}

} // namespace mfeq
