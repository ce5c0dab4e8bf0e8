#pragma once

// Euler-Maruyama ensemble for  dX = -(grad V + u1 grad alpha + u2 rho_s^{-1} perp grad phi) dt + sqrt(2D) dW
// with mirror reflection at the walls, plus binned flux estimation.
//
// Particles are split into fixed chunks of kChunk; chunk c draws from its own
// mt19937_64 seeded with splitmix64(seed + c * golden), so results do not
// depend on the thread count, and per-chunk statistics are merged in chunk
// order.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include "fpcirc/field_io.hpp"
#include "fpcirc/optimal_control.hpp"
#include "fpcirc/problem.hpp"

namespace fpcirc {

inline constexpr std::size_t kChunk = 4096;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t chunk_seed(std::uint64_t seed, std::size_t chunk) {
    return splitmix64(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(chunk + 1));
}

/// Worker count: FPCIRC_THREADS if set (>= 1), else the hardware concurrency.
inline unsigned worker_threads() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FPCIRC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(std::min<long>(v, 1024));
    }
    return hw;
}

/// Runs fn(chunk) for every chunk on up to worker_threads() threads.
inline void for_each_chunk(std::size_t chunks, const std::function<void(std::size_t)>& fn) {
    const unsigned nt = static_cast<unsigned>(std::min<std::size_t>(worker_threads(), chunks));
    if (nt <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nt; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t c = t; c < chunks; c += nt) fn(c);
        });
    for (auto& th : pool) th.join();
}

struct ParticleEnsemble {
    double L = 1.0;
    std::vector<double> x, y;
    double t = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::mt19937_64> engines;              ///< one per chunk
    std::vector<std::normal_distribution<double>> normals;

    std::size_t size() const noexcept { return x.size(); }
    std::size_t chunks() const noexcept { return engines.size(); }
    bool inside() const {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!(std::abs(x[i]) <= L) || !(std::abs(y[i]) <= L)) return false;
        return true;
    }
};

/// Mirror reflection into [-L, L], repeated until inside.
inline double reflect(double v, double L) {
    while (v > L || v < -L) v = v > L ? 2.0 * L - v : -2.0 * L - v;
    return v;
}

/// Mixture sample truncated to the box by rejection.
inline ParticleEnsemble sample_initial(const InitialDensitySpec& spec, std::size_t N, std::uint64_t seed, double L,
                                       double t0 = 0.0) {
    spec.validate();
    if (N < 1) throw ConfigError("sample_initial: need at least one particle");
    ParticleEnsemble e;
    e.L = L;
    e.t = t0;
    e.seed = seed;
    e.x.resize(N);
    e.y.resize(N);
    const std::size_t chunks = (N + kChunk - 1) / kChunk;
    for (std::size_t c = 0; c < chunks; ++c) e.engines.emplace_back(chunk_seed(seed, c));
    e.normals.resize(chunks);
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& comp : spec.components) cdf.push_back(acc += comp.weight);
    std::vector<std::size_t> rejected(chunks, 0);
    std::vector<char> overflow(chunks, 0);
    for_each_chunk(chunks, [&](std::size_t c) {
        auto& rng = e.engines[c];
        auto& normal = e.normals[c];
        std::uniform_real_distribution<double> uni(0.0, acc);
        const std::size_t lo = c * kChunk, hi = std::min(N, lo + kChunk);
        for (std::size_t i = lo; i < hi; ++i) {
            for (;;) {
                const double r = uni(rng);
                const std::size_t k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
                const auto& comp = spec.components[std::min(k, cdf.size() - 1)];
                const double px = comp.mean.x() + std::sqrt(comp.var.x()) * normal(rng);
                const double py = comp.mean.y() + std::sqrt(comp.var.y()) * normal(rng);
                if (std::abs(px) <= L && std::abs(py) <= L) {
                    e.x[i] = px;
                    e.y[i] = py;
                    break;
                }
                // a runaway rejection loop means the mixture barely overlaps the box
                if (++rejected[c] > 2 * (hi - lo) + 64) {
                    overflow[c] = 1;
                    return;
                }
            }
        }
    });
    std::size_t total = 0;
    for (auto r : rejected) total += r;
    const bool any_overflow = std::find(overflow.begin(), overflow.end(), 1) != overflow.end();
    if (any_overflow || static_cast<double>(total) > 0.5 * static_cast<double>(N + total))
        throw ConfigError("sample_initial: rejection rate above 0.5; the initial density barely overlaps the domain");
    return e;
}

/// Drift ingredients evaluated at particle positions.
struct ParticleDrift {
    std::function<Vec2(double, double)> grad_V;
    std::function<Vec2(double, double)> grad_alpha;
    std::function<Vec2(double, double)> circulation;
    double D = 1.0;
};

inline ParticleDrift make_particle_drift(const Problem& p) {
    const Potential V = p.potential;
    return {[V](double x, double y) { return V.gradient_at(x, y); }, p.shapes.grad_alpha, p.shapes.circulation, p.D};
}

/// Per-chunk sums of trailing-window displacement statistics.
struct FluxAccumulator {
    int nx = 0, ny = 0;
    double L = 1.0;
    std::vector<double> sum_vx, sum_vy, sum_vx2, sum_vy2;
    std::vector<long> count;
    double am_sum = 0.0, am_sum2 = 0.0;  ///< x v_y - y v_x over |X| <= am_radius
    long am_count = 0;
    double am_radius = 2.0;

    FluxAccumulator() = default;
    FluxAccumulator(int nx_, int ny_, double L_)
        : nx(nx_), ny(ny_), L(L_), sum_vx(cells(), 0.0), sum_vy(cells(), 0.0), sum_vx2(cells(), 0.0),
          sum_vy2(cells(), 0.0), count(cells(), 0) {}

    std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t cell_of(double x, double y) const {
        const int i = std::clamp(static_cast<int>((x + L) / (2.0 * L) * nx), 0, nx - 1);
        const int j = std::clamp(static_cast<int>((y + L) / (2.0 * L) * ny), 0, ny - 1);
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(j);
    }
    void add(double x, double y, double vx, double vy) {
        const std::size_t c = cell_of(x, y);
        sum_vx[c] += vx;
        sum_vy[c] += vy;
        sum_vx2[c] += vx * vx;
        sum_vy2[c] += vy * vy;
        ++count[c];
        if (x * x + y * y <= am_radius * am_radius) {
            const double l = x * vy - y * vx;
            am_sum += l;
            am_sum2 += l * l;
            ++am_count;
        }
    }
    void merge(const FluxAccumulator& o) {
        for (std::size_t c = 0; c < cells(); ++c) {
            sum_vx[c] += o.sum_vx[c];
            sum_vy[c] += o.sum_vy[c];
            sum_vx2[c] += o.sum_vx2[c];
            sum_vy2[c] += o.sum_vy2[c];
            count[c] += o.count[c];
        }
        am_sum += o.am_sum;
        am_sum2 += o.am_sum2;
        am_count += o.am_count;
    }
};

/// One Euler-Maruyama step for all particles; with `acc` set, each particle's
/// velocity sample (X_new - X_old)/dt is binned by its starting position.
inline void em_step(ParticleEnsemble& e, double u1, double u2, double dt, const ParticleDrift& drift,
                    std::vector<FluxAccumulator>* acc = nullptr) {
    if (!(dt > 0.0)) throw ConfigError("em_step: dt must be positive");
    const double amp = std::sqrt(2.0 * drift.D * dt);
    const std::size_t N = e.size();
    for_each_chunk(e.chunks(), [&](std::size_t c) {
        auto& rng = e.engines[c];
        auto& normal = e.normals[c];
        const std::size_t lo = c * kChunk, hi = std::min(N, lo + kChunk);
        for (std::size_t i = lo; i < hi; ++i) {
            const double x = e.x[i], y = e.y[i];
            Vec2 b = -drift.grad_V(x, y);
            if (u1 != 0.0) b -= u1 * drift.grad_alpha(x, y);
            if (u2 != 0.0) b -= u2 * drift.circulation(x, y);
            const double xn = reflect(x + dt * b.x() + amp * normal(rng), e.L);
            const double yn = reflect(y + dt * b.y() + amp * normal(rng), e.L);
            if (acc) (*acc)[c].add(x, y, (xn - x) / dt, (yn - y) / dt);
            e.x[i] = xn;
            e.y[i] = yn;
        }
    });
    e.t += dt;
}

struct FluxEstimate {
    int nx = 0, ny = 0;
    double L = 1.0;
    long particles = 0;
    std::vector<double> density;  ///< final-time histogram / (N * cell area)
    std::vector<double> vx, vy;   ///< mean velocity, NaN where masked
    std::vector<double> se_vx, se_vy;
    std::vector<long> count;      ///< velocity samples per cell
    std::vector<bool> masked;
    double am_mean = 0.0;
    double am_stderr = 0.0;
    long am_count = 0;

    double cell_x(int i) const { return -L + (i + 0.5) * 2.0 * L / nx; }
    double cell_y(int j) const { return -L + (j + 0.5) * 2.0 * L / ny; }
    double cell_area() const { return 4.0 * L * L / (nx * ny); }
    /// angular-momentum z statistic: mean / standard error
    double am_z() const { return am_stderr > 0.0 ? am_mean / am_stderr : 0.0; }
};

struct SimulationSettings {
    int coarse_nx = 20;
    int coarse_ny = 20;
    int window = 1;     ///< trailing steps feeding the velocity means
    int min_count = 10;
};

/// Advances the ensemble through U and estimates the flux from the last
/// `window` steps.
inline FluxEstimate simulate(ParticleEnsemble& e, const ControlTrajectory& U, const ParticleDrift& drift,
                             const SimulationSettings& s = {}) {
    if (s.window < 1 || s.window > U.K()) throw ConfigError("simulate: trailing window outside [1, K]");
    std::vector<FluxAccumulator> acc(e.chunks(), FluxAccumulator(s.coarse_nx, s.coarse_ny, e.L));
    for (int k = 0; k < U.K(); ++k)
        em_step(e, U.u1[k], U.u2[k], U.dt, drift, k >= U.K() - s.window ? &acc : nullptr);

    FluxAccumulator total(s.coarse_nx, s.coarse_ny, e.L);
    for (const auto& a : acc) total.merge(a);

    FluxEstimate f;
    f.nx = s.coarse_nx;
    f.ny = s.coarse_ny;
    f.L = e.L;
    f.particles = static_cast<long>(e.size());
    const std::size_t cells = total.cells();
    f.density.assign(cells, 0.0);
    for (std::size_t i = 0; i < e.size(); ++i) f.density[total.cell_of(e.x[i], e.y[i])] += 1.0;
    for (auto& d : f.density) d /= static_cast<double>(e.size()) * f.cell_area();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    f.vx.assign(cells, nan);
    f.vy.assign(cells, nan);
    f.se_vx.assign(cells, nan);
    f.se_vy.assign(cells, nan);
    f.count = total.count;
    f.masked.assign(cells, true);
    for (std::size_t c = 0; c < cells; ++c) {
        const long n = total.count[c];
        if (n < s.min_count || n < 2) continue;
        f.masked[c] = false;
        const double dn = static_cast<double>(n);
        f.vx[c] = total.sum_vx[c] / dn;
        f.vy[c] = total.sum_vy[c] / dn;
        f.se_vx[c] = std::sqrt(std::max(0.0, (total.sum_vx2[c] / dn - f.vx[c] * f.vx[c]) / (dn - 1.0)));
        f.se_vy[c] = std::sqrt(std::max(0.0, (total.sum_vy2[c] / dn - f.vy[c] * f.vy[c]) / (dn - 1.0)));
    }
    f.am_count = total.am_count;
    if (total.am_count > 1) {
        const double n = static_cast<double>(total.am_count);
        f.am_mean = total.am_sum / n;
        f.am_stderr = std::sqrt(std::max(0.0, (total.am_sum2 / n - f.am_mean * f.am_mean) / (n - 1.0)));
    }
    return f;
}

/// CSV with columns x,y,density,vx,vy,count; masked cells carry nan velocities.
inline void write_flux_csv(std::ostream& os, const FluxEstimate& f) {
    os << csv_precision << "x,y,density,vx,vy,count\n";
    for (int i = 0; i < f.nx; ++i)
        for (int j = 0; j < f.ny; ++j) {
            const std::size_t c = static_cast<std::size_t>(i) * static_cast<std::size_t>(f.ny) + static_cast<std::size_t>(j);
            os << f.cell_x(i) << ',' << f.cell_y(j) << ',' << f.density[c] << ',';
            if (f.masked[c])
                os << "nan,nan,";
            else
                os << f.vx[c] << ',' << f.vy[c] << ',';
            os << f.count[c] << '\n';
        }
}

namespace detail {

/// Overlap of the dual interval of node k (spacing h on [-L, L]) with coarse cell c of width H.
inline double dual_overlap(int k, double h, int c, double H, double L) {
    const double lo = std::max(-L, -L + (k - 0.5) * h), hi = std::min(L, -L + (k + 0.5) * h);
    const double clo = -L + c * H, chi = clo + H;
    return std::max(0.0, std::min(hi, chi) - std::max(lo, clo));
}

}  // namespace detail

/// Probability mass of a node field in each coarse cell: each node's dual
/// cell is split among the coarse cells it overlaps.
inline std::vector<double> coarse_cell_mass(const ScalarField& rho, int cnx, int cny) {
    const Grid2D& g = rho.grid;
    const double Hx = 2.0 * g.L / cnx, Hy = 2.0 * g.L / cny;
    std::vector<double> mass(static_cast<std::size_t>(cnx) * static_cast<std::size_t>(cny), 0.0);
    for (int i = 0; i < g.nx; ++i) {
        const int ci = std::clamp(static_cast<int>((g.x(i) + g.L) / Hx), 0, cnx - 1);
        for (int ai = std::max(0, ci - 1); ai <= std::min(cnx - 1, ci + 1); ++ai) {
            const double ox = detail::dual_overlap(i, g.dx, ai, Hx, g.L);
            if (ox <= 0.0) continue;
            for (int j = 0; j < g.ny; ++j) {
                const int cj = std::clamp(static_cast<int>((g.y(j) + g.L) / Hy), 0, cny - 1);
                for (int aj = std::max(0, cj - 1); aj <= std::min(cny - 1, cj + 1); ++aj) {
                    const double oy = detail::dual_overlap(j, g.dy, aj, Hy, g.L);
                    if (oy > 0.0) mass[static_cast<std::size_t>(ai) * static_cast<std::size_t>(cny) + static_cast<std::size_t>(aj)] += rho(i, j) * ox * oy;
                }
            }
        }
    }
    return mass;
}

/// Coarse-cell masses of the bilinear interpolant of a node field, by the
/// midpoint rule on `sub` x `sub` points per coarse cell.
inline std::vector<double> coarse_cell_mass_interpolated(const ScalarField& rho, int cnx, int cny, int sub = 20) {
    const Grid2D& g = rho.grid;
    const double Hx = 2.0 * g.L / cnx, Hy = 2.0 * g.L / cny;
    const double hx = Hx / sub, hy = Hy / sub;
    std::vector<double> mass(static_cast<std::size_t>(cnx) * static_cast<std::size_t>(cny), 0.0);
    for (int ci = 0; ci < cnx; ++ci)
        for (int cj = 0; cj < cny; ++cj) {
            double m = 0.0;
            for (int a = 0; a < sub; ++a)
                for (int b = 0; b < sub; ++b)
                    m += interpolate(rho, -g.L + ci * Hx + (a + 0.5) * hx, -g.L + cj * Hy + (b + 0.5) * hy);
            mass[static_cast<std::size_t>(ci) * static_cast<std::size_t>(cny) + static_cast<std::size_t>(cj)] = m * hx * hy;
        }
    return mass;
}

struct TvComparison {
    double tv = 0.0;
    double monte_carlo_budget = 0.0;  ///< expected TV of an exact N-sample histogram
    double binning_budget = 0.0;      ///< TV between two quadratures of the PDE cell masses
    double budget() const { return monte_carlo_budget + binning_budget; }
    bool pass(double factor = 3.0) const { return tv <= factor * budget(); }
};

/// Total-variation distance between the particle histogram and the PDE
/// density on the coarse grid.
inline TvComparison compare_with_pde(const FluxEstimate& f, const ScalarField& rho_pde) {
    TvComparison out;
    const std::vector<double> pde = coarse_cell_mass(rho_pde, f.nx, f.ny);
    const std::vector<double> fine = coarse_cell_mass_interpolated(rho_pde, f.nx, f.ny);
    const double N = static_cast<double>(f.particles);
    for (std::size_t c = 0; c < pde.size(); ++c) {
        const double p_hist = f.density[c] * f.cell_area();
        const double p = std::clamp(pde[c], 0.0, 1.0);
        out.tv += 0.5 * std::abs(p_hist - pde[c]);
        out.monte_carlo_budget += 0.5 * std::sqrt(2.0 * p * (1.0 - p) / (std::numbers::pi * N));
        out.binning_budget += 0.5 * std::abs(fine[c] - pde[c]);
    }
    return out;
}

}  // namespace fpcirc
