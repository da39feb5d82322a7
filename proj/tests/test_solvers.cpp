#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "unisolver/dataset.hpp"
#include "unisolver/fft.hpp"
#include "unisolver/rng.hpp"
#include "unisolver/solvers.hpp"

using namespace unisolver;

namespace {

constexpr double kPi = 3.14159265358979323846;

double rel_l2(const std::vector<double>& got, const std::vector<double>& want) {
    REQUIRE(got.size() == want.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got[i] - want[i]) * (got[i] - want[i]);
        den += want[i] * want[i];
    }
    return std::sqrt(num / den);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

GridSpec periodic_grid(std::size_t n_x, std::size_t n_t, double t_min,
                       double t_max, double x_min = 0.0, double x_max = 1.0) {
    GridSpec g;
    g.spatial_dims = 1;
    g.n_x = n_x;
    g.n_t = n_t;
    g.x_min = x_min;
    g.x_max = x_max;
    g.t_min = t_min;
    g.t_max = t_max;
    return g;
}

std::vector<double> sine_samples(const GridSpec& grid, bool periodic,
                                 double mode_over_period, double phase = 0.0) {
    const std::vector<double> xs = spatial_nodes(grid, periodic);
    std::vector<double> u(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        u[i] = std::sin(2.0 * kPi * mode_over_period *
                            (xs[i] - grid.x_min) /
                            (grid.x_max - grid.x_min) +
                        phase);
    }
    return u;
}

}  // namespace

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

TEST_CASE("fft matches the hand-computed length-4 transform") {
    std::vector<cdouble> x{{1, 0}, {2, 0}, {3, 0}, {4, 0}};
    fft_inplace(x, false);
    // Direct DFT of [1,2,3,4]: X0 = 10, X1 = -2+2i, X2 = -2, X3 = -2-2i.
    CHECK(std::abs(x[0] - cdouble(10, 0)) < 1e-12);
    CHECK(std::abs(x[1] - cdouble(-2, 2)) < 1e-12);
    CHECK(std::abs(x[2] - cdouble(-2, 0)) < 1e-12);
    CHECK(std::abs(x[3] - cdouble(-2, -2)) < 1e-12);
}

TEST_CASE("fft inverse round-trips a random signal") {
    Rng rng(11);
    std::vector<cdouble> x(64);
    for (auto& v : x) v = cdouble(rng.uniform(-1, 1), rng.uniform(-1, 1));
    std::vector<cdouble> original = x;
    fft_inplace(x, false);
    fft_inplace(x, true);
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        err = std::max(err, std::abs(x[i] - original[i]));
    CHECK(err < 1e-13);
}

TEST_CASE("fft puts a pure sine into the expected wavenumber bins") {
    const std::size_t n = 8;
    std::vector<cdouble> x(n);
    for (std::size_t j = 0; j < n; ++j) {
        x[j] = cdouble(std::sin(2.0 * kPi * static_cast<double>(j) / n), 0.0);
    }
    fft_inplace(x, false);
    // sin(2 pi x) = (e^{2 pi i x} - e^{-2 pi i x}) / 2i puts -n/2 i at bin 1
    // and +n/2 i at bin n-1.
    CHECK(std::abs(x[1] - cdouble(0, -4)) < 1e-12);
    CHECK(std::abs(x[n - 1] - cdouble(0, 4)) < 1e-12);
    for (std::size_t k : {0ul, 2ul, 3ul, 4ul, 5ul, 6ul}) {
        CHECK(std::abs(x[k]) < 1e-12);
    }
}

TEST_CASE("fft preserves energy (Parseval)") {
    Rng rng(5);
    std::vector<cdouble> x(32);
    double time_energy = 0.0;
    for (auto& v : x) {
        v = cdouble(rng.normal(), rng.normal());
        time_energy += std::norm(v);
    }
    fft_inplace(x, false);
    double freq_energy = 0.0;
    for (const auto& v : x) freq_energy += std::norm(v);
    CHECK(freq_energy / static_cast<double>(x.size()) ==
          doctest::Approx(time_energy).epsilon(1e-12));
}

TEST_CASE("fft2 of a separable field is the outer product of 1-D transforms") {
    const std::size_t ny = 8, nx = 16;
    std::vector<cdouble> gx(nx), hy(ny);
    Rng rng(7);
    for (auto& v : gx) v = cdouble(rng.uniform(-1, 1), 0.0);
    for (auto& v : hy) v = cdouble(rng.uniform(-1, 1), 0.0);
    std::vector<cdouble> field(ny * nx);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) field[j * nx + i] = hy[j] * gx[i];
    }
    fft2_inplace(field, ny, nx, false);
    std::vector<cdouble> gxf = gx, hyf = hy;
    fft_inplace(gxf, false);
    fft_inplace(hyf, false);
    double err = 0.0;
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            err = std::max(err,
                           std::abs(field[j * nx + i] - hyf[j] * gxf[i]));
        }
    }
    CHECK(err < 1e-11);
}

TEST_CASE("fft rejects non-power-of-two lengths") {
    std::vector<cdouble> x(12);
    CHECK_THROWS_AS(fft_inplace(x, false), std::invalid_argument);
}

TEST_CASE("fft_wavenumber follows the standard bin layout") {
    CHECK(fft_wavenumber(0, 8) == 0);
    CHECK(fft_wavenumber(3, 8) == 3);
    CHECK(fft_wavenumber(4, 8) == -4);
    CHECK(fft_wavenumber(7, 8) == -1);
}

TEST_CASE("linspace pins both endpoints and handles n=1") {
    const std::vector<double> v = linspace(0.0, 1.0, 5);
    REQUIRE(v.size() == 5);
    CHECK(v[0] == 0.0);
    CHECK(v[2] == 0.5);
    CHECK(v[4] == 1.0);
    const std::vector<double> single = linspace(0.25, 0.75, 1);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == 0.25);
}

// ---------------------------------------------------------------------------
// Exact advection
// ---------------------------------------------------------------------------

TEST_CASE("advection with beta=0 returns the initial data verbatim") {
    const GridSpec grid = periodic_grid(64, 3, 0.0, 1.0);
    Rng rng(3);
    std::vector<double> u0(64);
    for (auto& v : u0) v = rng.uniform(-1, 1);
    const std::vector<double> frames =
        solve_advection_exact(u0, 0.0, grid, BoundaryCondition{});
    REQUIRE(frames.size() == 3 * 64);
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t i = 0; i < 64; ++i) {
            CHECK(frames[j * 64 + i] == u0[i]);
        }
    }
}

TEST_CASE("advecting a sine by half a period flips its sign") {
    const GridSpec grid = periodic_grid(64, 1, 1.0, 1.0);
    const std::vector<double> u0 = sine_samples(grid, true, 1.0);
    const std::vector<double> frames =
        solve_advection_exact(u0, 0.5, grid, BoundaryCondition{});
    double err = 0.0;
    for (std::size_t i = 0; i < u0.size(); ++i)
        err = std::max(err, std::abs(frames[i] + u0[i]));
    CHECK(err < 1e-12);
}

TEST_CASE("advection over one full period is an exact copy") {
    const GridSpec grid = periodic_grid(64, 1, 1.0, 1.0);
    Rng rng(9);
    std::vector<double> u0(64);
    for (auto& v : u0) v = rng.uniform(-1, 1);
    const std::vector<double> frames =
        solve_advection_exact(u0, 1.0, grid, BoundaryCondition{});
    CHECK(max_abs_diff(frames, u0) < 1e-12);
}

TEST_CASE("spectral shifts compose as a semigroup") {
    // Band-limited signal: the Nyquist mode of a real signal cannot carry a
    // phase (its sine component is invisible on the grid), so composition is
    // exact only below it — which covers every field this solver transports.
    Rng rng(21);
    std::vector<double> u(64, 0.0);
    for (int mode = 1; mode <= 5; ++mode) {
        const double amp = rng.uniform(-1, 1);
        const double phase = rng.uniform(0, 2 * kPi);
        for (std::size_t i = 0; i < u.size(); ++i) {
            u[i] += amp * std::sin(2.0 * kPi * mode * static_cast<double>(i) /
                                       static_cast<double>(u.size()) +
                                   phase);
        }
    }
    const std::vector<double> two_step =
        periodic_shift(periodic_shift(u, 0.3), 0.45);
    const std::vector<double> direct = periodic_shift(u, 0.75);
    CHECK(max_abs_diff(two_step, direct) < 1e-12);
}

TEST_CASE("interpolation fallback is exact on whole-sample shifts") {
    Rng rng(33);
    std::vector<double> u(60);  // not a power of two -> linear interpolation
    for (auto& v : u) v = rng.uniform(-1, 1);
    const std::vector<double> shifted = periodic_shift(u, 7.0 / 60.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(shifted[(i + 7) % 60] == u[i]);
    }
}

TEST_CASE("interpolation fallback tracks the analytic shift of a sine") {
    const GridSpec grid = periodic_grid(60, 1, 1.0, 1.0);
    const std::vector<double> u0 = sine_samples(grid, true, 1.0);
    const double frac = 0.3 + 1.0 / 240.0;  // deliberately off-node
    const std::vector<double> shifted = periodic_shift(u0, frac);
    const std::vector<double> xs = spatial_nodes(grid, true);
    double err = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        err = std::max(err,
                       std::abs(shifted[i] - std::sin(2.0 * kPi * (xs[i] - frac))));
    }
    CHECK(err < 5e-3);  // first-order interpolation on a 60-cell grid
}

TEST_CASE("advection requires a periodic boundary") {
    const GridSpec grid = periodic_grid(32, 1, 1.0, 1.0);
    BoundaryCondition bc;
    bc.periodic = false;
    const std::vector<double> u0(32, 1.0);
    CHECK_THROWS_AS(solve_advection_exact(u0, 0.5, grid, bc),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// 1-D family solver
// ---------------------------------------------------------------------------

TEST_CASE("all-zero dynamics keep the initial condition bitwise") {
    Family1DSpec spec;
    spec.grid = periodic_grid(48, 4, 0.25, 1.0, -1.0, 1.0);
    Rng rng(17);
    spec.g.resize(48);
    for (auto& v : spec.g) v = rng.uniform(-1, 1);
    const std::vector<double> frames = solve_1d_family(spec);
    REQUIRE(frames.size() == 4 * 48);
    for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t i = 0; i < 48; ++i) {
            CHECK(frames[j * 48 + i] == spec.g[i]);
        }
    }
}

TEST_CASE("periodic heat equation matches the separated exact solution") {
    // With only kappa active the family reduces to u_t = kappa u_xx; the
    // initial sine decays by exp(-kappa pi^2 t) on the length-2 circle.
    const double kappa = 0.01;
    Family1DSpec spec;
    spec.grid = periodic_grid(256, 1, 1.0, 1.0, -1.0, 1.0);
    spec.kappa.assign(256, kappa);
    spec.g = sine_samples(spec.grid, true, 1.0);  // sin(pi (x+1))
    const std::vector<double> frames = solve_1d_family(spec);
    std::vector<double> expected = spec.g;
    const double decay = std::exp(-kappa * kPi * kPi);
    for (auto& v : expected) v *= decay;
    CHECK(rel_l2(frames, expected) < 1e-4);
}

TEST_CASE("Dirichlet heat equation decays its sine eigenmode") {
    const double kappa = 0.05;
    Family1DSpec spec;
    spec.grid = periodic_grid(257, 1, 0.5, 0.5, -1.0, 1.0);
    spec.boundary.periodic = false;
    spec.boundary.left = {BoundaryKind::Dirichlet, 1.0, 0.0, 0.0};
    spec.boundary.right = {BoundaryKind::Dirichlet, 1.0, 0.0, 0.0};
    spec.kappa.assign(257, kappa);
    spec.g = sine_samples(spec.grid, false, 1.0);  // vanishes at both walls
    const std::vector<double> frames = solve_1d_family(spec);
    std::vector<double> expected = spec.g;
    const double decay = std::exp(-kappa * kPi * kPi * 0.5);
    for (auto& v : expected) v *= decay;
    CHECK(rel_l2(frames, expected) < 1e-3);
    CHECK(frames.front() == 0.0);  // pinned walls stay pinned
    CHECK(frames.back() == 0.0);
}

TEST_CASE("Neumann heat equation decays its cosine eigenmode") {
    const double kappa = 0.05;
    Family1DSpec spec;
    spec.grid = periodic_grid(257, 1, 0.5, 0.5, -1.0, 1.0);
    spec.boundary.periodic = false;
    spec.boundary.left = {BoundaryKind::Neumann, 0.0, 1.0, 0.0};
    spec.boundary.right = {BoundaryKind::Neumann, 0.0, 1.0, 0.0};
    spec.kappa.assign(257, kappa);
    const std::vector<double> xs = spatial_nodes(spec.grid, false);
    spec.g.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) spec.g[i] = std::cos(kPi * xs[i]);
    const std::vector<double> frames = solve_1d_family(spec);
    std::vector<double> expected = spec.g;
    const double decay = std::exp(-kappa * kPi * kPi * 0.5);
    for (auto& v : expected) v *= decay;
    CHECK(rel_l2(frames, expected) < 1e-3);
}

TEST_CASE("a Robin-compatible linear profile is a fixed point of the solver") {
    // u*(x) = 0.5 x + 1 has zero second difference, and the ghost relations
    // reproduce its slope exactly, so nothing should move.
    const double kappa = 0.05, slope = 0.5, offset = 1.0;
    Family1DSpec spec;
    spec.grid = periodic_grid(65, 1, 1.0, 1.0, -1.0, 1.0);
    spec.boundary.periodic = false;
    const double alpha = 0.6, beta = 0.8;
    // gamma = alpha u + beta du/dn with du/dn = -u_x on the left wall.
    spec.boundary.left = {BoundaryKind::Robin, alpha, beta,
                          alpha * (offset - slope) - beta * slope};
    spec.boundary.right = {BoundaryKind::Robin, alpha, beta,
                           alpha * (offset + slope) + beta * slope};
    spec.kappa.assign(65, kappa);
    const std::vector<double> xs = spatial_nodes(spec.grid, false);
    spec.g.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        spec.g[i] = slope * xs[i] + offset;
    const std::vector<double> frames = solve_1d_family(spec);
    CHECK(max_abs_diff(frames, spec.g) < 1e-10);
}

TEST_CASE("rescaled Burgers run self-converges under grid doubling") {
    auto run = [](std::size_t n_x) {
        Family1DSpec spec;
        spec.grid = periodic_grid(n_x, 1, 0.5, 0.5, -1.0, 1.0);
        spec.c[1] = {0.0, 2.0, 0.0};                  // flux f1(u) = 2 u^2
        spec.kappa.assign(n_x, 8.0 * 0.1 / kPi);      // kappa = 8 nu / pi
        const std::vector<double> xs = spatial_nodes(spec.grid, true);
        spec.g.resize(n_x);
        for (std::size_t i = 0; i < n_x; ++i) {
            spec.g[i] = std::sin(kPi * (xs[i] + 1.0)) +
                        0.3 * std::sin(2.0 * kPi * (xs[i] + 1.0) + 0.4);
        }
        return solve_1d_family(spec);
    };
    const std::vector<double> coarse = run(128);
    const std::vector<double> fine = run(256);
    std::vector<double> fine_on_coarse(128);
    for (std::size_t i = 0; i < 128; ++i) fine_on_coarse[i] = fine[2 * i];
    CHECK(rel_l2(coarse, fine_on_coarse) < 1e-3);

    // Order check against a quadrupled-resolution reference: halving dx must
    // at least halve the error (the limiter clips to first order only at
    // extrema and walls).
    const std::vector<double> finest = run(512);
    auto err_vs_finest = [&](const std::vector<double>& u, std::size_t stride) {
        std::vector<double> sub(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) sub[i] = finest[stride * i];
        return rel_l2(u, sub);
    };
    CHECK(err_vs_finest(coarse, 4) / err_vs_finest(fine, 2) >= 2.0);
}

TEST_CASE("smooth diffusion-dominated runs converge at second order") {
    auto run = [](std::size_t n_x) {
        Family1DSpec spec;
        spec.grid = periodic_grid(n_x, 1, 0.5, 0.5, -1.0, 1.0);
        spec.c[0] = {0.5, 0.0, -0.4};  // reaction only: no flux upwinding
        const std::vector<double> xs = spatial_nodes(spec.grid, true);
        spec.kappa.resize(n_x);
        spec.s.resize(n_x);
        spec.g.resize(n_x);
        for (std::size_t i = 0; i < n_x; ++i) {
            spec.kappa[i] = 0.05 * (1.0 + 0.5 * std::sin(kPi * (xs[i] + 1.0)));
            spec.s[i] = 0.2 * std::cos(kPi * (xs[i] + 1.0));
            spec.g[i] = std::sin(kPi * (xs[i] + 1.0));
        }
        return solve_1d_family(spec);
    };
    const std::vector<double> ref = run(512);
    auto err_vs_ref = [&](const std::vector<double>& u, std::size_t stride) {
        std::vector<double> ref_sub(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) ref_sub[i] = ref[stride * i];
        return rel_l2(u, ref_sub);
    };
    const double e_coarse = err_vs_ref(run(128), 4);
    const double e_mid = err_vs_ref(run(256), 2);
    CHECK(e_coarse / e_mid >= 3.5);
}

TEST_CASE("an unstable cubic reaction reports a diverged step") {
    Family1DSpec spec;
    spec.grid = periodic_grid(64, 1, 1.0, 1.0, -1.0, 1.0);
    spec.c[0] = {-3.0, 0.0, -3.0};  // u_t = 3u + 3u^3: finite-time blow-up
    spec.g = sine_samples(spec.grid, true, 1.0);
    CHECK_THROWS_WITH_AS(solve_1d_family(spec),
                         doctest::Contains("diverged at step"),
                         std::runtime_error);
}

TEST_CASE("Dirichlet endpoints hold their declared values over time") {
    Family1DSpec spec;
    spec.grid = periodic_grid(33, 4, 0.25, 1.0, -1.0, 1.0);
    spec.boundary.periodic = false;
    spec.boundary.left = {BoundaryKind::Dirichlet, 1.0, 0.0, 0.35};
    spec.boundary.right = {BoundaryKind::Dirichlet, 1.0, 0.0, -0.1};
    spec.kappa.assign(33, 0.02);
    const std::vector<double> xs = spatial_nodes(spec.grid, false);
    spec.g.resize(33);
    // Initial condition interpolates the declared endpoint values.
    for (std::size_t i = 0; i < 33; ++i) {
        spec.g[i] = 0.35 + (-0.1 - 0.35) * (xs[i] + 1.0) / 2.0 +
                    0.2 * std::sin(kPi * (xs[i] + 1.0));
    }
    const std::vector<double> frames = solve_1d_family(spec);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(frames[j * 33] == 0.35);
        CHECK(frames[j * 33 + 32] == -0.1);
    }
}

// ---------------------------------------------------------------------------
// Family sampling
// ---------------------------------------------------------------------------

TEST_CASE("sample_1d_pde replays identically from its seed") {
    const Family1DSpec a = sample_1d_pde(42);
    const Family1DSpec b = sample_1d_pde(42);
    CHECK(a.c == b.c);
    CHECK(a.boundary.periodic == b.boundary.periodic);
    CHECK(a.boundary.left.kind == b.boundary.left.kind);
    CHECK(a.boundary.left.alpha == b.boundary.left.alpha);
    CHECK(a.boundary.left.gamma == b.boundary.left.gamma);
    CHECK(a.boundary.right.kind == b.boundary.right.kind);
    CHECK(a.g == b.g);
    CHECK(a.s == b.s);
    CHECK(a.kappa == b.kappa);
}

TEST_CASE("sample_1d_pde reproduces the declared coefficient distribution") {
    const std::size_t draws = 10000;
    std::size_t zeros = 0, total = 0, periodic = 0;
    std::size_t kind_counts[3] = {0, 0, 0};
    std::size_t endpoint_total = 0;
    std::vector<double> nonzero;
    nonzero.reserve(draws * 3);
    for (std::size_t d = 0; d < draws; ++d) {
        const Family1DSpec spec = sample_1d_pde(1000 + d);
        for (const auto& row : spec.c) {
            for (double c : row) {
                ++total;
                if (c == 0.0) {
                    ++zeros;
                } else {
                    nonzero.push_back(c);
                }
            }
        }
        if (spec.boundary.periodic) {
            ++periodic;
        } else {
            for (const EndpointCondition* ep :
                 {&spec.boundary.left, &spec.boundary.right}) {
                ++endpoint_total;
                if (ep->kind == BoundaryKind::Dirichlet) ++kind_counts[0];
                if (ep->kind == BoundaryKind::Neumann) ++kind_counts[1];
                if (ep->kind == BoundaryKind::Robin) ++kind_counts[2];
            }
        }
        for (double k : spec.kappa) REQUIRE(k >= 0.0);
    }

    const double zero_fraction =
        static_cast<double>(zeros) / static_cast<double>(total);
    CHECK(zero_fraction == doctest::Approx(0.5).epsilon(0.04));  // 0.5 +- 0.02

    // Kolmogorov-Smirnov distance against Uniform[-3, 3].
    std::sort(nonzero.begin(), nonzero.end());
    double ks = 0.0;
    const double n = static_cast<double>(nonzero.size());
    for (std::size_t i = 0; i < nonzero.size(); ++i) {
        const double cdf = (nonzero[i] + 3.0) / 6.0;
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        ks = std::max({ks, std::abs(cdf - lo), std::abs(cdf - hi)});
        REQUIRE(std::abs(nonzero[i]) <= 3.0);
    }
    CHECK(ks < 0.02);

    const double periodic_fraction =
        static_cast<double>(periodic) / static_cast<double>(draws);
    CHECK(periodic_fraction > 0.47);
    CHECK(periodic_fraction < 0.53);
    for (std::size_t count : kind_counts) {
        const double fraction =
            static_cast<double>(count) / static_cast<double>(endpoint_total);
        CHECK(fraction > 0.30);
        CHECK(fraction < 0.37);
    }
}

TEST_CASE("sampled initial conditions are normalized to unit peak") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        const Family1DSpec spec = sample_1d_pde(seed);
        double peak = 0.0;
        for (double v : spec.g) peak = std::max(peak, std::abs(v));
        CHECK(peak == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("the symbols string lists exactly the active terms") {
    Family1DSpec spec;
    spec.c = {{{1.5, 0.0, 0.0}, {0.0, -2.0, 0.0}}};
    spec.s.assign(8, 0.1);
    CHECK(family1d_symbols(spec) ==
          "u_t + c_{01} u + s(x) + (c_{12} u^2)_x = 0");

    Family1DSpec empty;
    CHECK(family1d_symbols(empty) == "u_t = 0");

    Family1DSpec diffusion_only;
    diffusion_only.kappa.assign(8, 0.05);
    CHECK(family1d_symbols(diffusion_only) ==
          "u_t + (-\\kappa(x) u_x)_x = 0");
}

// ---------------------------------------------------------------------------
// Navier-Stokes solver
// ---------------------------------------------------------------------------

namespace {

std::vector<double> taylor_green(std::size_t n) {
    std::vector<double> w(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        const double y = static_cast<double>(j) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = static_cast<double>(i) / static_cast<double>(n);
            w[j * n + i] =
                2.0 * std::cos(2.0 * kPi * x) * std::cos(2.0 * kPi * y);
        }
    }
    return w;
}

double field_mean(const std::vector<double>& w, std::size_t offset,
                  std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += w[offset + i];
    return acc / static_cast<double>(count);
}

double enstrophy(const std::vector<double>& w, std::size_t offset,
                 std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i)
        acc += w[offset + i] * w[offset + i];
    return acc;
}

}  // namespace

TEST_CASE("the force field is constant along anti-diagonals") {
    const std::size_t n = 16;
    const std::vector<double> f = heterns_force(2.0, n);
    CHECK(f[0] == 0.1);  // 0.1 (sin 0 + cos 0)
    for (std::size_t j = 0; j + 1 < n; ++j) {
        for (std::size_t i = 1; i < n; ++i) {
            CHECK(f[j * n + i] == f[(j + 1) * n + (i - 1)]);
        }
    }
}

TEST_CASE("a pure-decay vorticity mode follows its viscous envelope") {
    HeterNSSpec spec;
    spec.nu = 1e-3;
    spec.omega = 0.0;
    spec.n = 64;
    spec.T = 1.0;
    spec.n_t = 2;
    spec.w0 = taylor_green(64);
    const std::vector<double> frames = solve_ns2d_spectral(spec);
    REQUIRE(frames.size() == 2 * 64 * 64);
    std::vector<double> expected = spec.w0;
    const double decay = std::exp(-8.0 * kPi * kPi * spec.nu * spec.T);
    for (auto& v : expected) v *= decay;
    const std::vector<double> last(frames.begin() + 64 * 64, frames.end());
    CHECK(rel_l2(last, expected) < 1e-4);
}

TEST_CASE("the first snapshot is the initial vorticity verbatim") {
    Rng rng(4);
    HeterNSSpec spec;
    spec.nu = 1e-3;
    spec.n = 32;
    spec.T = 0.5;
    spec.n_t = 2;
    spec.w0 = random_band_limited_vorticity(rng, 32);
    const std::vector<double> frames = solve_ns2d_spectral(spec);
    for (std::size_t i = 0; i < 32 * 32; ++i) {
        CHECK(frames[i] == spec.w0[i]);
    }
}

TEST_CASE("unforced flow conserves mean vorticity and dissipates enstrophy") {
    Rng rng(12);
    HeterNSSpec spec;
    spec.nu = 1e-3;
    spec.omega = 0.0;
    spec.n = 64;
    spec.T = 2.0;
    spec.n_t = 5;
    spec.w0 = random_band_limited_vorticity(rng, 64);
    const std::vector<double> frames = solve_ns2d_spectral(spec);
    const std::size_t m = 64 * 64;
    const double mean0 = field_mean(frames, 0, m);
    double prev_enstrophy = enstrophy(frames, 0, m);
    for (std::size_t j = 1; j < spec.n_t; ++j) {
        CHECK(std::abs(field_mean(frames, j * m, m) - mean0) < 1e-12);
        const double e = enstrophy(frames, j * m, m);
        CHECK(e < prev_enstrophy);
        prev_enstrophy = e;
    }
}

TEST_CASE("the spectral solver replays bit-identically") {
    Rng rng(77);
    HeterNSSpec spec;
    spec.nu = 5e-4;
    spec.omega = 2.0;
    spec.n = 32;
    spec.T = 1.0;
    spec.n_t = 3;
    spec.w0 = random_band_limited_vorticity(rng, 32);
    const std::vector<double> a = solve_ns2d_spectral(spec);
    const std::vector<double> b = solve_ns2d_spectral(spec);
    CHECK(a == b);
}

TEST_CASE("forcing changes the flow and keeps it finite") {
    Rng rng(8);
    HeterNSSpec spec;
    spec.nu = 1e-3;
    spec.n = 32;
    spec.T = 1.0;
    spec.n_t = 3;
    spec.w0 = random_band_limited_vorticity(rng, 32);
    HeterNSSpec forced = spec;
    forced.omega = 2.0;
    const std::vector<double> calm = solve_ns2d_spectral(spec);
    const std::vector<double> stirred = solve_ns2d_spectral(forced);
    for (double v : stirred) REQUIRE(std::isfinite(v));
    CHECK(max_abs_diff(calm, stirred) > 1e-6);
}

TEST_CASE("random initial vorticity is band-limited with unit variance") {
    Rng rng(15);
    const std::size_t n = 64;
    const std::vector<double> w = random_band_limited_vorticity(rng, n, 8);
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    CHECK(std::abs(mean) < 1e-12);
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<cdouble> spec(n * n);
    for (std::size_t i = 0; i < w.size(); ++i) spec[i] = cdouble(w[i], 0.0);
    fft2_inplace(spec, n, n, false);
    double outside = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            const int kx = fft_wavenumber(i, n);
            const int ky = fft_wavenumber(j, n);
            if (std::abs(kx) > 8 || std::abs(ky) > 8) {
                outside = std::max(outside, std::abs(spec[j * n + i]));
            }
        }
    }
    CHECK(outside < 1e-9);

    Rng rng_again(15);
    CHECK(random_band_limited_vorticity(rng_again, n, 8) == w);
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

namespace {

bool samples_equal(const Sample& a, const Sample& b) {
    if (a.split != b.split) return false;
    if (a.components.symbols != b.components.symbols) return false;
    if (a.components.coefficients != b.components.coefficients) return false;
    if (a.components.has_force != b.components.has_force) return false;
    if (a.components.force.values != b.components.force.values) return false;
    if (a.inputs.size() != b.inputs.size()) return false;
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        if (a.inputs[i].values != b.inputs[i].values) return false;
    }
    if (a.outputs.size() != b.outputs.size()) return false;
    for (std::size_t i = 0; i < a.outputs.size(); ++i) {
        if (a.outputs[i].values != b.outputs[i].values) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("advection datasets cycle their condition grid and replay exactly") {
    const TaskSpec task = advection_task({0.2, 0.5, 1.0}, {0.35}, 32, 0.5);
    const Dataset data = generate_dataset(task, 8, 7);
    REQUIRE(data.samples.size() == 8);
    const std::vector<double> betas{0.2, 0.5, 1.0, 0.35};
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const Sample& sample = data.samples[i];
        CHECK(sample.components.coefficients.at("beta") ==
              betas[i % betas.size()]);
        CHECK(sample.split ==
              ((i % 4) == 3 ? SplitTag::OOD : SplitTag::ID));
        CHECK(validate(sample, task.grid).empty());
        // The stored outputs replay from the stored inputs.
        const std::vector<double> replay = solve_advection_exact(
            sample.inputs[0].values, sample.components.coefficients.at("beta"),
            task.grid, sample.components.boundary);
        CHECK(sample.outputs[0].values == replay);
    }
}

TEST_CASE("datasets are identical across thread counts") {
    const TaskSpec task = advection_task({0.2, 0.5}, {}, 32, 0.5);
    setenv("UNISOLVER_THREADS", "1", 1);
    const Dataset serial = generate_dataset(task, 6, 123);
    setenv("UNISOLVER_THREADS", "3", 1);
    const Dataset parallel = generate_dataset(task, 6, 123);
    unsetenv("UNISOLVER_THREADS");
    REQUIRE(serial.samples.size() == parallel.samples.size());
    for (std::size_t i = 0; i < serial.samples.size(); ++i) {
        CHECK(samples_equal(serial.samples[i], parallel.samples[i]));
    }
}

TEST_CASE("family1d datasets validate and stay near the periodic split") {
    TaskSpec task = family1d_task(64, 4);
    const Dataset data = generate_dataset(task, 100, 2024);
    REQUIRE(data.samples.size() == 100);
    std::size_t periodic = 0;
    for (const Sample& sample : data.samples) {
        CHECK(validate(sample, task.grid).empty());
        CHECK(sample.components.coefficients.size() == 6);
        if (sample.components.boundary.periodic) ++periodic;
        if (!sample.components.boundary.periodic) {
            CHECK(sample.components.has_boundary_values);
        }
    }
    CHECK(periodic >= 35);
    CHECK(periodic <= 65);
    // Blow-up is a real feature of this coefficient family, so retries must
    // have happened — and been absorbed by the task's divergence budget.
    CHECK(data.retry_count > 0);
}

TEST_CASE("generation aborts when retries exhaust the divergence budget") {
    TaskSpec task = family1d_task(64, 4);
    task.max_divergence_rate = 0.0;  // any diverged solve trips the abort
    CHECK_THROWS_WITH_AS(generate_dataset(task, 40, 2024),
                         doctest::Contains("divergence rate exceeded"),
                         std::runtime_error);
}

TEST_CASE("heterns-mini datasets carry their condition pair and force field") {
    const TaskSpec task =
        heterns_mini_task({1e-3}, {1.0, 2.0, 3.0}, SplitTag::ID, 32, 2.0, 3);
    const Dataset data = generate_dataset(task, 6, 99);
    REQUIRE(data.samples.size() == 6);
    const std::vector<double> omegas{1.0, 2.0, 3.0};
    for (std::size_t i = 0; i < 6; ++i) {
        const Sample& sample = data.samples[i];
        CHECK(sample.components.coefficients.at("nu") == 1e-3);
        CHECK(sample.components.coefficients.at("omega") == omegas[i % 3]);
        CHECK(sample.components.has_force);
        REQUIRE(sample.inputs[0].shape ==
                std::vector<std::size_t>{2, 32, 32});
        REQUIRE(sample.outputs[0].shape ==
                std::vector<std::size_t>{1, 32, 32});
        CHECK(validate(sample, task.grid).empty());
    }
}

TEST_CASE("string datasets produce fixed-end samples consistent with the oracle") {
    const TaskSpec task = string_task(33, 4, 1.0, 1.0);
    const Dataset data = generate_dataset(task, 4, 31);
    REQUIRE(data.samples.size() == 4);
    for (const Sample& sample : data.samples) {
        CHECK(validate(sample, task.grid).empty());
        CHECK(sample.components.coefficients.at("a") == 1.0);
        // The initial displacement respects the fixed ends.
        CHECK(std::abs(sample.inputs[0].values.front()) < 1e-9);
        CHECK(std::abs(sample.inputs[0].values[32]) < 1e-9);
    }
    // Replay determinism: the same seed yields byte-identical samples.
    const Dataset again = generate_dataset(task, 4, 31);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(samples_equal(data.samples[i], again.samples[i]));
    }
}

TEST_CASE("family names round-trip and reject unknowns") {
    for (Family f : {Family::String, Family::Advection, Family::Family1D,
                     Family::HeterNSMini}) {
        CHECK(family_from_string(family_name(f)) == f);
    }
    CHECK_THROWS_AS(family_from_string("maxwell"), std::invalid_argument);
}
