#include "unisolver/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include "unisolver/fft.hpp"

namespace unisolver {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kBlowupLimit = 1e6;
}  // namespace

std::vector<double> linspace(double a, double b, std::size_t n) {
    if (n == 0) throw std::invalid_argument("linspace: n must be positive");
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = a;
        return out;
    }
    const double step = (b - a) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = a + step * static_cast<double>(i);
    out[n - 1] = b;  // pin the endpoint against accumulated rounding
    return out;
}

std::vector<double> frame_times(const GridSpec& grid) {
    return linspace(grid.t_min, grid.t_max, grid.n_t);
}

std::vector<double> spatial_nodes(const GridSpec& grid, bool periodic) {
    if (grid.n_x < 2) throw std::invalid_argument("spatial_nodes: n_x must be >= 2");
    const double period = grid.x_max - grid.x_min;
    std::vector<double> xs(grid.n_x);
    if (periodic) {
        const double h = period / static_cast<double>(grid.n_x);
        for (std::size_t i = 0; i < grid.n_x; ++i)
            xs[i] = grid.x_min + h * static_cast<double>(i);
    } else {
        xs = linspace(grid.x_min, grid.x_max, grid.n_x);
    }
    return xs;
}

// ---------------------------------------------------------------------------
// Exact advection
// ---------------------------------------------------------------------------

std::vector<double> periodic_shift(const std::vector<double>& u, double frac) {
    const std::size_t n = u.size();
    if (n == 0) throw std::invalid_argument("periodic_shift: empty signal");
    frac = std::fmod(frac, 1.0);
    if (frac < 0.0) frac += 1.0;
    if (frac == 0.0) return u;  // whole-period shifts are exact copies

    if (is_power_of_two(n)) {
        std::vector<cdouble> spec(n);
        for (std::size_t i = 0; i < n; ++i) spec[i] = cdouble(u[i], 0.0);
        fft_inplace(spec, false);
        for (std::size_t i = 0; i < n; ++i) {
            if (2 * i == n) {
                // The Nyquist bin of a real signal is a pure cosine mode; a
                // complex phase would leak an imaginary part.
                spec[i] *= std::cos(kPi * static_cast<double>(n) * frac);
            } else {
                const double ang =
                    -2.0 * kPi * static_cast<double>(fft_wavenumber(i, n)) * frac;
                spec[i] *= cdouble(std::cos(ang), std::sin(ang));
            }
        }
        fft_inplace(spec, true);
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = spec[i].real();
        return out;
    }

    // Periodic linear interpolation fallback for awkward lengths.
    std::vector<double> out(n);
    const double shift = frac * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double src = static_cast<double>(i) - shift;
        double base = std::floor(src);
        const double w = src - base;
        long idx = static_cast<long>(base) % static_cast<long>(n);
        if (idx < 0) idx += static_cast<long>(n);
        const std::size_t i0 = static_cast<std::size_t>(idx);
        const std::size_t i1 = (i0 + 1) % n;
        out[i] = (w == 0.0) ? u[i0] : (1.0 - w) * u[i0] + w * u[i1];
    }
    return out;
}

std::vector<double> solve_advection_exact(const std::vector<double>& u0,
                                          double beta, const GridSpec& grid,
                                          const BoundaryCondition& bc) {
    if (!bc.periodic) {
        throw std::invalid_argument(
            "solve_advection_exact: the translation solution requires a "
            "periodic boundary");
    }
    if (u0.size() != grid.n_x) {
        throw std::invalid_argument(
            "solve_advection_exact: u0 has " + std::to_string(u0.size()) +
            " samples but the grid declares n_x=" + std::to_string(grid.n_x));
    }
    const double period = grid.x_max - grid.x_min;
    if (!(period > 0.0)) {
        throw std::invalid_argument("solve_advection_exact: empty spatial range");
    }
    const std::vector<double> times = frame_times(grid);
    std::vector<double> frames(times.size() * grid.n_x);
    for (std::size_t j = 0; j < times.size(); ++j) {
        const std::vector<double> row =
            periodic_shift(u0, beta * times[j] / period);
        std::copy(row.begin(), row.end(), frames.begin() + j * grid.n_x);
    }
    return frames;
}

// ---------------------------------------------------------------------------
// 1-D family
// ---------------------------------------------------------------------------

GridSpec default_family1d_grid() {
    GridSpec grid;
    grid.spatial_dims = 1;
    grid.n_x = 128;
    grid.n_t = 32;
    grid.x_min = -1.0;
    grid.x_max = 1.0;
    grid.t_min = 1.0 / 32.0;
    grid.t_max = 1.0;
    return grid;
}

namespace {

double poly_eval(const std::array<double, 3>& c, double u) {
    return u * (c[0] + u * (c[1] + u * c[2]));
}

double poly_deriv(const std::array<double, 3>& c, double u) {
    return c[0] + u * (2.0 * c[1] + u * 3.0 * c[2]);
}

struct TrigSeries {
    // value(x) = sum_i amp[i] * sin(2 pi n[i] (x - x0) / period + phase[i])
    std::array<double, 2> amp{};
    std::array<int, 2> mode{};
    std::array<double, 2> phase{};
    double x0 = 0.0;
    double period = 2.0;

    double value(double x) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < amp.size(); ++i) {
            acc += amp[i] * std::sin(2.0 * kPi * mode[i] * (x - x0) / period +
                                     phase[i]);
        }
        return acc;
    }
    double deriv(double x) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < amp.size(); ++i) {
            const double k = 2.0 * kPi * mode[i] / period;
            acc += amp[i] * k * std::cos(k * (x - x0) + phase[i]);
        }
        return acc;
    }
};

TrigSeries draw_trig(Rng& rng, double x0, double period, int max_mode) {
    TrigSeries t;
    t.x0 = x0;
    t.period = period;
    for (std::size_t i = 0; i < t.amp.size(); ++i) {
        t.mode[i] = 1 + static_cast<int>(rng.uniform_int(max_mode));
        t.amp[i] = rng.uniform(-1.0, 1.0);
        t.phase[i] = rng.uniform(0.0, 2.0 * kPi);
    }
    return t;
}

double max_abs_on(const TrigSeries& t, const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m = std::max(m, std::abs(t.value(x)));
    return m;
}

EndpointCondition draw_endpoint(Rng& rng) {
    EndpointCondition ep;
    const std::uint64_t pick = rng.uniform_int(3);
    if (pick == 0) {
        ep.kind = BoundaryKind::Dirichlet;
        ep.alpha = 1.0;
        ep.beta = 0.0;
    } else if (pick == 1) {
        ep.kind = BoundaryKind::Neumann;
        ep.alpha = 0.0;
        ep.beta = 1.0;
    } else {
        ep.kind = BoundaryKind::Robin;
        // Stay clear of the degenerate alpha=0 / beta=0 corners so the Robin
        // ghost relation remains well-conditioned.
        const double theta = rng.uniform(0.15, 1.42);
        ep.alpha = std::sin(theta);
        ep.beta = std::cos(theta);
    }
    return ep;
}

}  // namespace

Family1DSpec sample_1d_pde(std::uint64_t rng_seed) {
    return sample_1d_pde(rng_seed, default_family1d_grid());
}

// The draw order below (coefficients, boundary, initial condition, source,
// diffusion) is frozen: datasets are replayed from seeds alone.
Family1DSpec sample_1d_pde(std::uint64_t rng_seed, const GridSpec& grid) {
    Rng rng(rng_seed);
    Family1DSpec spec;
    spec.grid = grid;

    for (auto& row : spec.c) {
        for (auto& coeff : row) {
            coeff = rng.bernoulli(0.5) ? 0.0 : rng.uniform(-3.0, 3.0);
        }
    }

    spec.boundary.periodic = rng.bernoulli(0.5);
    if (!spec.boundary.periodic) {
        spec.boundary.left = draw_endpoint(rng);
        spec.boundary.right = draw_endpoint(rng);
    }

    const double period = grid.x_max - grid.x_min;
    const std::vector<double> xs = spatial_nodes(grid, spec.boundary.periodic);

    TrigSeries ic;
    double scale = 0.0;
    do {
        ic = draw_trig(rng, grid.x_min, period, 4);
        scale = max_abs_on(ic, xs);
    } while (scale < 1e-3);
    for (auto& a : ic.amp) a /= scale;

    spec.g.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) spec.g[i] = ic.value(xs[i]);

    if (rng.bernoulli(0.5)) {
        TrigSeries src = draw_trig(rng, grid.x_min, period, 4);
        const double m = std::max(max_abs_on(src, xs), 1e-9);
        const double amp = rng.uniform(0.05, 0.5);
        spec.s.resize(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
            spec.s[i] = amp * src.value(xs[i]) / m;
    }

    if (rng.bernoulli(0.5)) {
        const double base = std::exp(rng.uniform(std::log(0.005), std::log(0.1)));
        const int mode = 1 + static_cast<int>(rng.uniform_int(4));
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        spec.kappa.resize(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            spec.kappa[i] =
                base * (1.0 + 0.9 * std::sin(2.0 * kPi * mode *
                                                 (xs[i] - grid.x_min) / period +
                                             phase));
        }
    }

    if (!spec.boundary.periodic) {
        // Boundary data read off the initial condition so the Robin-form
        // relation alpha u + beta du/dn = gamma holds exactly at t = 0.
        auto fill_gamma = [&](EndpointCondition& ep, double x, double normal) {
            ep.gamma = ep.alpha * ic.value(x) + ep.beta * normal * ic.deriv(x);
        };
        fill_gamma(spec.boundary.left, grid.x_min, -1.0);
        fill_gamma(spec.boundary.right, grid.x_max, 1.0);
    }
    return spec;
}

// The symbols string is structural: it names which terms exist (zero
// coefficients drop their term), while the numeric values travel separately
// in the coefficient map. Placeholders c_{ik} mark the coefficient of u^k
// inside f_i.
std::string family1d_symbols(const Family1DSpec& spec) {
    auto coeff_term = [](int i, int power) {
        char buf[32];
        const char* suffix = power == 1 ? "u" : (power == 2 ? "u^2" : "u^3");
        std::snprintf(buf, sizeof(buf), "c_{%d%d} %s", i, power, suffix);
        return std::string(buf);
    };
    auto join = [](const std::vector<std::string>& terms) {
        std::string out;
        for (const auto& term : terms) {
            if (out.empty()) {
                out = term;
            } else if (term.size() > 1 && term[0] == '-') {
                out += " - " + term.substr(1);
            } else {
                out += " + " + term;
            }
        }
        return out;
    };

    std::vector<std::string> outer{"u_t"};
    for (int k = 1; k <= 3; ++k) {
        if (spec.c[0][k - 1] != 0.0) outer.push_back(coeff_term(0, k));
    }
    if (!spec.s.empty()) outer.push_back("s(x)");

    std::vector<std::string> inner;
    for (int k = 1; k <= 3; ++k) {
        if (spec.c[1][k - 1] != 0.0) inner.push_back(coeff_term(1, k));
    }
    if (!spec.kappa.empty()) inner.push_back("-\\kappa(x) u_x");
    if (!inner.empty()) outer.push_back("(" + join(inner) + ")_x");

    return join(outer) + " = 0";
}

namespace {

struct Family1DWorkspace {
    const Family1DSpec& spec;
    std::size_t n;
    double dx;
    bool pin_left = false, pin_right = false;
    double kappa_max = 0.0;

    explicit Family1DWorkspace(const Family1DSpec& s)
        : spec(s), n(s.grid.n_x) {
        const double period = s.grid.x_max - s.grid.x_min;
        dx = s.boundary.periodic ? period / static_cast<double>(n)
                                 : period / static_cast<double>(n - 1);
        if (!s.boundary.periodic) {
            pin_left = s.boundary.left.beta == 0.0;
            pin_right = s.boundary.right.beta == 0.0;
        }
        for (double k : s.kappa) kappa_max = std::max(kappa_max, k);
    }

    // Ghost value one node outside `side` (-1 left, +1 right) given the
    // boundary relation alpha u + beta du/dn = gamma with outward normal.
    double ghost(const std::vector<double>& u, int side) const {
        if (spec.boundary.periodic) {
            return side < 0 ? u[n - 1] : u[0];
        }
        const EndpointCondition& ep =
            side < 0 ? spec.boundary.left : spec.boundary.right;
        if (ep.beta == 0.0) {
            // Dirichlet endpoints are pinned; the ghost only feeds the pinned
            // node's (zeroed) update, so mirroring keeps values finite.
            return side < 0 ? u[1] : u[n - 2];
        }
        if (side < 0) {
            // du/dn = -u_x at the left wall: u_x(x0) = (alpha u0 - gamma)/beta.
            const double ux = (ep.alpha * u[0] - ep.gamma) / ep.beta;
            return u[1] - 2.0 * dx * ux;
        }
        const double ux = (ep.gamma - ep.alpha * u[n - 1]) / ep.beta;
        return u[n - 2] + 2.0 * dx * ux;
    }

    // Symmetric slope limiter: zero at extrema, else the smaller one-sided
    // difference.
    static double minmod(double a, double b) {
        if (a > 0.0 && b > 0.0) return std::min(a, b);
        if (a < 0.0 && b < 0.0) return std::max(a, b);
        return 0.0;
    }

    void rhs(const std::vector<double>& u, std::vector<double>& out) const {
        const auto& c0 = spec.c[0];
        const auto& c1 = spec.c[1];
        const bool has_flux =
            c1[0] != 0.0 || c1[1] != 0.0 || c1[2] != 0.0;
        const bool has_kappa = !spec.kappa.empty();

        // Extended state with two ghost nodes per side: ue[j+2] == u[j].
        std::vector<double> ue(n + 4);
        std::copy(u.begin(), u.end(), ue.begin() + 2);
        if (spec.boundary.periodic) {
            ue[1] = u[n - 1];
            ue[0] = u[n - 2];
            ue[n + 2] = u[0];
            ue[n + 3] = u[1];
        } else {
            ue[1] = ghost(u, -1);
            ue[0] = ue[1];  // flat extension; the limiter clips against it
            ue[n + 2] = ghost(u, +1);
            ue[n + 3] = ue[n + 2];
        }

        std::vector<double> flux;
        if (has_flux) {
            // Local Lax-Friedrichs fluxes over limited linear reconstructions
            // (second order in smooth regions, first order at extrema and
            // walls). flux[k] sits between u[k-1] and u[k].
            flux.resize(n + 1);
            std::vector<double> slope(n + 4, 0.0);
            for (std::size_t i = 1; i + 1 < n + 4; ++i) {
                slope[i] = minmod(ue[i + 1] - ue[i], ue[i] - ue[i - 1]);
            }
            for (std::size_t k = 0; k <= n; ++k) {
                const double ul = ue[k + 1] + 0.5 * slope[k + 1];
                const double ur = ue[k + 2] - 0.5 * slope[k + 2];
                const double a = std::max(std::abs(poly_deriv(c1, ul)),
                                          std::abs(poly_deriv(c1, ur)));
                flux[k] = 0.5 * (poly_eval(c1, ul) + poly_eval(c1, ur)) -
                          0.5 * a * (ur - ul);
            }
        }

        auto kappa_at = [&](std::size_t j) {  // ghost nodes copy the edge value
            if (j == 0) return spec.boundary.periodic ? spec.kappa[n - 1]
                                                      : spec.kappa[0];
            if (j == n + 1) return spec.boundary.periodic ? spec.kappa[0]
                                                          : spec.kappa[n - 1];
            return spec.kappa[j - 1];
        };

        for (std::size_t j = 0; j < n; ++j) {
            if ((j == 0 && pin_left) || (j == n - 1 && pin_right)) {
                out[j] = 0.0;
                continue;
            }
            double acc = -poly_eval(c0, u[j]);
            if (!spec.s.empty()) acc -= spec.s[j];
            if (has_flux) acc -= (flux[j + 1] - flux[j]) / dx;
            if (has_kappa) {
                const double kr = 0.5 * (kappa_at(j + 1) + kappa_at(j + 2));
                const double kl = 0.5 * (kappa_at(j) + kappa_at(j + 1));
                acc += (kr * (ue[j + 3] - ue[j + 2]) - kl * (ue[j + 2] - ue[j + 1])) /
                       (dx * dx);
            }
            out[j] = acc;
        }
    }

    double stable_dt(const std::vector<double>& u) const {
        double flux_speed = 0.0, reaction_rate = 0.0;
        for (double v : u) {
            flux_speed = std::max(flux_speed, std::abs(poly_deriv(spec.c[1], v)));
            reaction_rate =
                std::max(reaction_rate, std::abs(poly_deriv(spec.c[0], v)));
        }
        double dt = std::numeric_limits<double>::infinity();
        if (flux_speed > 0.0) dt = std::min(dt, dx / flux_speed);
        if (kappa_max > 0.0) dt = std::min(dt, dx * dx / (2.0 * kappa_max));
        if (reaction_rate > 0.0) dt = std::min(dt, 1.0 / reaction_rate);
        return 0.4 * dt;
    }
};

}  // namespace

std::vector<double> solve_1d_family(const Family1DSpec& spec) {
    const std::size_t n = spec.grid.n_x;
    if (n < 3) throw std::invalid_argument("solve_1d_family: n_x must be >= 3");
    if (spec.g.size() != n) {
        throw std::invalid_argument(
            "solve_1d_family: initial condition has " +
            std::to_string(spec.g.size()) + " samples, grid wants " +
            std::to_string(n));
    }
    if (!spec.s.empty() && spec.s.size() != n) {
        throw std::invalid_argument("solve_1d_family: source field size mismatch");
    }
    if (!spec.kappa.empty() && spec.kappa.size() != n) {
        throw std::invalid_argument(
            "solve_1d_family: diffusion field size mismatch");
    }
    for (double k : spec.kappa) {
        if (!(k >= 0.0)) {
            throw std::invalid_argument(
                "solve_1d_family: diffusion field must be nonnegative");
        }
    }
    if (!(spec.grid.t_min >= 0.0) || !(spec.grid.t_max >= spec.grid.t_min)) {
        throw std::invalid_argument("solve_1d_family: bad time range");
    }
    if (!spec.boundary.periodic) {
        for (const EndpointCondition* ep :
             {&spec.boundary.left, &spec.boundary.right}) {
            if (ep->alpha == 0.0 && ep->beta == 0.0) {
                throw std::invalid_argument(
                    "solve_1d_family: endpoint condition has alpha=beta=0");
            }
        }
    }

    Family1DWorkspace ws(spec);
    std::vector<double> u = spec.g;
    if (ws.pin_left) u[0] = spec.boundary.left.gamma / spec.boundary.left.alpha;
    if (ws.pin_right)
        u[n - 1] = spec.boundary.right.gamma / spec.boundary.right.alpha;

    const std::vector<double> times = frame_times(spec.grid);
    std::vector<double> frames(times.size() * n);

    std::vector<double> k1(n), k2(n), k3(n), k4(n), stage(n);
    double t = 0.0;
    std::size_t step = 0;
    auto check_state = [&](const std::vector<double>& v) {
        for (double x : v) {
            if (!std::isfinite(x) || std::abs(x) > kBlowupLimit) {
                char buf[96];
                std::snprintf(buf, sizeof(buf),
                              "solve_1d_family: diverged at step %zu (t=%.6g)",
                              step, t);
                throw std::runtime_error(buf);
            }
        }
    };

    for (std::size_t j = 0; j < times.size(); ++j) {
        const double target = times[j];
        while (t < target - 1e-12) {
            if (step >= spec.max_steps) {
                // States climbing toward blow-up shrink the CFL step like
                // 1/u^2; cutting them off here keeps the solve cost bounded.
                char buf[112];
                std::snprintf(buf, sizeof(buf),
                              "solve_1d_family: step budget %zu exhausted at "
                              "t=%.6g (stiff or diverging state)",
                              spec.max_steps, t);
                throw std::runtime_error(buf);
            }
            double dt = std::min(ws.stable_dt(u), target - t);
            if (!(dt > 0.0) || !std::isfinite(dt)) dt = target - t;

            ws.rhs(u, k1);
            for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + 0.5 * dt * k1[i];
            ws.rhs(stage, k2);
            for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + 0.5 * dt * k2[i];
            ws.rhs(stage, k3);
            for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + dt * k3[i];
            ws.rhs(stage, k4);
            for (std::size_t i = 0; i < n; ++i) {
                u[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            }
            t += dt;
            ++step;
            check_state(u);
        }
        t = target;
        std::copy(u.begin(), u.end(), frames.begin() + j * n);
    }
    return frames;
}

// ---------------------------------------------------------------------------
// 2-D Navier-Stokes, vorticity form
// ---------------------------------------------------------------------------

std::vector<double> heterns_force(double omega, std::size_t n) {
    std::vector<double> f(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            const double s =
                static_cast<double>(i + j) / static_cast<double>(n);  // x1 + x2
            f[j * n + i] =
                0.1 * (std::sin(omega * kPi * s) + std::cos(omega * kPi * s));
        }
    }
    return f;
}

namespace {

// Spectral scratch for the vorticity solver; index m = j*n + i with kx along
// i and ky along j.
struct NSWorkspace {
    std::size_t n;
    std::vector<double> kx, ky;       // derivative wavenumbers (Nyquist -> 0)
    std::vector<double> lap;          // 4 pi^2 |k|^2
    std::vector<unsigned char> mask;  // 2/3-rule survivor flags
    std::vector<cdouble> fhat;        // force spectrum (empty when unforced)

    std::vector<cdouble> uh, vh, wxh, wyh;

    explicit NSWorkspace(const HeterNSSpec& spec) : n(spec.n) {
        const std::size_t m = n * n;
        kx.resize(m);
        ky.resize(m);
        lap.resize(m);
        mask.resize(m);
        const long cutoff = static_cast<long>(n) / 3;
        for (std::size_t j = 0; j < n; ++j) {
            const int kj = fft_wavenumber(j, n);
            for (std::size_t i = 0; i < n; ++i) {
                const int ki = fft_wavenumber(i, n);
                const std::size_t idx = j * n + i;
                kx[idx] = (2 * i == n) ? 0.0 : static_cast<double>(ki);
                ky[idx] = (2 * j == n) ? 0.0 : static_cast<double>(kj);
                lap[idx] = 4.0 * kPi * kPi *
                           (static_cast<double>(ki) * ki +
                            static_cast<double>(kj) * kj);
                mask[idx] = std::labs(ki) <= cutoff && std::labs(kj) <= cutoff;
            }
        }
        if (spec.omega != 0.0) {
            const std::vector<double> f = heterns_force(spec.omega, n);
            fhat.resize(m);
            for (std::size_t i = 0; i < m; ++i) fhat[i] = cdouble(f[i], 0.0);
            fft2_inplace(fhat, n, n, false);
        }
        uh.resize(m);
        vh.resize(m);
        wxh.resize(m);
        wyh.resize(m);
    }

    // Velocity spectrum from the vorticity spectrum via the streamfunction.
    void velocity(const std::vector<cdouble>& wh, std::vector<cdouble>& u,
                  std::vector<cdouble>& v, bool dealias) {
        const std::size_t m = n * n;
        for (std::size_t idx = 0; idx < m; ++idx) {
            if (lap[idx] == 0.0 || (dealias && !mask[idx])) {
                u[idx] = v[idx] = cdouble(0.0, 0.0);
                continue;
            }
            const cdouble psi = wh[idx] / lap[idx];
            const cdouble i2pi(0.0, 2.0 * kPi);
            u[idx] = i2pi * ky[idx] * psi;
            v[idx] = -i2pi * kx[idx] * psi;
        }
    }

    // Non-stiff right-hand side G(wh) = -dealias(F[(u.grad)w]) + fhat.
    void nonstiff(const std::vector<cdouble>& wh, std::vector<cdouble>& out) {
        const std::size_t m = n * n;
        velocity(wh, uh, vh, /*dealias=*/true);
        const cdouble i2pi(0.0, 2.0 * kPi);
        for (std::size_t idx = 0; idx < m; ++idx) {
            if (!mask[idx]) {
                wxh[idx] = wyh[idx] = cdouble(0.0, 0.0);
                continue;
            }
            wxh[idx] = i2pi * kx[idx] * wh[idx];
            wyh[idx] = i2pi * ky[idx] * wh[idx];
        }
        fft2_inplace(uh, n, n, true);
        fft2_inplace(vh, n, n, true);
        fft2_inplace(wxh, n, n, true);
        fft2_inplace(wyh, n, n, true);
        out.resize(m);
        for (std::size_t idx = 0; idx < m; ++idx) {
            out[idx] = cdouble(uh[idx].real() * wxh[idx].real() +
                                   vh[idx].real() * wyh[idx].real(),
                               0.0);
        }
        fft2_inplace(out, n, n, false);
        for (std::size_t idx = 0; idx < m; ++idx) {
            out[idx] = mask[idx] ? -out[idx] : cdouble(0.0, 0.0);
        }
        out[0] = cdouble(0.0, 0.0);  // advection cannot move the mean
        if (!fhat.empty()) {
            for (std::size_t idx = 0; idx < m; ++idx) out[idx] += fhat[idx];
        }
    }

    double max_speed(const std::vector<cdouble>& wh) {
        velocity(wh, uh, vh, /*dealias=*/false);
        std::vector<cdouble> up = uh, vp = vh;
        fft2_inplace(up, n, n, true);
        fft2_inplace(vp, n, n, true);
        double s = 0.0;
        for (std::size_t idx = 0; idx < n * n; ++idx) {
            s = std::max(s, std::max(std::abs(up[idx].real()),
                                     std::abs(vp[idx].real())));
        }
        return s;
    }
};

}  // namespace

std::vector<double> solve_ns2d_spectral(const HeterNSSpec& spec) {
    const std::size_t n = spec.n;
    if (!is_power_of_two(n) || n < 4) {
        throw std::invalid_argument(
            "solve_ns2d_spectral: grid side must be a power of two >= 4");
    }
    if (spec.w0.size() != n * n) {
        throw std::invalid_argument(
            "solve_ns2d_spectral: initial vorticity must have n*n samples");
    }
    if (!(spec.nu > 0.0)) {
        throw std::invalid_argument("solve_ns2d_spectral: viscosity must be > 0");
    }
    if (spec.n_t == 0) {
        throw std::invalid_argument("solve_ns2d_spectral: n_t must be >= 1");
    }
    if (!(spec.T > 0.0)) {
        throw std::invalid_argument("solve_ns2d_spectral: horizon must be > 0");
    }

    const std::size_t m = n * n;
    NSWorkspace ws(spec);
    std::vector<cdouble> wh(m);
    for (std::size_t i = 0; i < m; ++i) wh[i] = cdouble(spec.w0[i], 0.0);
    fft2_inplace(wh, n, n, false);

    const std::vector<double> times = linspace(0.0, spec.T, spec.n_t);
    std::vector<double> frames(spec.n_t * m);
    std::copy(spec.w0.begin(), spec.w0.end(), frames.begin());

    std::vector<cdouble> k1, k2, k3, k4, stage(m);
    std::vector<double> efull(m), ehalf(m);
    const double dx = 1.0 / static_cast<double>(n);
    std::size_t step = 0;

    auto diverged = [&](double t) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "solve_ns2d_spectral: diverged at step %zu (t=%.6g)", step,
                      t);
        return std::runtime_error(buf);
    };

    for (std::size_t j = 1; j < spec.n_t; ++j) {
        const double interval = times[j] - times[j - 1];
        const double umax = ws.max_speed(wh);
        const double dt_want =
            std::min({0.5 * dx / std::max(umax, 1e-9), interval, 0.05});
        const std::size_t nsub = static_cast<std::size_t>(
            std::ceil(interval / dt_want - 1e-12));
        const double dt = interval / static_cast<double>(nsub);
        for (std::size_t idx = 0; idx < m; ++idx) {
            efull[idx] = std::exp(-spec.nu * ws.lap[idx] * dt);
            ehalf[idx] = std::exp(-spec.nu * ws.lap[idx] * dt * 0.5);
        }

        for (std::size_t sub = 0; sub < nsub; ++sub) {
            // Integrating-factor RK4: the viscous decay is applied exactly
            // while the advective part is treated by classical RK4 stages.
            ws.nonstiff(wh, k1);
            for (std::size_t i = 0; i < m; ++i)
                stage[i] = ehalf[i] * (wh[i] + 0.5 * dt * k1[i]);
            ws.nonstiff(stage, k2);
            for (std::size_t i = 0; i < m; ++i)
                stage[i] = ehalf[i] * wh[i] + 0.5 * dt * k2[i];
            ws.nonstiff(stage, k3);
            for (std::size_t i = 0; i < m; ++i)
                stage[i] = efull[i] * wh[i] + dt * ehalf[i] * k3[i];
            ws.nonstiff(stage, k4);
            for (std::size_t i = 0; i < m; ++i) {
                wh[i] = efull[i] * wh[i] +
                        dt / 6.0 *
                            (efull[i] * k1[i] +
                             2.0 * ehalf[i] * (k2[i] + k3[i]) + k4[i]);
            }
            ++step;
            if (!std::isfinite(wh[0].real()) || !std::isfinite(wh[0].imag())) {
                throw diverged(times[j - 1] + dt * static_cast<double>(sub + 1));
            }
        }

        std::vector<cdouble> wp = wh;
        fft2_inplace(wp, n, n, true);
        for (std::size_t idx = 0; idx < m; ++idx) {
            const double val = wp[idx].real();
            if (!std::isfinite(val) || std::abs(val) > kBlowupLimit) {
                throw diverged(times[j]);
            }
            frames[j * m + idx] = val;
        }
    }
    return frames;
}

std::vector<double> random_band_limited_vorticity(Rng& rng, std::size_t n,
                                                  std::size_t max_mode) {
    if (n < 2) {
        throw std::invalid_argument(
            "random_band_limited_vorticity: grid too small");
    }
    const long mm = static_cast<long>(max_mode);
    std::vector<double> w(n * n, 0.0);
    // One cosine/sine pair per independent mode of the real field: the
    // half-plane ky > 0 plus the kx > 0 slice of the ky = 0 axis.
    auto add_mode = [&](long kxm, long kym) {
        const double a = rng.normal();
        const double b = rng.normal();
        for (std::size_t j = 0; j < n; ++j) {
            const double y = static_cast<double>(j) / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double x = static_cast<double>(i) / static_cast<double>(n);
                const double phase =
                    2.0 * kPi * (static_cast<double>(kxm) * x +
                                 static_cast<double>(kym) * y);
                w[j * n + i] += a * std::cos(phase) + b * std::sin(phase);
            }
        }
    };
    for (long kxm = 1; kxm <= mm; ++kxm) add_mode(kxm, 0);
    for (long kym = 1; kym <= mm; ++kym) {
        for (long kxm = -mm; kxm <= mm; ++kxm) add_mode(kxm, kym);
    }

    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-24));
    for (double& v : w) v = (v - mean) * inv_std;
    return w;
}

}  // namespace unisolver
