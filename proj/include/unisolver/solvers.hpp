#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "unisolver/pde_components.hpp"
#include "unisolver/rng.hpp"

namespace unisolver {

// n evenly spaced values covering [a, b]; n == 1 yields {a}.
std::vector<double> linspace(double a, double b, std::size_t n);

// Snapshot times of a grid: linspace(t_min, t_max, n_t).
std::vector<double> frame_times(const GridSpec& grid);

// Spatial node coordinates. Periodic problems sample the left-edge grid
// x_i = x_min + i * (x_max - x_min) / n_x (the right endpoint aliases the
// left); non-periodic problems use the vertex grid including both endpoints
// with spacing (x_max - x_min) / (n_x - 1).
std::vector<double> spatial_nodes(const GridSpec& grid, bool periodic);

// ---------------------------------------------------------------------------
// Exact 1-D advection: u_t + beta u_x = 0, u(0, x) = u0(x), periodic domain.
// ---------------------------------------------------------------------------

// Cyclically shift a periodically sampled signal right by `frac` periods
// (u_out(x) = u_in(x - frac * period)). Power-of-two lengths use the spectral
// phase factor; other lengths fall back to periodic linear interpolation.
// A whole-period shift (frac integral) is an exact copy in both modes.
std::vector<double> periodic_shift(const std::vector<double>& u, double frac);

// u0 sampled on the left-edge grid of `grid`. Returns row-major [n_t][n_x]
// frames u(t_j, x) = u0(x - beta t_j) at the grid snapshot times. Throws if
// the boundary is not periodic: the translation solution needs periodicity.
std::vector<double> solve_advection_exact(const std::vector<double>& u0,
                                          double beta, const GridSpec& grid,
                                          const BoundaryCondition& bc);

// ---------------------------------------------------------------------------
// 1-D conservative reaction/flux/diffusion family:
//   u_t + f0(u) + s(x) + d/dx( f1(u) - kappa(x) u_x ) = 0 on [-1,1] x [0,1],
//   f_i(u) = c_i1 u + c_i2 u^2 + c_i3 u^3,   u(0, x) = g(x).
// ---------------------------------------------------------------------------

struct Family1DSpec {
    // c[i][k-1] multiplies u^k inside f_i.
    std::array<std::array<double, 3>, 2> c{{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}}};
    std::vector<double> s;      // source samples on the grid nodes; empty = 0
    std::vector<double> kappa;  // diffusion samples, >= 0; empty = 0
    std::vector<double> g;      // initial condition samples on the grid nodes
    BoundaryCondition boundary;
    GridSpec grid;
    // Upper bound on adaptive sub-steps: a state drifting toward blow-up
    // shrinks the CFL step quadratically, so a budget converts a near-hung
    // solve into a reported failure the caller can resample.
    std::size_t max_steps = 200000;
};

// Default sampling grid for the 1-D family: x in [-1, 1] with 128 periodic
// cells (or 129 vertices when non-periodic), 32 output frames over
// [1/32, 1] so the frame spacing is exactly 1/32.
GridSpec default_family1d_grid();

// Draws one random member of the family: each polynomial coefficient is zero
// with probability 1/2 and Uniform[-3, 3] otherwise; the boundary is periodic
// with probability 1/2, otherwise each endpoint independently takes the
// Dirichlet / Neumann / Robin form with data read off the initial condition
// so the two are compatible at t = 0. The initial condition is a two-term
// random sinusoid normalized to unit max amplitude; the source and diffusion
// fields are each present with probability 1/2.
Family1DSpec sample_1d_pde(std::uint64_t rng_seed);
Family1DSpec sample_1d_pde(std::uint64_t rng_seed, const GridSpec& grid);

// Symbolic form of the equation with zero-coefficient terms omitted, e.g.
// "u_t + 2.1 u - 0.75 u^3 + s(x) + (1.4 u^2 - \kappa(x) u_x)_x = 0".
std::string family1d_symbols(const Family1DSpec& spec);

// Method-of-lines solve: local Lax-Friedrichs flux for f1, central second
// differences for the diffusion term, pointwise reaction and source, and
// classical RK4 in time with the step re-chosen each iteration as
//   dt = 0.4 * min(dx / max|f1'(u)|, dx^2 / (2 max kappa), 1 / max|f0'(u)|).
// Boundaries enter through ghost nodes (periodic wrap, or the Robin-form
// one-sided relations; Dirichlet endpoints are pinned). Returns row-major
// [n_t][n_x] frames at the grid snapshot times; throws a diverged error
// naming the step once |u| exceeds 1e6 or turns non-finite.
std::vector<double> solve_1d_family(const Family1DSpec& spec);

// ---------------------------------------------------------------------------
// 2-D incompressible Navier-Stokes in vorticity form on the unit torus:
//   w_t + (u . grad) w = nu Laplacian(w) + f,  u = (psi_y, -psi_x),
//   Laplacian(psi) = -w.
// ---------------------------------------------------------------------------

struct HeterNSSpec {
    double nu = 1e-3;       // viscosity, > 0
    double omega = 0.0;     // forcing frequency; 0 disables the force
    std::vector<double> w0; // initial vorticity, row-major n x n
    std::size_t n = 64;     // grid points per side (power of two)
    double T = 10.0;        // horizon
    std::size_t n_t = 11;   // snapshots at linspace(0, T, n_t)
};

// f(x) = 0.1 (sin(omega pi (x1 + x2)) + cos(omega pi (x1 + x2))) sampled on
// the n x n left-edge torus grid, row-major with x2 as the row index.
std::vector<double> heterns_force(double omega, std::size_t n);

// Pseudo-spectral solve: streamfunction velocity via the spectral inverse
// Laplacian (zero-mean mode pinned to zero), nonlinear term formed in
// physical space under the 2/3 dealiasing rule, the viscous term handled
// exactly by an integrating factor, and RK4 for the rest. The time step is
// re-chosen per snapshot interval from the advective CFL limit. Returns
// row-major [n_t][n*n] frames; frame 0 is the initial vorticity verbatim.
// Throws a diverged error naming the step on NaN or |w| > 1e6.
std::vector<double> solve_ns2d_spectral(const HeterNSSpec& spec);

// Zero-mean Gaussian random field band-limited to |k_x|, |k_y| <= max_mode,
// normalized to unit variance over the grid. Used as initial vorticity.
std::vector<double> random_band_limited_vorticity(Rng& rng, std::size_t n,
                                                  std::size_t max_mode = 8);

}  // namespace unisolver
