#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace unisolver {

using Func1D = std::function<double(double)>;
using Func2D = std::function<double(double, double)>;

// Composite Simpson quadrature panel counts. Both counts must be even and
// positive; O(h^4) convergence assumes a smooth integrand.
struct QuadSpec {
    std::size_t space_panels = 128;
    std::size_t time_panels = 128;
};

// Fixed-end vibrating string: u_tt = a^2 u_xx + f(x, t) on [0, L] with
// u(0, t) = u(L, t) = 0, u(x, 0) = phi(x), u_t(x, 0) = psi(x).
struct StringProblem {
    double length = 1.0;   // L
    double speed = 1.0;    // a
    double horizon = 1.0;  // T
    Func1D phi;
    Func1D psi;
    Func2D force;  // may be empty for an unforced string
};

// Odd 2L-periodic extension of a function given on [0, L]: values in (L, 2L)
// mirror to -g(2L - x), and everything repeats with period 2L. This is the
// image method that turns the fixed-end string into a free-space problem.
class ExtendedFunction {
public:
    ExtendedFunction(Func1D base, double length);
    double operator()(double x) const;

private:
    Func1D base_;
    double length_;
};

// Odd 2L-periodic extension in x of a space-time function.
class ExtendedForce {
public:
    ExtendedForce(Func2D base, double length);
    double operator()(double x, double t) const;

private:
    Func2D base_;
    double length_;
};

// Composite Simpson rule with an even panel count; handles b < a by sign.
double simpson(const Func1D& f, double a, double b, std::size_t panels);

// Throws unless lengths are positive and phi vanishes at both ends
// (|phi| <= 1e-9); an incompatible initial position has no fixed-end
// solution of this form and must be rejected, not silently repaired.
void validate_string_problem(const StringProblem& p);

// The three terms of the closed-form solution
//   u = (Phi(x+at) + Phi(x-at))/2
//     + (1/2a) * integral of Psi over [x-at, x+at]
//     + (1/2a) * integral over tau of integral of F over the domain of
//       dependence [x-a(t-tau), x+a(t-tau)].
// The term functions accept any (x, t) since the formula extends beyond the
// strip; evaluate_solution enforces 0 <= x <= L, 0 <= t <= horizon.
double dalembert_position(const StringProblem& p, double x, double t);
double velocity_integral(const StringProblem& p, double x, double t,
                         const QuadSpec& quad);
double duhamel_integral(const StringProblem& p, double x, double t,
                        const QuadSpec& quad);
double evaluate_solution(const StringProblem& p, double x, double t,
                         const QuadSpec& quad);

// Uniform evaluation over [0, L] x [0, horizon]; row-major [t][x].
std::vector<double> evaluate_solution_grid(const StringProblem& p,
                                           std::size_t n_x, std::size_t n_t,
                                           const QuadSpec& quad);

// Linear interpolation over samples on the uniform grid of [0, length].
Func1D sampled_function(std::vector<double> values, double length);

// Bilinear interpolation of samples on [0, length] x [0, horizon]; values
// row-major [t][x].
Func2D sampled_function_2d(std::vector<double> values, std::size_t n_x,
                           std::size_t n_t, double length, double horizon);

}  // namespace unisolver
