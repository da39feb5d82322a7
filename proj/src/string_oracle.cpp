#include "unisolver/string_oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unisolver {

namespace {

// Folds x into [0, 2L) by periodicity, then reports the source point in
// [0, L] and the sign of the odd reflection.
struct Folded {
    double x;
    double sign;
};

Folded fold_odd_periodic(double x, double length) {
    double period = 2.0 * length;
    double r = std::fmod(x, period);
    if (r < 0.0) r += period;
    if (r <= length) return {r, 1.0};
    return {period - r, -1.0};
}

}  // namespace

ExtendedFunction::ExtendedFunction(Func1D base, double length)
    : base_(std::move(base)), length_(length) {
    if (!(length_ > 0.0))
        throw std::invalid_argument("ExtendedFunction: length must be positive");
    if (!base_) throw std::invalid_argument("ExtendedFunction: empty function");
}

double ExtendedFunction::operator()(double x) const {
    Folded f = fold_odd_periodic(x, length_);
    return f.sign * base_(f.x);
}

ExtendedForce::ExtendedForce(Func2D base, double length)
    : base_(std::move(base)), length_(length) {
    if (!(length_ > 0.0))
        throw std::invalid_argument("ExtendedForce: length must be positive");
    if (!base_) throw std::invalid_argument("ExtendedForce: empty function");
}

double ExtendedForce::operator()(double x, double t) const {
    Folded f = fold_odd_periodic(x, length_);
    return f.sign * base_(f.x, t);
}

double simpson(const Func1D& f, double a, double b, std::size_t panels) {
    if (panels == 0 || panels % 2 != 0)
        throw std::invalid_argument("simpson: panel count must be even, got " +
                                    std::to_string(panels));
    double h = (b - a) / static_cast<double>(panels);
    double acc = f(a) + f(b);
    for (std::size_t j = 1; j < panels; ++j) {
        double w = (j % 2 == 1) ? 4.0 : 2.0;
        acc += w * f(a + h * static_cast<double>(j));
    }
    return acc * h / 3.0;
}

void validate_string_problem(const StringProblem& p) {
    if (!(p.length > 0.0) || !(p.speed > 0.0) || !(p.horizon > 0.0))
        throw std::invalid_argument(
            "string problem: length, speed, horizon must all be positive");
    if (!p.phi || !p.psi)
        throw std::invalid_argument("string problem: phi and psi are required");
    double p0 = p.phi(0.0);
    double pl = p.phi(p.length);
    if (std::fabs(p0) > 1e-9 || std::fabs(pl) > 1e-9)
        throw std::invalid_argument(
            "string problem: phi must vanish at both ends, got phi(0) = " +
            std::to_string(p0) + ", phi(L) = " + std::to_string(pl));
}

double dalembert_position(const StringProblem& p, double x, double t) {
    ExtendedFunction ext(p.phi, p.length);
    return 0.5 * (ext(x + p.speed * t) + ext(x - p.speed * t));
}

double velocity_integral(const StringProblem& p, double x, double t,
                         const QuadSpec& quad) {
    ExtendedFunction ext(p.psi, p.length);
    double a = p.speed;
    return simpson([&](double xi) { return ext(xi); }, x - a * t, x + a * t,
                   quad.space_panels) /
           (2.0 * a);
}

double duhamel_integral(const StringProblem& p, double x, double t,
                        const QuadSpec& quad) {
    if (!p.force) return 0.0;
    ExtendedForce ext(p.force, p.length);
    double a = p.speed;
    auto inner = [&](double tau) {
        double half = a * (t - tau);
        return simpson([&](double xi) { return ext(xi, tau); }, x - half,
                       x + half, quad.space_panels);
    };
    return simpson(inner, 0.0, t, quad.time_panels) / (2.0 * a);
}

double evaluate_solution(const StringProblem& p, double x, double t,
                         const QuadSpec& quad) {
    validate_string_problem(p);
    if (x < 0.0 || x > p.length)
        throw std::invalid_argument("evaluate_solution: x = " +
                                    std::to_string(x) + " outside [0, L]");
    if (t < 0.0 || t > p.horizon)
        throw std::invalid_argument("evaluate_solution: t = " +
                                    std::to_string(t) +
                                    " outside [0, horizon]");
    return dalembert_position(p, x, t) + velocity_integral(p, x, t, quad) +
           duhamel_integral(p, x, t, quad);
}

std::vector<double> evaluate_solution_grid(const StringProblem& p,
                                           std::size_t n_x, std::size_t n_t,
                                           const QuadSpec& quad) {
    if (n_x < 2 || n_t < 2)
        throw std::invalid_argument("evaluate_solution_grid: need n_x, n_t >= 2");
    validate_string_problem(p);
    std::vector<double> out(n_x * n_t);
    for (std::size_t j = 0; j < n_t; ++j) {
        double t = p.horizon * static_cast<double>(j) /
                   static_cast<double>(n_t - 1);
        for (std::size_t i = 0; i < n_x; ++i) {
            double x = p.length * static_cast<double>(i) /
                       static_cast<double>(n_x - 1);
            out[j * n_x + i] = dalembert_position(p, x, t) +
                               velocity_integral(p, x, t, quad) +
                               duhamel_integral(p, x, t, quad);
        }
    }
    return out;
}

Func1D sampled_function(std::vector<double> values, double length) {
    if (values.size() < 2)
        throw std::invalid_argument("sampled_function: need at least 2 samples");
    if (!(length > 0.0))
        throw std::invalid_argument("sampled_function: length must be positive");
    return [values = std::move(values), length](double x) {
        double pos = x / length * static_cast<double>(values.size() - 1);
        if (pos <= 0.0) return values.front();
        if (pos >= static_cast<double>(values.size() - 1)) return values.back();
        std::size_t i = static_cast<std::size_t>(pos);
        double frac = pos - static_cast<double>(i);
        return values[i] * (1.0 - frac) + values[i + 1] * frac;
    };
}

Func2D sampled_function_2d(std::vector<double> values, std::size_t n_x,
                           std::size_t n_t, double length, double horizon) {
    if (n_x < 2 || n_t < 2 || values.size() != n_x * n_t)
        throw std::invalid_argument(
            "sampled_function_2d: values must form an n_t x n_x grid");
    if (!(length > 0.0) || !(horizon > 0.0))
        throw std::invalid_argument(
            "sampled_function_2d: length and horizon must be positive");
    return [values = std::move(values), n_x, n_t, length, horizon](double x,
                                                                   double t) {
        auto clamp01 = [](double v, double hi) {
            return v < 0.0 ? 0.0 : (v > hi ? hi : v);
        };
        double px = clamp01(x / length * static_cast<double>(n_x - 1),
                            static_cast<double>(n_x - 1));
        double pt = clamp01(t / horizon * static_cast<double>(n_t - 1),
                            static_cast<double>(n_t - 1));
        std::size_t i = static_cast<std::size_t>(px);
        std::size_t j = static_cast<std::size_t>(pt);
        if (i + 1 >= n_x) i = n_x - 2;
        if (j + 1 >= n_t) j = n_t - 2;
        double fx = px - static_cast<double>(i);
        double ft = pt - static_cast<double>(j);
        double v00 = values[j * n_x + i], v01 = values[j * n_x + i + 1];
        double v10 = values[(j + 1) * n_x + i], v11 = values[(j + 1) * n_x + i + 1];
        return (v00 * (1.0 - fx) + v01 * fx) * (1.0 - ft) +
               (v10 * (1.0 - fx) + v11 * fx) * ft;
    };
}

}  // namespace unisolver
