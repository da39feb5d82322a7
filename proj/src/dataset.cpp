#include "unisolver/dataset.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "unisolver/string_oracle.hpp"

namespace unisolver {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Family family_from_string(const std::string& name) {
    if (name == "string") return Family::String;
    if (name == "advection") return Family::Advection;
    if (name == "family1d") return Family::Family1D;
    if (name == "heterns-mini") return Family::HeterNSMini;
    throw std::invalid_argument("unknown dataset family: " + name);
}

std::string family_name(Family family) {
    switch (family) {
        case Family::String: return "string";
        case Family::Advection: return "advection";
        case Family::Family1D: return "family1d";
        case Family::HeterNSMini: return "heterns-mini";
    }
    throw std::logic_error("family_name: bad enum value");
}

namespace {

// Random superposition of sinusoids with integer modes over the domain,
// normalized to unit max amplitude on xs. Used as advection initial data.
std::vector<double> random_periodic_signal(Rng& rng,
                                           const std::vector<double>& xs,
                                           double x0, double period) {
    std::vector<double> u(xs.size(), 0.0);
    double peak = 0.0;
    while (peak < 1e-3) {
        std::fill(u.begin(), u.end(), 0.0);
        for (int term = 0; term < 2; ++term) {
            const int mode = 1 + static_cast<int>(rng.uniform_int(4));
            const double amp = rng.uniform(-1.0, 1.0);
            const double phase = rng.uniform(0.0, 2.0 * kPi);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                u[i] += amp * std::sin(2.0 * kPi * mode * (xs[i] - x0) / period +
                                       phase);
            }
        }
        peak = 0.0;
        for (double v : u) peak = std::max(peak, std::abs(v));
    }
    for (double& v : u) v /= peak;
    return u;
}

Field make_field(std::string name, std::vector<std::size_t> shape,
                 std::vector<double> values) {
    Field f;
    f.name = std::move(name);
    f.shape = std::move(shape);
    f.values = std::move(values);
    return f;
}

const ConditionCombo* combo_for(const TaskSpec& task, std::size_t index) {
    if (task.combos.empty()) return nullptr;
    return &task.combos[index % task.combos.size()];
}

Sample build_advection_sample(const TaskSpec& task, std::size_t index,
                              Rng& rng) {
    const ConditionCombo* combo = combo_for(task, index);
    if (combo == nullptr || combo->coefficients.count("beta") == 0) {
        throw std::invalid_argument(
            "generate_dataset: advection tasks need combos with a 'beta' key");
    }
    const double beta = combo->coefficients.at("beta");
    const GridSpec& grid = task.grid;
    const std::vector<double> xs = spatial_nodes(grid, /*periodic=*/true);
    std::vector<double> u0 =
        random_periodic_signal(rng, xs, grid.x_min, grid.x_max - grid.x_min);

    Sample sample;
    sample.split = combo->split;
    sample.components.symbols = "u_t + \\beta u_x = 0";
    sample.components.coefficients = {{"beta", beta}};
    sample.components.boundary.periodic = true;
    std::vector<double> frames =
        solve_advection_exact(u0, beta, grid, sample.components.boundary);
    sample.inputs.push_back(make_field("u0", {1, grid.n_x}, std::move(u0)));
    sample.outputs.push_back(
        make_field("u", {1, grid.n_t, grid.n_x}, std::move(frames)));
    return sample;
}

Sample build_family1d_sample(const TaskSpec& task, std::size_t index, Rng& rng,
                             std::uint64_t stream_seed) {
    (void)index;
    (void)rng;  // the family spec consumes the stream seed wholesale
    Family1DSpec spec = sample_1d_pde(stream_seed, task.grid);
    std::vector<double> frames = solve_1d_family(spec);  // may throw diverged

    const GridSpec& grid = task.grid;
    Sample sample;
    sample.split = SplitTag::ID;
    sample.components.symbols = family1d_symbols(spec);
    for (int i = 0; i < 2; ++i) {
        for (int k = 1; k <= 3; ++k) {
            char key[8];
            std::snprintf(key, sizeof(key), "c%d%d", i, k);
            sample.components.coefficients[key] = spec.c[i][k - 1];
        }
    }
    sample.components.boundary = spec.boundary;
    if (!spec.s.empty()) {
        sample.components.has_force = true;
        sample.components.force = make_field("s", {1, grid.n_x}, spec.s);
    }
    if (!spec.kappa.empty()) {
        sample.components.has_kappa = true;
        sample.components.kappa = make_field("kappa", {1, grid.n_x}, spec.kappa);
    }
    if (!spec.boundary.periodic) {
        std::vector<double> bv(grid.n_x, 0.0);
        bv.front() = spec.boundary.left.gamma;
        bv.back() = spec.boundary.right.gamma;
        sample.components.has_boundary_values = true;
        sample.components.boundary_values =
            make_field("bv", {1, grid.n_x}, std::move(bv));
    }
    sample.inputs.push_back(make_field("u0", {1, grid.n_x}, spec.g));
    sample.outputs.push_back(
        make_field("u", {1, grid.n_t, grid.n_x}, std::move(frames)));
    return sample;
}

Sample build_heterns_sample(const TaskSpec& task, std::size_t index, Rng& rng) {
    const ConditionCombo* combo = combo_for(task, index);
    if (combo == nullptr || combo->coefficients.count("nu") == 0 ||
        combo->coefficients.count("omega") == 0) {
        throw std::invalid_argument(
            "generate_dataset: heterns-mini tasks need combos with 'nu' and "
            "'omega' keys");
    }
    const GridSpec& grid = task.grid;
    if (grid.spatial_dims != 2 || grid.n_x != grid.n_y || grid.n_t < 2) {
        throw std::invalid_argument(
            "generate_dataset: heterns-mini needs a square 2-D grid with "
            "n_t >= 2");
    }
    HeterNSSpec spec;
    spec.nu = combo->coefficients.at("nu");
    spec.omega = combo->coefficients.at("omega");
    spec.n = grid.n_x;
    spec.T = grid.t_max;
    spec.n_t = grid.n_t;
    spec.w0 = random_band_limited_vorticity(rng, spec.n);
    std::vector<double> frames = solve_ns2d_spectral(spec);

    const std::size_t m = spec.n * spec.n;
    Sample sample;
    sample.split = combo->split;
    sample.components.symbols =
        spec.omega != 0.0
            ? "w_t + u \\cdot \\nabla w = \\nu \\Delta w + f(x)"
            : "w_t + u \\cdot \\nabla w = \\nu \\Delta w";
    sample.components.coefficients = {{"nu", spec.nu}, {"omega", spec.omega}};
    sample.components.boundary.periodic = true;
    if (spec.omega != 0.0) {
        sample.components.has_force = true;
        sample.components.force = make_field(
            "f", {1, spec.n, spec.n}, heterns_force(spec.omega, spec.n));
    }
    // The first n_t - 1 snapshots are the observed history; the final one is
    // the prediction target.
    std::vector<double> history(frames.begin(),
                                frames.begin() + (grid.n_t - 1) * m);
    std::vector<double> target(frames.begin() + (grid.n_t - 1) * m,
                               frames.end());
    sample.inputs.push_back(make_field("w_in", {grid.n_t - 1, spec.n, spec.n},
                                       std::move(history)));
    sample.outputs.push_back(
        make_field("w_out", {1, spec.n, spec.n}, std::move(target)));
    return sample;
}

Sample build_string_sample(const TaskSpec& task, std::size_t index, Rng& rng) {
    const ConditionCombo* combo = combo_for(task, index);
    const double speed = combo != nullptr && combo->coefficients.count("a")
                             ? combo->coefficients.at("a")
                             : task.string_speed;
    const GridSpec& grid = task.grid;
    if (grid.x_min != 0.0) {
        throw std::invalid_argument(
            "generate_dataset: string tasks put the left end at x=0");
    }
    const double length = grid.x_max;

    // Fixed-end compatible initial data: a short sine series vanishes at both
    // walls by construction.
    std::array<double, 3> phi_amp{}, psi_amp{};
    for (auto& a : phi_amp) a = rng.uniform(-1.0, 1.0);
    for (auto& a : psi_amp) a = 0.5 * rng.uniform(-1.0, 1.0);
    const bool forced = rng.bernoulli(0.5);
    const int force_mode = 1 + static_cast<int>(rng.uniform_int(3));
    const double force_amp = forced ? rng.uniform(-0.5, 0.5) : 0.0;
    const double force_freq = rng.uniform(0.5, 3.0);

    auto series = [length](const std::array<double, 3>& amp) {
        return [amp, length](double x) {
            double acc = 0.0;
            for (std::size_t m = 0; m < amp.size(); ++m) {
                acc += amp[m] *
                       std::sin(static_cast<double>(m + 1) * kPi * x / length);
            }
            return acc;
        };
    };

    StringProblem problem;
    problem.length = length;
    problem.speed = speed;
    problem.horizon = grid.t_max;
    problem.phi = series(phi_amp);
    problem.psi = series(psi_amp);
    if (forced) {
        problem.force = [force_amp, force_mode, force_freq, length](double x,
                                                                    double t) {
            return force_amp * std::sin(force_mode * kPi * x / length) *
                   std::cos(force_freq * t);
        };
    }

    const std::vector<double> xs = spatial_nodes(grid, /*periodic=*/false);
    const std::vector<double> times = frame_times(grid);
    // Generation trades a little quadrature accuracy (~1e-5) for speed.
    const QuadSpec quad{64, 64};
    std::vector<double> frames(times.size() * xs.size());
    std::vector<double> force_frames;
    for (std::size_t j = 0; j < times.size(); ++j) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            frames[j * xs.size() + i] =
                evaluate_solution(problem, xs[i], times[j], quad);
        }
    }
    if (forced) {
        force_frames.resize(frames.size());
        for (std::size_t j = 0; j < times.size(); ++j) {
            for (std::size_t i = 0; i < xs.size(); ++i) {
                force_frames[j * xs.size() + i] =
                    problem.force(xs[i], times[j]);
            }
        }
    }

    Sample sample;
    sample.split = combo != nullptr ? combo->split : SplitTag::ID;
    sample.components.symbols = forced ? "u_{tt} = a^2 u_{xx} + f(x,t)"
                                       : "u_{tt} = a^2 u_{xx}";
    sample.components.coefficients = {{"a", speed}};
    sample.components.boundary.periodic = false;
    sample.components.boundary.left = {BoundaryKind::Dirichlet, 1.0, 0.0, 0.0};
    sample.components.boundary.right = {BoundaryKind::Dirichlet, 1.0, 0.0, 0.0};
    if (forced) {
        sample.components.has_force = true;
        sample.components.force =
            make_field("f", {1, grid.n_t, grid.n_x}, std::move(force_frames));
    }
    std::vector<double> initial(2 * xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        initial[i] = problem.phi(xs[i]);
        initial[xs.size() + i] = problem.psi(xs[i]);
    }
    sample.inputs.push_back(make_field("u0", {2, grid.n_x}, std::move(initial)));
    sample.outputs.push_back(
        make_field("u", {1, grid.n_t, grid.n_x}, std::move(frames)));
    return sample;
}

Sample build_sample(const TaskSpec& task, std::size_t index,
                    std::uint64_t stream_seed) {
    Rng rng(stream_seed);
    switch (task.family) {
        case Family::Advection:
            return build_advection_sample(task, index, rng);
        case Family::Family1D:
            return build_family1d_sample(task, index, rng, stream_seed);
        case Family::HeterNSMini:
            return build_heterns_sample(task, index, rng);
        case Family::String:
            return build_string_sample(task, index, rng);
    }
    throw std::logic_error("build_sample: bad family enum");
}

std::size_t worker_count(std::size_t n_tasks) {
    const unsigned hw = std::thread::hardware_concurrency();
    std::size_t workers = hw == 0 ? 1 : std::min<std::size_t>(hw, 8);
    if (const char* env = std::getenv("UNISOLVER_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end != env && parsed >= 1) workers = static_cast<std::size_t>(parsed);
    }
    return std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(n_tasks, 1)));
}

}  // namespace

Dataset generate_dataset(const TaskSpec& task, std::size_t n_samples,
                         std::uint64_t seed) {
    if (n_samples == 0) {
        throw std::invalid_argument("generate_dataset: n_samples must be > 0");
    }
    Dataset dataset;
    dataset.family = task.family;
    dataset.grid = task.grid;
    dataset.samples.resize(n_samples);

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> retries{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    constexpr std::size_t kMaxAttempts = 64;

    auto run = [&]() {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t index = next.fetch_add(1);
            if (index >= n_samples) break;
            try {
                const std::uint64_t sample_seed = Rng::derive_stream(seed, index);
                std::size_t attempt = 0;
                for (;; ++attempt) {
                    if (attempt == kMaxAttempts) {
                        throw std::runtime_error(
                            "generate_dataset: sample " + std::to_string(index) +
                            " kept diverging after " +
                            std::to_string(kMaxAttempts) + " attempts");
                    }
                    try {
                        dataset.samples[index] = build_sample(
                            task, index,
                            Rng::derive_stream(sample_seed, attempt));
                        break;
                    } catch (const std::runtime_error&) {
                        // Diverged solve: retry on a fresh sub-stream so the
                        // published coefficient distribution stays unbiased.
                        retries.fetch_add(1);
                    }
                }
                const std::vector<std::string> violations =
                    validate(dataset.samples[index], task.grid);
                if (!violations.empty()) {
                    throw std::logic_error(
                        "generate_dataset: sample " + std::to_string(index) +
                        " failed validation: " + violations.front());
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                break;
            }
        }
    };

    const std::size_t workers = worker_count(n_samples);
    if (workers <= 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    dataset.retry_count = retries.load();
    const double budget =
        task.max_divergence_rate * static_cast<double>(n_samples);
    if (static_cast<double>(dataset.retry_count) > budget) {
        char percent[32];
        std::snprintf(percent, sizeof(percent), "%g%%",
                      task.max_divergence_rate * 100.0);
        throw std::runtime_error(
            "generate_dataset: divergence rate exceeded " +
            std::string(percent) + " (" + std::to_string(dataset.retry_count) +
            " retries for " + std::to_string(n_samples) + " samples)");
    }
    return dataset;
}

TaskSpec advection_task(const std::vector<double>& betas_id,
                        const std::vector<double>& betas_ood, std::size_t n_x,
                        double t_out) {
    TaskSpec task;
    task.family = Family::Advection;
    task.grid.spatial_dims = 1;
    task.grid.n_x = n_x;
    task.grid.n_t = 1;
    task.grid.x_min = 0.0;
    task.grid.x_max = 1.0;
    task.grid.t_min = t_out;
    task.grid.t_max = t_out;
    for (double beta : betas_id) {
        task.combos.push_back({{{"beta", beta}}, SplitTag::ID});
    }
    for (double beta : betas_ood) {
        task.combos.push_back({{{"beta", beta}}, SplitTag::OOD});
    }
    return task;
}

TaskSpec heterns_mini_task(const std::vector<double>& nus,
                           const std::vector<double>& omegas, SplitTag split,
                           std::size_t n, double T, std::size_t n_t) {
    TaskSpec task;
    task.family = Family::HeterNSMini;
    task.grid.spatial_dims = 2;
    task.grid.n_x = n;
    task.grid.n_y = n;
    task.grid.n_t = n_t;
    task.grid.x_min = 0.0;
    task.grid.x_max = 1.0;
    task.grid.y_min = 0.0;
    task.grid.y_max = 1.0;
    task.grid.t_min = 0.0;
    task.grid.t_max = T;
    for (double nu : nus) {
        for (double omega : omegas) {
            task.combos.push_back({{{"nu", nu}, {"omega", omega}}, split});
        }
    }
    return task;
}

TaskSpec family1d_task(std::size_t n_x, std::size_t n_t) {
    TaskSpec task;
    task.family = Family::Family1D;
    task.grid = default_family1d_grid();
    task.grid.n_x = n_x;
    task.grid.n_t = n_t;
    // Measured blow-up rate for the coefficient family is ~25%; a 50% budget
    // keeps generation deterministic-safe without biasing the distribution.
    task.max_divergence_rate = 0.50;
    return task;
}

TaskSpec string_task(std::size_t n_x, std::size_t n_t, double speed,
                     double horizon) {
    TaskSpec task;
    task.family = Family::String;
    task.string_speed = speed;
    task.grid.spatial_dims = 1;
    task.grid.n_x = n_x;
    task.grid.n_t = n_t;
    task.grid.x_min = 0.0;
    task.grid.x_max = 1.0;
    task.grid.t_min = horizon / static_cast<double>(n_t);
    task.grid.t_max = horizon;
    return task;
}

}  // namespace unisolver
