#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unisolver/pde_components.hpp"
#include "unisolver/solvers.hpp"

namespace unisolver {

enum class Family { String, Advection, Family1D, HeterNSMini };

Family family_from_string(const std::string& name);
std::string family_name(Family family);

// One point of the condition grid a dataset cycles through: a coefficient
// assignment plus its ID/OOD tag. Families whose conditions are drawn per
// sample (family1d, string without combos) may leave the list empty.
struct ConditionCombo {
    std::map<std::string, double> coefficients;
    SplitTag split = SplitTag::ID;
};

struct TaskSpec {
    Family family = Family::Advection;
    GridSpec grid;
    std::vector<ConditionCombo> combos;
    double string_speed = 1.0;  // wave speed when no combos are given
    // Abort threshold: generation fails once retries exceed this fraction of
    // the requested sample count. The random 1-D family ships with a larger
    // budget because roughly a quarter of its coefficient draws produce
    // genuine finite-time blow-up (cubic/quadratic reaction escape), and
    // those solves are resampled rather than clipped.
    double max_divergence_rate = 0.10;
};

// In-memory dataset: the serialized container mirrors this exactly.
struct Dataset {
    Family family = Family::Advection;
    GridSpec grid;
    std::vector<Sample> samples;
    std::size_t retry_count = 0;  // resampled diverged solves
};

// Generates n_samples fully populated samples, cycling the task's condition
// combos round-robin (sample i takes combos[i % size]). Every sample draws
// from its own stream derived from (seed, index), so the result is
// byte-identical regardless of thread count; UNISOLVER_THREADS caps the
// worker pool. Diverged solves are retried on a fresh sub-stream; generation
// aborts once retries exceed the task's divergence budget.
Dataset generate_dataset(const TaskSpec& task, std::size_t n_samples,
                         std::uint64_t seed);

// Convenience task builders used by the CLI and tests.
TaskSpec advection_task(const std::vector<double>& betas_id,
                        const std::vector<double>& betas_ood,
                        std::size_t n_x = 64, double t_out = 0.5);
TaskSpec heterns_mini_task(const std::vector<double>& nus,
                           const std::vector<double>& omegas, SplitTag split,
                           std::size_t n = 64, double T = 10.0,
                           std::size_t n_t = 11);
TaskSpec family1d_task(std::size_t n_x = 128, std::size_t n_t = 32);
TaskSpec string_task(std::size_t n_x = 64, std::size_t n_t = 16,
                     double speed = 1.0, double horizon = 1.0);

}  // namespace unisolver
