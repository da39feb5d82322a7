#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "unisolver/patches.hpp"
#include "unisolver/pde_components.hpp"
#include "unisolver/rng.hpp"
#include "unisolver/tensor.hpp"

namespace unisolver {

// Splits LaTeX-ish text into lexemes: backslash commands, letters, digit
// runs, and single punctuation marks. Whitespace separates but never
// appears.
std::vector<std::string> latex_lexemes(const std::string& text);

// Uniform Xavier/Glorot initialization for a [fan_in, fan_out] matrix.
Tensor xavier_uniform(Shape shape, Rng& rng);

// Deterministic text-to-vector embedder. Hashed mode buckets the lexeme bag
// through FNV-1a and L2-normalizes; table mode looks vectors up verbatim
// (for embeddings computed offline by a language model and mean-pooled over
// its token sequence).
class SymbolEmbedder {
public:
    static SymbolEmbedder hashed(std::size_t dim = 64);
    static SymbolEmbedder table(std::size_t dim,
                                std::map<std::string, std::vector<float>> entries);

    // File format: magic "UEMB", u16 version, u32 dim, then records of
    // (length-prefixed UTF-8 string, dim little-endian f32) until EOF.
    static SymbolEmbedder load_file(const std::string& path);
    void save_file(const std::string& path) const;

    std::size_t dim() const { return dim_; }
    bool is_hashed() const { return hashed_; }
    std::vector<double> embed(const std::string& symbols) const;

private:
    SymbolEmbedder() = default;
    bool hashed_ = true;
    std::size_t dim_ = 64;
    std::map<std::string, std::vector<float>> table_;
};

// The point-wise field roles an embedder can adapt. Each gets its own
// zero-initialized linear map so adding a role never perturbs a trained
// model until the new adapter receives updates.
enum class PointFieldKind : std::uint8_t {
    Force = 0,
    Kappa = 1,
    Geometry = 2,
    BoundaryValues = 3,
};

const char* point_field_name(PointFieldKind kind);

struct PointFieldSpec {
    PointFieldKind kind = PointFieldKind::Force;
    std::size_t channels = 1;
};

// Per-sample deep conditions: one vector for the whole sample plus one
// vector per input token.
struct DeepConditions {
    Tensor domain;  // [1, d_cond]
    Tensor point;   // [tokens, d_cond]
};

struct ConditionEmbedderConfig {
    std::size_t symbol_dim = 64;  // must match the symbol embedder
    std::size_t d_cond = 64;      // output width (hidden width too)
    std::vector<std::string> coefficient_keys;  // fixed order; may be empty
    std::vector<PointFieldSpec> point_fields;
    PatchSpec patch;
    std::size_t grid_h = 1;  // input grid extents the point fields live on
    std::size_t grid_w = 64;
};

// Width of the boundary descriptor fed to the boundary-type adapter:
// [periodic, left one-hot(Dirichlet, Neumann, Robin), left alpha/beta/gamma,
//  right one-hot, right alpha/beta/gamma].
constexpr std::size_t kBoundaryDescriptorWidth = 13;

// Maps PDE components to deep conditions through per-component adapters.
// Domain-wise components (symbols vector, coefficient values, boundary
// descriptor) each pass through their own two-layer SiLU MLP into d_cond and
// are summed; point-wise fields are patchified exactly like the model input
// and linearly mapped per role, summed per token. Domain MLPs carry normal
// initialization; point-field adapters start at zero so a field role
// contributes nothing until trained, and absent components contribute exact
// zeros structurally regardless of the weights.
class ConditionEmbedder {
public:
    ConditionEmbedder(ConditionEmbedderConfig config, SymbolEmbedder symbols,
                      Rng& init_rng);

    const ConditionEmbedderConfig& config() const { return config_; }
    std::size_t token_count() const;

    // Trainable parameters in a fixed, reproducible name order.
    std::vector<std::pair<std::string, Tensor>> parameters() const;

    // Full per-sample path: builds the input leaves from the components and
    // runs both condition branches.
    DeepConditions embed(const PDEComponents& comps) const;

    // Differentiable building blocks (tests drive these with grad-requiring
    // leaves). Undefined tensors mean "component absent" and contribute
    // exact zeros.
    Tensor domain_conditions(const Tensor& symbols_vec,
                             const Tensor& coefficients,
                             const Tensor& boundary) const;
    Tensor point_conditions(
        const std::vector<std::pair<PointFieldKind, Tensor>>& fields) const;

    static Tensor boundary_descriptor(const BoundaryCondition& bc);

private:
    struct Mlp {
        Tensor w1, b1, w2, b2;
        std::size_t in = 0;
    };
    struct PointAdapter {
        PointFieldSpec spec;
        Tensor w, b;
    };

    Tensor run_mlp(const Mlp& mlp, const Tensor& x) const;
    const PointAdapter* adapter_for(PointFieldKind kind) const;

    ConditionEmbedderConfig config_;
    SymbolEmbedder symbols_;
    Mlp symbols_mlp_, coeff_mlp_, boundary_mlp_;
    bool has_coeff_mlp_ = false;
    std::vector<PointAdapter> point_adapters_;
};

}  // namespace unisolver
