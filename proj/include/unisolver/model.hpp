#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unisolver/embedding.hpp"
#include "unisolver/patches.hpp"
#include "unisolver/rng.hpp"
#include "unisolver/tensor.hpp"

namespace unisolver {

// How the network maps tokens back to physics:
//  - Frames: K input frames (as channels) over a spatial grid map to M
//    output frames over the same grid.
//  - FullField: a 1-D initial condition is broadcast along the time axis and
//    the whole (t, x) solution field is emitted at once through 2-D
//    space-time patches.
enum class TaskMode : std::uint8_t { Frames = 0, FullField = 1 };

struct ModelConfig {
    std::size_t d_feature = 64;
    double alpha = 0.5;  // share of features driven by sample-wide conditions
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_head = 16;
    PatchSpec patch{1, 4};
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t grid_h = 1;  // spatial input grid (1 for 1-D tasks)
    std::size_t grid_w = 64;
    std::size_t time_steps = 1;  // FullField only: output time extent
    TaskMode task_mode = TaskMode::Frames;
    std::size_t d_cond = 64;  // width of the DeepConditions vectors
};

// Feature split between the sample-wide and per-token condition subspaces:
// (floor(alpha * d_feature), remainder). Degenerate splits are config errors.
std::pair<std::size_t, std::size_t> split_subspace(const ModelConfig& config);

// Throws std::invalid_argument describing the first inconsistency.
void validate_config(const ModelConfig& config);

// Transformer with conditioned blocks. Every block runs pre-norm multi-head
// self-attention and a feedforward, each wrapped in (scale, shift, select)
// modulation produced from the deep conditions: the first d_domain feature
// channels are driven by the sample-wide vector (repeated across tokens),
// the rest by the per-token vectors. All condition projections end in a
// zero-initialized layer, so a fresh model's blocks are exact identities and
// its output ignores the conditions entirely.
class UnisolverModel {
public:
    UnisolverModel(ModelConfig config, Rng& init_rng);

    const ModelConfig& config() const { return config_; }
    std::size_t token_count() const { return tokens_; }

    // Trainable parameters in a fixed, reproducible name order.
    std::vector<std::pair<std::string, Tensor>> parameters() const;

    enum class Site : std::uint8_t { Attention = 0, Feedforward = 1 };
    struct Triple {
        Tensor scale, shift, select;  // each [tokens, d_feature]
    };

    // Modulation triple for one block site. scale is parameterized as 1 + d
    // with d zero-initialized.
    Triple condition_triple(const DeepConditions& cond, std::size_t layer,
                            Site site) const;

    // One conditioned block: x + select * Attn(scale * LN(x) + shift), then
    // the feedforward analogue.
    Tensor block_forward(const Tensor& x, const Triple& attn_triple,
                         const Triple& ffn_triple, std::size_t layer) const;

    // Full network: patchify + positional encoding, N conditioned blocks,
    // conditional (scale, shift) on the final tokens, linear read-out,
    // unpatchify.
    Tensor forward(const Tensor& field, const DeepConditions& cond) const;

    // Degenerate mode: every (scale, shift, select) pinned to (1, 0, 1) and
    // the head modulation disabled — a standard pre-norm ViT on the same
    // weights.
    Tensor forward_plain(const Tensor& field) const;

private:
    struct CondMlp {
        Tensor w1, b1, w2, b2;
    };
    struct Layer {
        Tensor ln1_gain, ln1_bias;
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_gain, ln2_bias;
        Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        CondMlp cond_attn_domain, cond_attn_point;
        CondMlp cond_ffn_domain, cond_ffn_point;
    };

    Tensor run_cond_mlp(const CondMlp& mlp, const Tensor& x) const;
    Triple assemble_triple(const CondMlp& domain_mlp, const CondMlp& point_mlp,
                           const DeepConditions& cond) const;
    Tensor attention(const Tensor& x, const Layer& layer) const;
    Tensor feedforward(const Tensor& x, const Layer& layer) const;
    Tensor embed_input(const Tensor& field) const;
    Tensor read_out(const Tensor& tokens) const;
    Tensor broadcast_time(const Tensor& field) const;

    ModelConfig config_;
    std::size_t d_domain_ = 0, d_point_ = 0;
    std::size_t tokens_ = 0;
    Tensor patch_embed_w_, patch_embed_b_;
    Tensor positional_;  // fixed sinusoidal, not trained
    std::vector<Layer> layers_;
    CondMlp head_domain_, head_point_;  // (scale, shift) only
    Tensor head_w_, head_b_;
};

}  // namespace unisolver
