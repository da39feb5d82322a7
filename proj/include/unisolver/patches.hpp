#pragma once

#include <cstddef>
#include <vector>

#include "unisolver/tensor.hpp"

namespace unisolver {

// Non-overlapping patch extents. 1-D grids use h = 1.
struct PatchSpec {
    std::size_t h = 1;
    std::size_t w = 4;
};

// Token grid for a [channels, grid_h, grid_w] field; throws when the grid is
// not divisible by the patch, naming both sizes.
struct TokenGrid {
    std::size_t tokens_y = 0;
    std::size_t tokens_x = 0;
    std::size_t count() const { return tokens_y * tokens_x; }
};

TokenGrid token_grid(std::size_t grid_h, std::size_t grid_w,
                     const PatchSpec& patch);

// Flattens a [C, H, W] (or [C, W], treated as H = 1) field into
// [tokens, C*h*w]: tokens scan the patch grid row-major, and each patch is
// flattened channel-major, then row, then column. The inverse mapping
// restores a token sequence to the field layout. Both are pure index
// permutations, so gradients pass through exactly.
Tensor patchify_tokens(const Tensor& field, const PatchSpec& patch);
Tensor unpatchify_field(const Tensor& tokens, std::size_t channels,
                        std::size_t grid_h, std::size_t grid_w,
                        const PatchSpec& patch);

}  // namespace unisolver
