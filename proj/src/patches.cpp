#include "unisolver/patches.hpp"

#include <stdexcept>
#include <string>

namespace unisolver {

TokenGrid token_grid(std::size_t grid_h, std::size_t grid_w,
                     const PatchSpec& patch) {
    if (patch.h == 0 || patch.w == 0) {
        throw std::invalid_argument("patchify: patch extents must be positive");
    }
    if (grid_h % patch.h != 0) {
        throw std::invalid_argument(
            "patchify: grid height " + std::to_string(grid_h) +
            " not divisible by patch " + std::to_string(patch.h));
    }
    if (grid_w % patch.w != 0) {
        throw std::invalid_argument(
            "patchify: grid width " + std::to_string(grid_w) +
            " not divisible by patch " + std::to_string(patch.w));
    }
    return TokenGrid{grid_h / patch.h, grid_w / patch.w};
}

namespace {

struct FieldDims {
    std::size_t channels, h, w;
};

FieldDims field_dims(const Shape& shape) {
    if (shape.size() == 2) return {shape[0], 1, shape[1]};
    if (shape.size() == 3) return {shape[0], shape[1], shape[2]};
    throw std::invalid_argument("patchify: expected [C, W] or [C, H, W], got " +
                                shape_str(shape));
}

// index[t * patch_len + k] = flat offset into the [C, H, W] field of the
// k-th element of token t.
std::vector<std::size_t> patch_permutation(const FieldDims& d,
                                           const PatchSpec& patch,
                                           const TokenGrid& grid) {
    const std::size_t patch_len = d.channels * patch.h * patch.w;
    std::vector<std::size_t> index(grid.count() * patch_len);
    std::size_t pos = 0;
    for (std::size_t ty = 0; ty < grid.tokens_y; ++ty) {
        for (std::size_t tx = 0; tx < grid.tokens_x; ++tx) {
            for (std::size_t c = 0; c < d.channels; ++c) {
                for (std::size_t dy = 0; dy < patch.h; ++dy) {
                    for (std::size_t dx = 0; dx < patch.w; ++dx) {
                        const std::size_t y = ty * patch.h + dy;
                        const std::size_t x = tx * patch.w + dx;
                        index[pos++] = (c * d.h + y) * d.w + x;
                    }
                }
            }
        }
    }
    return index;
}

}  // namespace

Tensor patchify_tokens(const Tensor& field, const PatchSpec& patch) {
    const FieldDims d = field_dims(field.shape());
    const TokenGrid grid = token_grid(d.h, d.w, patch);
    const std::size_t patch_len = d.channels * patch.h * patch.w;
    return gather(field, patch_permutation(d, patch, grid),
                  {grid.count(), patch_len});
}

Tensor unpatchify_field(const Tensor& tokens, std::size_t channels,
                        std::size_t grid_h, std::size_t grid_w,
                        const PatchSpec& patch) {
    const FieldDims d{channels, grid_h, grid_w};
    const TokenGrid grid = token_grid(grid_h, grid_w, patch);
    const std::size_t patch_len = channels * patch.h * patch.w;
    if (tokens.ndim() != 2 || tokens.shape()[0] != grid.count() ||
        tokens.shape()[1] != patch_len) {
        throw std::invalid_argument(
            "unpatchify: token sequence " + shape_str(tokens.shape()) +
            " does not match " + std::to_string(grid.count()) + " tokens of " +
            std::to_string(patch_len) + " values");
    }
    // Invert the permutation: where in the token sequence does each field
    // element live?
    const std::vector<std::size_t> fwd = patch_permutation(d, patch, grid);
    std::vector<std::size_t> inverse(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) inverse[fwd[i]] = i;
    Shape out_shape = grid_h == 1 ? Shape{channels, grid_w}
                                  : Shape{channels, grid_h, grid_w};
    return gather(tokens, std::move(inverse), std::move(out_shape));
}

}  // namespace unisolver
