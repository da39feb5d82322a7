#pragma once
// Independent reimplementation of the transformer's unconditioned forward
// pass (a standard pre-norm ViT) using plain loops over std::vector<double>.
// Shares nothing with the library except the parameter-name convention, so a
// match pins the patch layout, positional encoding, attention arithmetic,
// and read-out of the real model.

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace test_oracle {

struct VitDims {
    std::size_t d_feature = 0;
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t d_head = 0;
    std::size_t patch_h = 1, patch_w = 1;
    std::size_t in_channels = 1, out_channels = 1;
    std::size_t grid_h = 1, grid_w = 1;  // token-grid extents of the input
};

using VitParams = std::map<std::string, std::vector<double>>;

inline const std::vector<double>& vit_param(const VitParams& p,
                                            const std::string& name) {
    auto it = p.find(name);
    if (it == p.end())
        throw std::runtime_error("oracle: missing parameter " + name);
    return it->second;
}

// y[r, j] = sum_k x[r, k] * w[k, j] + b[j]
inline std::vector<double> vit_linear(const std::vector<double>& x,
                                      std::size_t rows, std::size_t in,
                                      const std::vector<double>& w,
                                      const std::vector<double>& b,
                                      std::size_t out) {
    if (w.size() != in * out || b.size() != out)
        throw std::runtime_error("oracle: linear size mismatch");
    std::vector<double> y(rows * out, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < in; ++k) {
            const double xv = x[r * in + k];
            for (std::size_t j = 0; j < out; ++j)
                y[r * out + j] += xv * w[k * out + j];
        }
        for (std::size_t j = 0; j < out; ++j) y[r * out + j] += b[j];
    }
    return y;
}

inline void vit_layer_norm(std::vector<double>& x, std::size_t rows,
                           std::size_t d, const std::vector<double>& gain,
                           const std::vector<double>& bias) {
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += x[r * d + i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double c = x[r * d + i] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (std::size_t i = 0; i < d; ++i)
            x[r * d + i] = (x[r * d + i] - mu) * inv * gain[i] + bias[i];
    }
}

inline double vit_gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

// field is [in_channels, grid_h, grid_w] flattened; returns
// [out_channels, grid_h, grid_w] flattened.
inline std::vector<double> vit_forward(const VitParams& params,
                                       const VitDims& dims,
                                       const std::vector<double>& field) {
    const std::size_t d = dims.d_feature;
    const std::size_t ph = dims.patch_h, pw = dims.patch_w;
    const std::size_t ty = dims.grid_h / ph, tx = dims.grid_w / pw;
    const std::size_t tokens = ty * tx;
    const std::size_t in_patch = dims.in_channels * ph * pw;
    const std::size_t out_patch = dims.out_channels * ph * pw;
    if (field.size() != dims.in_channels * dims.grid_h * dims.grid_w)
        throw std::runtime_error("oracle: field size mismatch");

    // Patchify: tokens scan the patch grid row-major; within a token the
    // values run channel-major, then patch row, then patch column.
    std::vector<double> x(tokens * in_patch);
    for (std::size_t t = 0; t < tokens; ++t) {
        const std::size_t y0 = (t / tx) * ph, x0 = (t % tx) * pw;
        for (std::size_t c = 0; c < dims.in_channels; ++c)
            for (std::size_t py = 0; py < ph; ++py)
                for (std::size_t px = 0; px < pw; ++px)
                    x[t * in_patch + (c * ph + py) * pw + px] =
                        field[(c * dims.grid_h + y0 + py) * dims.grid_w + x0 +
                              px];
    }

    x = vit_linear(x, tokens, in_patch, vit_param(params, "patch_embed.w"),
                   vit_param(params, "patch_embed.b"), d);

    // Fixed sinusoidal positional encoding over the token index.
    for (std::size_t p = 0; p < tokens; ++p) {
        for (std::size_t i = 0; 2 * i < d; ++i) {
            const double rate =
                std::exp(-std::log(10000.0) * static_cast<double>(2 * i) /
                         static_cast<double>(d));
            const double angle = static_cast<double>(p) * rate;
            x[p * d + 2 * i] += std::sin(angle);
            if (2 * i + 1 < d) x[p * d + 2 * i + 1] += std::cos(angle);
        }
    }

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dims.d_head));
    for (std::size_t layer = 0; layer < dims.n_layers; ++layer) {
        const std::string pre = "layers." + std::to_string(layer) + ".";

        std::vector<double> h = x;
        vit_layer_norm(h, tokens, d, vit_param(params, pre + "ln1.gain"),
                       vit_param(params, pre + "ln1.bias"));
        const auto q = vit_linear(h, tokens, d, vit_param(params, pre + "attn.wq"),
                                  vit_param(params, pre + "attn.bq"), d);
        const auto k = vit_linear(h, tokens, d, vit_param(params, pre + "attn.wk"),
                                  vit_param(params, pre + "attn.bk"), d);
        const auto v = vit_linear(h, tokens, d, vit_param(params, pre + "attn.wv"),
                                  vit_param(params, pre + "attn.bv"), d);
        std::vector<double> mixed(tokens * d, 0.0);
        for (std::size_t head = 0; head < dims.n_heads; ++head) {
            const std::size_t off = head * dims.d_head;
            for (std::size_t a = 0; a < tokens; ++a) {
                std::vector<double> row(tokens);
                double mx = -1e300;
                for (std::size_t b = 0; b < tokens; ++b) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < dims.d_head; ++i)
                        s += q[a * d + off + i] * k[b * d + off + i];
                    row[b] = s * inv_sqrt;
                    mx = std::max(mx, row[b]);
                }
                double denom = 0.0;
                for (std::size_t b = 0; b < tokens; ++b) {
                    row[b] = std::exp(row[b] - mx);
                    denom += row[b];
                }
                for (std::size_t b = 0; b < tokens; ++b)
                    for (std::size_t i = 0; i < dims.d_head; ++i)
                        mixed[a * d + off + i] +=
                            (row[b] / denom) * v[b * d + off + i];
            }
        }
        const auto attn_out =
            vit_linear(mixed, tokens, d, vit_param(params, pre + "attn.wo"),
                       vit_param(params, pre + "attn.bo"), d);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];

        std::vector<double> h2 = x;
        vit_layer_norm(h2, tokens, d, vit_param(params, pre + "ln2.gain"),
                       vit_param(params, pre + "ln2.bias"));
        auto hidden = vit_linear(h2, tokens, d, vit_param(params, pre + "ffn.w1"),
                                 vit_param(params, pre + "ffn.b1"), d);
        for (double& val : hidden) val = vit_gelu(val);
        const auto ffn_out =
            vit_linear(hidden, tokens, d, vit_param(params, pre + "ffn.w2"),
                       vit_param(params, pre + "ffn.b2"), d);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += ffn_out[i];
    }

    const auto y = vit_linear(x, tokens, d, vit_param(params, "head.out.w"),
                              vit_param(params, "head.out.b"), out_patch);

    std::vector<double> out(dims.out_channels * dims.grid_h * dims.grid_w);
    for (std::size_t t = 0; t < tokens; ++t) {
        const std::size_t y0 = (t / tx) * ph, x0 = (t % tx) * pw;
        for (std::size_t c = 0; c < dims.out_channels; ++c)
            for (std::size_t py = 0; py < ph; ++py)
                for (std::size_t px = 0; px < pw; ++px)
                    out[(c * dims.grid_h + y0 + py) * dims.grid_w + x0 + px] =
                        y[t * out_patch + (c * ph + py) * pw + px];
    }
    return out;
}

}  // namespace test_oracle
