#include "unisolver/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unisolver {

std::pair<std::size_t, std::size_t> split_subspace(const ModelConfig& config) {
    if (!(config.alpha > 0.0) || !(config.alpha < 1.0)) {
        throw std::invalid_argument(
            "split_subspace: alpha must lie in (0, 1), got " +
            std::to_string(config.alpha));
    }
    const auto d_domain = static_cast<std::size_t>(
        std::floor(config.alpha * static_cast<double>(config.d_feature)));
    const std::size_t d_point = config.d_feature - d_domain;
    if (d_domain == 0 || d_point == 0) {
        throw std::invalid_argument(
            "split_subspace: degenerate split (" + std::to_string(d_domain) +
            ", " + std::to_string(d_point) + ") for d_feature " +
            std::to_string(config.d_feature));
    }
    return {d_domain, d_point};
}

namespace {

TokenGrid model_token_grid(const ModelConfig& config) {
    if (config.task_mode == TaskMode::FullField) {
        return token_grid(config.time_steps, config.grid_w, config.patch);
    }
    return token_grid(config.grid_h, config.grid_w, config.patch);
}

}  // namespace

void validate_config(const ModelConfig& config) {
    if (config.d_feature == 0 || config.n_layers == 0 ||
        config.n_heads == 0 || config.d_head == 0) {
        throw std::invalid_argument("model config: zero-sized dimension");
    }
    if (config.n_heads * config.d_head != config.d_feature) {
        throw std::invalid_argument(
            "model config: n_heads * d_head = " +
            std::to_string(config.n_heads * config.d_head) +
            " must equal d_feature " + std::to_string(config.d_feature));
    }
    split_subspace(config);
    if (config.in_channels == 0 || config.out_channels == 0) {
        throw std::invalid_argument("model config: zero channel count");
    }
    if (config.d_cond == 0) {
        throw std::invalid_argument("model config: d_cond must be positive");
    }
    if (config.task_mode == TaskMode::FullField) {
        if (config.grid_h != 1) {
            throw std::invalid_argument(
                "model config: full-field mode expects a 1-D spatial grid");
        }
        if (config.time_steps == 0) {
            throw std::invalid_argument(
                "model config: full-field mode needs time_steps >= 1");
        }
    }
    model_token_grid(config);  // validates patch divisibility
}

UnisolverModel::UnisolverModel(ModelConfig config, Rng& init_rng)
    : config_(std::move(config)) {
    validate_config(config_);
    const auto [dd, dp] = split_subspace(config_);
    d_domain_ = dd;
    d_point_ = dp;
    tokens_ = model_token_grid(config_).count();

    const std::size_t d = config_.d_feature;
    const std::size_t in_patch =
        config_.in_channels * config_.patch.h * config_.patch.w;
    const std::size_t out_patch =
        config_.out_channels * config_.patch.h * config_.patch.w;

    patch_embed_w_ = xavier_uniform({in_patch, d}, init_rng);
    patch_embed_b_ = Tensor::zeros({d}, true);

    // Fixed sinusoidal positional encoding over the token index.
    {
        std::vector<double> pe(tokens_ * d, 0.0);
        for (std::size_t p = 0; p < tokens_; ++p) {
            for (std::size_t i = 0; 2 * i < d; ++i) {
                const double rate = std::exp(
                    -std::log(10000.0) * static_cast<double>(2 * i) /
                    static_cast<double>(d));
                const double angle = static_cast<double>(p) * rate;
                pe[p * d + 2 * i] = std::sin(angle);
                if (2 * i + 1 < d) pe[p * d + 2 * i + 1] = std::cos(angle);
            }
        }
        positional_ = Tensor::from_vector({tokens_, d}, std::move(pe));
    }

    auto make_cond_mlp = [&](std::size_t out_width) {
        CondMlp m;
        m.w1 = xavier_uniform({config_.d_cond, config_.d_cond}, init_rng);
        // A nonzero hidden bias keeps the hidden activation away from zero
        // even for all-zero conditions, so the zero-initialized output layer
        // below still receives gradient on the first optimizer step.
        {
            std::vector<double> b(config_.d_cond);
            for (double& v : b) v = init_rng.uniform(-0.5, 0.5);
            m.b1 = Tensor::from_vector({config_.d_cond}, std::move(b), true);
        }
        // Zero-initialized output layer: triples start at (1, 0, 0) so the
        // network begins as a stack of identity blocks.
        m.w2 = Tensor::zeros({config_.d_cond, out_width}, true);
        m.b2 = Tensor::zeros({out_width}, true);
        return m;
    };

    layers_.resize(config_.n_layers);
    for (Layer& layer : layers_) {
        layer.ln1_gain = Tensor::constant({d}, 1.0, true);
        layer.ln1_bias = Tensor::zeros({d}, true);
        layer.wq = xavier_uniform({d, d}, init_rng);
        layer.bq = Tensor::zeros({d}, true);
        layer.wk = xavier_uniform({d, d}, init_rng);
        layer.bk = Tensor::zeros({d}, true);
        layer.wv = xavier_uniform({d, d}, init_rng);
        layer.bv = Tensor::zeros({d}, true);
        layer.wo = xavier_uniform({d, d}, init_rng);
        layer.bo = Tensor::zeros({d}, true);
        layer.ln2_gain = Tensor::constant({d}, 1.0, true);
        layer.ln2_bias = Tensor::zeros({d}, true);
        layer.ffn_w1 = xavier_uniform({d, d}, init_rng);
        layer.ffn_b1 = Tensor::zeros({d}, true);
        layer.ffn_w2 = xavier_uniform({d, d}, init_rng);
        layer.ffn_b2 = Tensor::zeros({d}, true);
        layer.cond_attn_domain = make_cond_mlp(3 * d_domain_);
        layer.cond_attn_point = make_cond_mlp(3 * d_point_);
        layer.cond_ffn_domain = make_cond_mlp(3 * d_domain_);
        layer.cond_ffn_point = make_cond_mlp(3 * d_point_);
    }

    head_domain_ = make_cond_mlp(2 * d_domain_);
    head_point_ = make_cond_mlp(2 * d_point_);
    head_w_ = xavier_uniform({d, out_patch}, init_rng);
    head_b_ = Tensor::zeros({out_patch}, true);
}

std::vector<std::pair<std::string, Tensor>> UnisolverModel::parameters()
    const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("patch_embed.w", patch_embed_w_);
    out.emplace_back("patch_embed.b", patch_embed_b_);
    auto push_cond = [&](const std::string& base, const CondMlp& m) {
        out.emplace_back(base + ".w1", m.w1);
        out.emplace_back(base + ".b1", m.b1);
        out.emplace_back(base + ".w2", m.w2);
        out.emplace_back(base + ".b2", m.b2);
    };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        const std::string p = "layers." + std::to_string(i) + ".";
        out.emplace_back(p + "ln1.gain", l.ln1_gain);
        out.emplace_back(p + "ln1.bias", l.ln1_bias);
        out.emplace_back(p + "attn.wq", l.wq);
        out.emplace_back(p + "attn.bq", l.bq);
        out.emplace_back(p + "attn.wk", l.wk);
        out.emplace_back(p + "attn.bk", l.bk);
        out.emplace_back(p + "attn.wv", l.wv);
        out.emplace_back(p + "attn.bv", l.bv);
        out.emplace_back(p + "attn.wo", l.wo);
        out.emplace_back(p + "attn.bo", l.bo);
        out.emplace_back(p + "ln2.gain", l.ln2_gain);
        out.emplace_back(p + "ln2.bias", l.ln2_bias);
        out.emplace_back(p + "ffn.w1", l.ffn_w1);
        out.emplace_back(p + "ffn.b1", l.ffn_b1);
        out.emplace_back(p + "ffn.w2", l.ffn_w2);
        out.emplace_back(p + "ffn.b2", l.ffn_b2);
        push_cond(p + "cond_attn.domain", l.cond_attn_domain);
        push_cond(p + "cond_attn.point", l.cond_attn_point);
        push_cond(p + "cond_ffn.domain", l.cond_ffn_domain);
        push_cond(p + "cond_ffn.point", l.cond_ffn_point);
    }
    push_cond("head.cond.domain", head_domain_);
    push_cond("head.cond.point", head_point_);
    out.emplace_back("head.out.w", head_w_);
    out.emplace_back("head.out.b", head_b_);
    return out;
}

Tensor UnisolverModel::run_cond_mlp(const CondMlp& mlp, const Tensor& x) const {
    const Tensor hidden = silu(add(matmul(x, mlp.w1), mlp.b1));
    return add(matmul(hidden, mlp.w2), mlp.b2);
}

UnisolverModel::Triple UnisolverModel::assemble_triple(
    const CondMlp& domain_mlp, const CondMlp& point_mlp,
    const DeepConditions& cond) const {
    if (cond.domain.ndim() != 2 || cond.domain.shape()[0] != 1 ||
        cond.domain.shape()[1] != config_.d_cond) {
        throw std::invalid_argument(
            "condition_triple: domain conditions " +
            shape_str(cond.domain.shape()) + " do not match d_cond " +
            std::to_string(config_.d_cond));
    }
    if (cond.point.ndim() != 2 || cond.point.shape()[0] != tokens_ ||
        cond.point.shape()[1] != config_.d_cond) {
        throw std::invalid_argument(
            "condition_triple: point conditions " +
            shape_str(cond.point.shape()) + " do not match " +
            std::to_string(tokens_) + " tokens of width " +
            std::to_string(config_.d_cond));
    }
    const Tensor dom = run_cond_mlp(domain_mlp, cond.domain);  // [1, 3*dd]
    const Tensor pt = run_cond_mlp(point_mlp, cond.point);     // [T, 3*dp]
    const std::vector<Tensor> dparts =
        split(dom, 1, {d_domain_, d_domain_, d_domain_});
    const std::vector<Tensor> pparts =
        split(pt, 1, {d_point_, d_point_, d_point_});
    auto fuse = [&](std::size_t i) {
        return concat({repeat_rows(dparts[i], tokens_), pparts[i]}, 1);
    };
    Triple triple;
    triple.scale = add_scalar(fuse(0), 1.0);  // parameterized as 1 + delta
    triple.shift = fuse(1);
    triple.select = fuse(2);
    return triple;
}

UnisolverModel::Triple UnisolverModel::condition_triple(
    const DeepConditions& cond, std::size_t layer, Site site) const {
    if (layer >= layers_.size()) {
        throw std::invalid_argument("condition_triple: layer " +
                                    std::to_string(layer) + " out of range");
    }
    const Layer& l = layers_[layer];
    if (site == Site::Attention) {
        return assemble_triple(l.cond_attn_domain, l.cond_attn_point, cond);
    }
    return assemble_triple(l.cond_ffn_domain, l.cond_ffn_point, cond);
}

Tensor UnisolverModel::attention(const Tensor& x, const Layer& layer) const {
    const Tensor q = add(matmul(x, layer.wq), layer.bq);
    const Tensor k = add(matmul(x, layer.wk), layer.bk);
    const Tensor v = add(matmul(x, layer.wv), layer.bv);
    const std::vector<std::size_t> head_sizes(config_.n_heads, config_.d_head);
    const std::vector<Tensor> qh = split(q, 1, head_sizes);
    const std::vector<Tensor> kh = split(k, 1, head_sizes);
    const std::vector<Tensor> vh = split(v, 1, head_sizes);
    std::vector<Tensor> heads;
    heads.reserve(config_.n_heads);
    const double inv_sqrt =
        1.0 / std::sqrt(static_cast<double>(config_.d_head));
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
        const Tensor scores =
            scale(matmul(qh[h], transpose(kh[h])), inv_sqrt);
        heads.push_back(matmul(softmax(scores, 1), vh[h]));
    }
    return add(matmul(concat(heads, 1), layer.wo), layer.bo);
}

Tensor UnisolverModel::feedforward(const Tensor& x, const Layer& layer) const {
    const Tensor hidden = gelu(add(matmul(x, layer.ffn_w1), layer.ffn_b1));
    return add(matmul(hidden, layer.ffn_w2), layer.ffn_b2);
}

Tensor UnisolverModel::block_forward(const Tensor& x, const Triple& attn_triple,
                                     const Triple& ffn_triple,
                                     std::size_t layer_index) const {
    if (layer_index >= layers_.size()) {
        throw std::invalid_argument("block_forward: layer " +
                                    std::to_string(layer_index) +
                                    " out of range");
    }
    const Layer& layer = layers_[layer_index];
    Tensor h = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    h = add(mul(attn_triple.scale, h), attn_triple.shift);
    const Tensor attended = attention(h, layer);
    const Tensor x1 = add(mul(attn_triple.select, attended), x);

    Tensor h2 = layer_norm(x1, layer.ln2_gain, layer.ln2_bias);
    h2 = add(mul(ffn_triple.scale, h2), ffn_triple.shift);
    const Tensor fed = feedforward(h2, layer);
    return add(mul(ffn_triple.select, fed), x1);
}

Tensor UnisolverModel::broadcast_time(const Tensor& field) const {
    const std::size_t c = config_.in_channels;
    const std::size_t t = config_.time_steps;
    const std::size_t w = config_.grid_w;
    std::vector<std::size_t> index(c * t * w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ti = 0; ti < t; ++ti) {
            for (std::size_t x = 0; x < w; ++x) {
                index[(ci * t + ti) * w + x] = ci * w + x;
            }
        }
    }
    return gather(field, std::move(index), {c, t, w});
}

Tensor UnisolverModel::embed_input(const Tensor& field) const {
    const Shape& s = field.shape();
    const std::size_t fh = s.size() == 3 ? s[1] : 1;
    const std::size_t fw = s.back();
    if (s[0] != config_.in_channels || fh != config_.grid_h ||
        fw != config_.grid_w) {
        throw std::invalid_argument(
            "forward: input field " + shape_str(s) + " does not match " +
            std::to_string(config_.in_channels) + " channels on " +
            std::to_string(config_.grid_h) + "x" +
            std::to_string(config_.grid_w));
    }
    const Tensor spread = config_.task_mode == TaskMode::FullField
                              ? broadcast_time(field)
                              : field;
    const Tensor patches = patchify_tokens(spread, config_.patch);
    const Tensor projected =
        add(matmul(patches, patch_embed_w_), patch_embed_b_);
    return add(projected, positional_);
}

Tensor UnisolverModel::read_out(const Tensor& tokens) const {
    const Tensor out = add(matmul(tokens, head_w_), head_b_);
    if (config_.task_mode == TaskMode::FullField) {
        return unpatchify_field(out, config_.out_channels, config_.time_steps,
                                config_.grid_w, config_.patch);
    }
    return unpatchify_field(out, config_.out_channels, config_.grid_h,
                            config_.grid_w, config_.patch);
}

Tensor UnisolverModel::forward(const Tensor& field,
                               const DeepConditions& cond) const {
    Tensor x = embed_input(field);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Triple attn_triple = condition_triple(cond, i, Site::Attention);
        const Triple ffn_triple = condition_triple(cond, i, Site::Feedforward);
        x = block_forward(x, attn_triple, ffn_triple, i);
    }
    // Conditional (scale, shift) on the final tokens, then the linear
    // read-out.
    const Tensor dom = run_cond_mlp(head_domain_, cond.domain);  // [1, 2*dd]
    const Tensor pt = run_cond_mlp(head_point_, cond.point);     // [T, 2*dp]
    const std::vector<Tensor> dparts = split(dom, 1, {d_domain_, d_domain_});
    const std::vector<Tensor> pparts = split(pt, 1, {d_point_, d_point_});
    const Tensor head_scale = add_scalar(
        concat({repeat_rows(dparts[0], tokens_), pparts[0]}, 1), 1.0);
    const Tensor head_shift =
        concat({repeat_rows(dparts[1], tokens_), pparts[1]}, 1);
    const Tensor modulated = add(mul(head_scale, x), head_shift);
    return read_out(modulated);
}

Tensor UnisolverModel::forward_plain(const Tensor& field) const {
    Triple plain;
    plain.scale = Tensor::constant({tokens_, config_.d_feature}, 1.0);
    plain.shift = Tensor::zeros({tokens_, config_.d_feature});
    plain.select = Tensor::constant({tokens_, config_.d_feature}, 1.0);
    Tensor x = embed_input(field);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = block_forward(x, plain, plain, i);
    }
    return read_out(x);
}

}  // namespace unisolver
