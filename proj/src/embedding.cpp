#include "unisolver/embedding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "unisolver/binary_io.hpp"

namespace unisolver {

// --- lexer -------------------------------------------------------------------

std::vector<std::string> latex_lexemes(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const auto letter = [](char c) {
        return std::isalpha(static_cast<unsigned char>(c)) != 0;
    };
    const auto digit = [](char c) {
        return std::isdigit(static_cast<unsigned char>(c)) != 0;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '\\') {
            std::size_t j = i + 1;
            while (j < text.size() && letter(text[j])) ++j;
            if (j == i + 1 && j < text.size()) ++j;  // escaped punctuation
            out.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        if (letter(c)) {
            std::size_t j = i;
            while (j < text.size() && letter(text[j])) ++j;
            out.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        if (digit(c)) {
            std::size_t j = i;
            while (j < text.size() && digit(text[j])) ++j;
            out.push_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        out.push_back(std::string(1, c));
        ++i;
    }
    return out;
}

// --- symbol embedder -----------------------------------------------------------

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

constexpr char kEmbeddingMagic[5] = "UEMB";
constexpr std::uint16_t kEmbeddingVersion = 1;

}  // namespace

SymbolEmbedder SymbolEmbedder::hashed(std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("SymbolEmbedder: dim must be > 0");
    SymbolEmbedder e;
    e.hashed_ = true;
    e.dim_ = dim;
    return e;
}

SymbolEmbedder SymbolEmbedder::table(
    std::size_t dim, std::map<std::string, std::vector<float>> entries) {
    if (dim == 0) throw std::invalid_argument("SymbolEmbedder: dim must be > 0");
    for (const auto& [key, vec] : entries) {
        if (vec.size() != dim) {
            throw std::invalid_argument(
                "SymbolEmbedder: entry for \"" + key + "\" has " +
                std::to_string(vec.size()) + " values, expected " +
                std::to_string(dim));
        }
    }
    SymbolEmbedder e;
    e.hashed_ = false;
    e.dim_ = dim;
    e.table_ = std::move(entries);
    return e;
}

std::vector<double> SymbolEmbedder::embed(const std::string& symbols) const {
    if (symbols.empty()) {
        throw std::invalid_argument("embed_symbols: empty symbols string");
    }
    if (!hashed_) {
        const auto it = table_.find(symbols);
        if (it == table_.end()) {
            throw std::runtime_error(
                "embed_symbols: no precomputed vector for symbols string \"" +
                symbols + "\"");
        }
        return std::vector<double>(it->second.begin(), it->second.end());
    }
    std::vector<double> v(dim_, 0.0);
    for (const std::string& lexeme : latex_lexemes(symbols)) {
        v[fnv1a(lexeme) % dim_] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

void SymbolEmbedder::save_file(const std::string& path) const {
    if (hashed_) {
        throw std::logic_error("SymbolEmbedder: hashed mode has no file form");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    io::write_magic(out, kEmbeddingMagic);
    io::write_le<std::uint16_t>(out, kEmbeddingVersion);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    for (const auto& [key, vec] : table_) {
        io::write_string(out, key);
        for (float x : vec) io::write_le<float>(out, x);
    }
}

SymbolEmbedder SymbolEmbedder::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    io::expect_magic(in, kEmbeddingMagic, path);
    const auto version = io::read_le<std::uint16_t>(in);
    if (version != kEmbeddingVersion) {
        throw std::runtime_error(path + ": embedding file format version " +
                                 std::to_string(version) + " unsupported");
    }
    const auto dim = io::read_le<std::uint32_t>(in);
    std::map<std::string, std::vector<float>> entries;
    while (in.peek() != std::char_traits<char>::eof()) {
        std::string key = io::read_string(in);
        std::vector<float> vec(dim);
        for (auto& x : vec) x = io::read_le<float>(in);
        entries.emplace(std::move(key), std::move(vec));
    }
    return table(dim, std::move(entries));
}

// --- condition embedder --------------------------------------------------------

const char* point_field_name(PointFieldKind kind) {
    switch (kind) {
        case PointFieldKind::Force: return "force";
        case PointFieldKind::Kappa: return "kappa";
        case PointFieldKind::Geometry: return "geometry";
        case PointFieldKind::BoundaryValues: return "boundary_values";
    }
    throw std::invalid_argument("unknown point field kind");
}

Tensor xavier_uniform(Shape shape, Rng& rng) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.uniform(-limit, limit);
    return Tensor::from_vector(std::move(shape), std::move(v), true);
}

ConditionEmbedder::ConditionEmbedder(ConditionEmbedderConfig config,
                                     SymbolEmbedder symbols, Rng& init_rng)
    : config_(std::move(config)), symbols_(std::move(symbols)) {
    if (config_.symbol_dim != symbols_.dim()) {
        throw std::invalid_argument(
            "ConditionEmbedder: config symbol_dim " +
            std::to_string(config_.symbol_dim) + " != embedder dim " +
            std::to_string(symbols_.dim()));
    }
    if (config_.d_cond == 0) {
        throw std::invalid_argument("ConditionEmbedder: d_cond must be > 0");
    }
    token_grid(config_.grid_h, config_.grid_w, config_.patch);  // validates

    const std::size_t h = config_.d_cond, d = config_.d_cond;
    // Domain MLPs carry normal (Xavier) initialization: the trainable gate
    // that keeps a fresh network's output condition-independent lives in the
    // network's own zero-initialized condition projections, and a nonzero
    // embedding there is required for those projections to receive gradient.
    auto make_mlp = [&](std::size_t in) {
        Mlp m;
        m.in = in;
        m.w1 = xavier_uniform({in, h}, init_rng);
        m.b1 = Tensor::zeros({h}, true);
        m.w2 = xavier_uniform({h, d}, init_rng);
        m.b2 = Tensor::zeros({d}, true);
        return m;
    };
    symbols_mlp_ = make_mlp(config_.symbol_dim);
    if (!config_.coefficient_keys.empty()) {
        coeff_mlp_ = make_mlp(config_.coefficient_keys.size());
        has_coeff_mlp_ = true;
    }
    boundary_mlp_ = make_mlp(kBoundaryDescriptorWidth);

    for (const PointFieldSpec& spec : config_.point_fields) {
        if (adapter_for(spec.kind)) {
            throw std::invalid_argument(
                std::string("ConditionEmbedder: duplicate point field '") +
                point_field_name(spec.kind) + "'");
        }
        PointAdapter adapter;
        adapter.spec = spec;
        const std::size_t patch_len =
            spec.channels * config_.patch.h * config_.patch.w;
        adapter.w = Tensor::zeros({patch_len, d}, true);
        adapter.b = Tensor::zeros({d}, true);
        point_adapters_.push_back(std::move(adapter));
    }
}

std::size_t ConditionEmbedder::token_count() const {
    return token_grid(config_.grid_h, config_.grid_w, config_.patch).count();
}

std::vector<std::pair<std::string, Tensor>> ConditionEmbedder::parameters()
    const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto push_mlp = [&](const std::string& name, const Mlp& m) {
        out.emplace_back("domain." + name + ".w1", m.w1);
        out.emplace_back("domain." + name + ".b1", m.b1);
        out.emplace_back("domain." + name + ".w2", m.w2);
        out.emplace_back("domain." + name + ".b2", m.b2);
    };
    push_mlp("symbols", symbols_mlp_);
    if (has_coeff_mlp_) push_mlp("coefficients", coeff_mlp_);
    push_mlp("boundary", boundary_mlp_);
    for (const PointAdapter& a : point_adapters_) {
        const std::string base =
            std::string("point.") + point_field_name(a.spec.kind);
        out.emplace_back(base + ".w", a.w);
        out.emplace_back(base + ".b", a.b);
    }
    return out;
}

Tensor ConditionEmbedder::run_mlp(const Mlp& mlp, const Tensor& x) const {
    if (x.ndim() != 2 || x.shape()[0] != 1 || x.shape()[1] != mlp.in) {
        throw std::invalid_argument(
            "embed_domainwise: component input " + shape_str(x.shape()) +
            " does not match adapter width " + std::to_string(mlp.in));
    }
    const Tensor hidden = silu(add(matmul(x, mlp.w1), mlp.b1));
    return add(matmul(hidden, mlp.w2), mlp.b2);
}

const ConditionEmbedder::PointAdapter* ConditionEmbedder::adapter_for(
    PointFieldKind kind) const {
    for (const PointAdapter& a : point_adapters_) {
        if (a.spec.kind == kind) return &a;
    }
    return nullptr;
}

Tensor ConditionEmbedder::domain_conditions(const Tensor& symbols_vec,
                                            const Tensor& coefficients,
                                            const Tensor& boundary) const {
    Tensor acc;
    auto fold = [&](const Tensor& t) {
        acc = acc.defined() ? add(acc, t) : t;
    };
    if (symbols_vec.defined()) fold(run_mlp(symbols_mlp_, symbols_vec));
    if (coefficients.defined()) {
        if (!has_coeff_mlp_) {
            throw std::invalid_argument(
                "embed_domainwise: coefficients supplied but no keys "
                "configured");
        }
        fold(run_mlp(coeff_mlp_, coefficients));
    }
    if (boundary.defined()) fold(run_mlp(boundary_mlp_, boundary));
    if (!acc.defined()) return Tensor::zeros({1, config_.d_cond});
    return acc;
}

Tensor ConditionEmbedder::point_conditions(
    const std::vector<std::pair<PointFieldKind, Tensor>>& fields) const {
    const std::size_t tokens = token_count();
    Tensor acc;
    for (const auto& [kind, field] : fields) {
        const PointAdapter* adapter = adapter_for(kind);
        if (!adapter) {
            throw std::invalid_argument(
                std::string("embed_pointwise: no adapter configured for "
                            "field '") +
                point_field_name(kind) + "'");
        }
        const Shape& s = field.shape();
        const std::size_t fh = s.size() == 3 ? s[1] : 1;
        const std::size_t fw = s.back();
        if (fh != config_.grid_h || fw != config_.grid_w) {
            throw std::invalid_argument(
                std::string("embed_pointwise: field '") +
                point_field_name(kind) + "' lives on " + std::to_string(fh) +
                "x" + std::to_string(fw) + ", embedder expects " +
                std::to_string(config_.grid_h) + "x" +
                std::to_string(config_.grid_w));
        }
        if (s[0] != adapter->spec.channels) {
            throw std::invalid_argument(
                std::string("embed_pointwise: field '") +
                point_field_name(kind) + "' has " + std::to_string(s[0]) +
                " channels, adapter expects " +
                std::to_string(adapter->spec.channels));
        }
        const Tensor patches = patchify_tokens(field, config_.patch);
        const Tensor mapped = add(matmul(patches, adapter->w), adapter->b);
        acc = acc.defined() ? add(acc, mapped) : mapped;
    }
    if (!acc.defined()) return Tensor::zeros({tokens, config_.d_cond});
    return acc;
}

Tensor ConditionEmbedder::boundary_descriptor(const BoundaryCondition& bc) {
    std::vector<double> v(kBoundaryDescriptorWidth, 0.0);
    if (bc.periodic) {
        v[0] = 1.0;
    } else {
        auto fill = [&](const EndpointCondition& ep, std::size_t base) {
            switch (ep.kind) {
                case BoundaryKind::Dirichlet: v[base + 0] = 1.0; break;
                case BoundaryKind::Neumann: v[base + 1] = 1.0; break;
                case BoundaryKind::Robin: v[base + 2] = 1.0; break;
                case BoundaryKind::Periodic:
                    throw std::invalid_argument(
                        "boundary_descriptor: periodic endpoint in a "
                        "non-periodic condition");
            }
            v[base + 3] = ep.alpha;
            v[base + 4] = ep.beta;
            v[base + 5] = ep.gamma;
        };
        fill(bc.left, 1);
        fill(bc.right, 7);
    }
    return Tensor::from_vector({1, kBoundaryDescriptorWidth}, std::move(v));
}

DeepConditions ConditionEmbedder::embed(const PDEComponents& comps) const {
    Tensor symbols_vec;
    if (!comps.symbols.empty()) {
        symbols_vec = Tensor::from_vector({1, config_.symbol_dim},
                                          symbols_.embed(comps.symbols));
    }

    Tensor coefficients;
    if (!comps.coefficients.empty()) {
        if (comps.coefficients.size() != config_.coefficient_keys.size()) {
            throw std::invalid_argument(
                "embed_domainwise: coefficient map has " +
                std::to_string(comps.coefficients.size()) +
                " entries, adapter expects " +
                std::to_string(config_.coefficient_keys.size()));
        }
        std::vector<double> values;
        values.reserve(config_.coefficient_keys.size());
        for (const std::string& key : config_.coefficient_keys) {
            const auto it = comps.coefficients.find(key);
            if (it == comps.coefficients.end()) {
                throw std::invalid_argument(
                    "embed_domainwise: coefficient map missing key '" + key +
                    "'");
            }
            values.push_back(it->second);
        }
        coefficients = Tensor::from_vector(
            {1, config_.coefficient_keys.size()}, std::move(values));
    }

    std::vector<std::pair<PointFieldKind, Tensor>> fields;
    auto maybe_field = [&](bool present, const Field& field,
                           PointFieldKind kind) {
        if (!present) return;
        if (!adapter_for(kind)) {
            throw std::invalid_argument(
                std::string("embed_pointwise: sample carries field '") +
                point_field_name(kind) + "' but no adapter is configured");
        }
        fields.emplace_back(kind,
                            Tensor::from_vector(field.shape, field.values));
    };
    maybe_field(comps.has_force, comps.force, PointFieldKind::Force);
    maybe_field(comps.has_kappa, comps.kappa, PointFieldKind::Kappa);
    maybe_field(comps.has_geometry, comps.geometry_mask,
                PointFieldKind::Geometry);
    maybe_field(comps.has_boundary_values, comps.boundary_values,
                PointFieldKind::BoundaryValues);

    DeepConditions out;
    out.domain = domain_conditions(symbols_vec, coefficients,
                                   boundary_descriptor(comps.boundary));
    out.point = point_conditions(fields);
    return out;
}

}  // namespace unisolver
