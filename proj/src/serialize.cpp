#include "unisolver/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "unisolver/binary_io.hpp"
#include "unisolver/rng.hpp"

namespace unisolver {

namespace {

constexpr char kDatasetMagic[5] = "UPDE";
constexpr char kCheckpointMagic[5] = "UCKP";
constexpr std::uint16_t kDatasetVersion = 1;
constexpr std::uint16_t kCheckpointVersion = 1;

void write_grid(std::ostream& out, const GridSpec& grid) {
    io::write_le<std::uint64_t>(out, grid.spatial_dims);
    io::write_le<std::uint64_t>(out, grid.n_x);
    io::write_le<std::uint64_t>(out, grid.n_y);
    io::write_le<std::uint64_t>(out, grid.n_t);
    io::write_le<double>(out, grid.x_min);
    io::write_le<double>(out, grid.x_max);
    io::write_le<double>(out, grid.y_min);
    io::write_le<double>(out, grid.y_max);
    io::write_le<double>(out, grid.t_min);
    io::write_le<double>(out, grid.t_max);
}

GridSpec read_grid(std::istream& in) {
    GridSpec grid;
    grid.spatial_dims = io::read_le<std::uint64_t>(in);
    grid.n_x = io::read_le<std::uint64_t>(in);
    grid.n_y = io::read_le<std::uint64_t>(in);
    grid.n_t = io::read_le<std::uint64_t>(in);
    grid.x_min = io::read_le<double>(in);
    grid.x_max = io::read_le<double>(in);
    grid.y_min = io::read_le<double>(in);
    grid.y_max = io::read_le<double>(in);
    grid.t_min = io::read_le<double>(in);
    grid.t_max = io::read_le<double>(in);
    return grid;
}

void write_field(std::ostream& out, const Field& field, FieldDType dtype) {
    io::write_string(out, field.name);
    io::write_le<std::uint32_t>(out,
                                static_cast<std::uint32_t>(field.shape.size()));
    std::size_t expect = 1;
    for (std::size_t dim : field.shape) {
        io::write_le<std::uint64_t>(out, dim);
        expect *= dim;
    }
    if (expect != field.values.size()) {
        throw std::runtime_error("save_dataset: field '" + field.name +
                                 "' shape does not cover its " +
                                 std::to_string(field.values.size()) +
                                 " values");
    }
    for (double v : field.values) {
        if (dtype == FieldDType::F32) {
            io::write_le<float>(out, static_cast<float>(v));
        } else {
            io::write_le<double>(out, v);
        }
    }
}

Field read_field(std::istream& in, FieldDType dtype) {
    Field field;
    field.name = io::read_string(in);
    const std::uint32_t rank = io::read_le<std::uint32_t>(in);
    if (rank > 8) {
        throw std::runtime_error("dataset file: field '" + field.name +
                                 "' declares rank " + std::to_string(rank));
    }
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint64_t dim = io::read_le<std::uint64_t>(in);
        field.shape.push_back(dim);
        n *= dim;
    }
    if (n > (std::size_t(1) << 32)) {
        throw std::runtime_error("dataset file: field '" + field.name +
                                 "' declares an implausible size");
    }
    field.values.resize(n);
    for (double& v : field.values) {
        v = dtype == FieldDType::F32
                ? static_cast<double>(io::read_le<float>(in))
                : io::read_le<double>(in);
    }
    return field;
}

void write_endpoint(std::ostream& out, const EndpointCondition& ep) {
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(ep.kind));
    io::write_le<double>(out, ep.alpha);
    io::write_le<double>(out, ep.beta);
    io::write_le<double>(out, ep.gamma);
}

EndpointCondition read_endpoint(std::istream& in) {
    EndpointCondition ep;
    const std::uint8_t kind = io::read_le<std::uint8_t>(in);
    if (kind > 3) {
        throw std::runtime_error("dataset file: bad boundary kind " +
                                 std::to_string(kind));
    }
    ep.kind = static_cast<BoundaryKind>(kind);
    ep.alpha = io::read_le<double>(in);
    ep.beta = io::read_le<double>(in);
    ep.gamma = io::read_le<double>(in);
    return ep;
}

void write_sample(std::ostream& out, const Sample& sample, FieldDType dtype) {
    io::write_string(out, sample.components.symbols);
    io::write_le<std::uint32_t>(
        out, static_cast<std::uint32_t>(sample.components.coefficients.size()));
    for (const auto& [key, value] : sample.components.coefficients) {
        io::write_string(out, key);
        io::write_le<double>(out, value);
    }
    io::write_le<std::uint8_t>(out, sample.components.boundary.periodic ? 1 : 0);
    write_endpoint(out, sample.components.boundary.left);
    write_endpoint(out, sample.components.boundary.right);

    const std::uint8_t flags =
        (sample.components.has_force ? 1u : 0u) |
        (sample.components.has_kappa ? 2u : 0u) |
        (sample.components.has_geometry ? 4u : 0u) |
        (sample.components.has_boundary_values ? 8u : 0u);
    io::write_le<std::uint8_t>(out, flags);
    if (sample.components.has_force)
        write_field(out, sample.components.force, dtype);
    if (sample.components.has_kappa)
        write_field(out, sample.components.kappa, dtype);
    if (sample.components.has_geometry)
        write_field(out, sample.components.geometry_mask, dtype);
    if (sample.components.has_boundary_values)
        write_field(out, sample.components.boundary_values, dtype);

    io::write_le<std::uint32_t>(out,
                                static_cast<std::uint32_t>(sample.inputs.size()));
    for (const Field& f : sample.inputs) write_field(out, f, dtype);
    io::write_le<std::uint32_t>(
        out, static_cast<std::uint32_t>(sample.outputs.size()));
    for (const Field& f : sample.outputs) write_field(out, f, dtype);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(sample.split));
}

Sample read_sample(std::istream& in, FieldDType dtype) {
    Sample sample;
    sample.components.symbols = io::read_string(in);
    const std::uint32_t n_coeff = io::read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_coeff; ++i) {
        const std::string key = io::read_string(in);
        sample.components.coefficients[key] = io::read_le<double>(in);
    }
    sample.components.boundary.periodic = io::read_le<std::uint8_t>(in) != 0;
    sample.components.boundary.left = read_endpoint(in);
    sample.components.boundary.right = read_endpoint(in);

    const std::uint8_t flags = io::read_le<std::uint8_t>(in);
    sample.components.has_force = (flags & 1u) != 0;
    sample.components.has_kappa = (flags & 2u) != 0;
    sample.components.has_geometry = (flags & 4u) != 0;
    sample.components.has_boundary_values = (flags & 8u) != 0;
    if (sample.components.has_force)
        sample.components.force = read_field(in, dtype);
    if (sample.components.has_kappa)
        sample.components.kappa = read_field(in, dtype);
    if (sample.components.has_geometry)
        sample.components.geometry_mask = read_field(in, dtype);
    if (sample.components.has_boundary_values)
        sample.components.boundary_values = read_field(in, dtype);

    const std::uint32_t n_inputs = io::read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_inputs; ++i)
        sample.inputs.push_back(read_field(in, dtype));
    const std::uint32_t n_outputs = io::read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_outputs; ++i)
        sample.outputs.push_back(read_field(in, dtype));
    const std::uint8_t split = io::read_le<std::uint8_t>(in);
    if (split > 1) {
        throw std::runtime_error("dataset file: bad split tag " +
                                 std::to_string(split));
    }
    sample.split = static_cast<SplitTag>(split);
    return sample;
}

// The header carries the (name, channels) schema of the first sample so a
// reader can reject records that drift from it.
void write_schema(std::ostream& out, const std::vector<Field>& fields) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(fields.size()));
    for (const Field& f : fields) {
        io::write_string(out, f.name);
        io::write_le<std::uint64_t>(out, f.shape.empty() ? 0 : f.shape[0]);
    }
}

std::vector<std::pair<std::string, std::uint64_t>> read_schema(
    std::istream& in) {
    const std::uint32_t n = io::read_le<std::uint32_t>(in);
    std::vector<std::pair<std::string, std::uint64_t>> schema;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = io::read_string(in);
        const std::uint64_t channels = io::read_le<std::uint64_t>(in);
        schema.emplace_back(std::move(name), channels);
    }
    return schema;
}

void check_against_schema(
    const std::vector<Field>& fields,
    const std::vector<std::pair<std::string, std::uint64_t>>& schema,
    std::size_t record, const char* what) {
    if (fields.size() != schema.size()) {
        throw std::runtime_error(
            "dataset file: record " + std::to_string(record) + " carries " +
            std::to_string(fields.size()) + " " + what + " fields, schema " +
            std::to_string(schema.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::uint64_t channels =
            fields[i].shape.empty() ? 0 : fields[i].shape[0];
        if (fields[i].name != schema[i].first ||
            channels != schema[i].second) {
            throw std::runtime_error(
                "dataset file: record " + std::to_string(record) + " " + what +
                " field '" + fields[i].name + "' (" +
                std::to_string(channels) + " channels) does not match schema '" +
                schema[i].first + "' (" + std::to_string(schema[i].second) +
                ")");
        }
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    return in;
}

}  // namespace

void save_dataset(std::ostream& out, const Dataset& dataset, FieldDType dtype) {
    io::write_magic(out, kDatasetMagic);
    io::write_le<std::uint16_t>(out, kDatasetVersion);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    io::write_string(out, family_name(dataset.family));
    write_grid(out, dataset.grid);
    io::write_le<std::uint64_t>(out, dataset.retry_count);
    io::write_le<std::uint64_t>(out, dataset.samples.size());
    const std::vector<Field> no_fields;
    write_schema(out, dataset.samples.empty() ? no_fields
                                              : dataset.samples[0].inputs);
    write_schema(out, dataset.samples.empty() ? no_fields
                                              : dataset.samples[0].outputs);
    for (const Sample& sample : dataset.samples)
        write_sample(out, sample, dtype);
}

Dataset load_dataset(std::istream& in) {
    io::expect_magic(in, kDatasetMagic, "dataset file");
    const std::uint16_t version = io::read_le<std::uint16_t>(in);
    if (version != kDatasetVersion) {
        throw std::runtime_error("dataset file: format version " +
                                 std::to_string(version) + " unsupported");
    }
    const std::uint8_t dtype_raw = io::read_le<std::uint8_t>(in);
    if (dtype_raw > 1) {
        throw std::runtime_error("dataset file: bad dtype tag " +
                                 std::to_string(dtype_raw));
    }
    const FieldDType dtype = static_cast<FieldDType>(dtype_raw);

    Dataset dataset;
    dataset.family = family_from_string(io::read_string(in));
    dataset.grid = read_grid(in);
    dataset.retry_count = io::read_le<std::uint64_t>(in);
    const std::uint64_t n_samples = io::read_le<std::uint64_t>(in);
    const auto input_schema = read_schema(in);
    const auto output_schema = read_schema(in);

    dataset.samples.reserve(n_samples);
    for (std::uint64_t i = 0; i < n_samples; ++i) {
        Sample sample = read_sample(in, dtype);
        check_against_schema(sample.inputs, input_schema, i, "input");
        check_against_schema(sample.outputs, output_schema, i, "output");
        const std::vector<std::string> problems =
            validate(sample, dataset.grid);
        if (!problems.empty()) {
            throw std::runtime_error("dataset file: record " +
                                     std::to_string(i) +
                                     " fails validation: " + problems.front());
        }
        dataset.samples.push_back(std::move(sample));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error(
            "dataset file: trailing bytes after the declared " +
            std::to_string(n_samples) + " records");
    }
    return dataset;
}

void save_dataset_file(const std::string& path, const Dataset& dataset,
                       FieldDType dtype) {
    std::ofstream out = open_out(path);
    save_dataset(out, dataset, dtype);
}

Dataset load_dataset_file(const std::string& path) {
    std::ifstream in = open_in(path);
    return load_dataset(in);
}

// --- checkpoint container ---------------------------------------------------

namespace {

void write_model_config(std::ostream& out, const ModelConfig& c) {
    io::write_le<std::uint64_t>(out, c.d_feature);
    io::write_le<double>(out, c.alpha);
    io::write_le<std::uint64_t>(out, c.n_layers);
    io::write_le<std::uint64_t>(out, c.n_heads);
    io::write_le<std::uint64_t>(out, c.d_head);
    io::write_le<std::uint64_t>(out, c.patch.h);
    io::write_le<std::uint64_t>(out, c.patch.w);
    io::write_le<std::uint64_t>(out, c.in_channels);
    io::write_le<std::uint64_t>(out, c.out_channels);
    io::write_le<std::uint64_t>(out, c.grid_h);
    io::write_le<std::uint64_t>(out, c.grid_w);
    io::write_le<std::uint64_t>(out, c.time_steps);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(c.task_mode));
    io::write_le<std::uint64_t>(out, c.d_cond);
}

ModelConfig read_model_config(std::istream& in) {
    ModelConfig c;
    c.d_feature = io::read_le<std::uint64_t>(in);
    c.alpha = io::read_le<double>(in);
    c.n_layers = io::read_le<std::uint64_t>(in);
    c.n_heads = io::read_le<std::uint64_t>(in);
    c.d_head = io::read_le<std::uint64_t>(in);
    c.patch.h = io::read_le<std::uint64_t>(in);
    c.patch.w = io::read_le<std::uint64_t>(in);
    c.in_channels = io::read_le<std::uint64_t>(in);
    c.out_channels = io::read_le<std::uint64_t>(in);
    c.grid_h = io::read_le<std::uint64_t>(in);
    c.grid_w = io::read_le<std::uint64_t>(in);
    c.time_steps = io::read_le<std::uint64_t>(in);
    const std::uint8_t mode = io::read_le<std::uint8_t>(in);
    if (mode > 1) {
        throw std::runtime_error("checkpoint file: bad task mode " +
                                 std::to_string(mode));
    }
    c.task_mode = static_cast<TaskMode>(mode);
    c.d_cond = io::read_le<std::uint64_t>(in);
    return c;
}

void write_embedder_config(std::ostream& out,
                           const ConditionEmbedderConfig& c) {
    io::write_le<std::uint64_t>(out, c.symbol_dim);
    io::write_le<std::uint64_t>(out, c.d_cond);
    io::write_le<std::uint32_t>(
        out, static_cast<std::uint32_t>(c.coefficient_keys.size()));
    for (const std::string& key : c.coefficient_keys)
        io::write_string(out, key);
    io::write_le<std::uint32_t>(
        out, static_cast<std::uint32_t>(c.point_fields.size()));
    for (const PointFieldSpec& spec : c.point_fields) {
        io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(spec.kind));
        io::write_le<std::uint64_t>(out, spec.channels);
    }
    io::write_le<std::uint64_t>(out, c.patch.h);
    io::write_le<std::uint64_t>(out, c.patch.w);
    io::write_le<std::uint64_t>(out, c.grid_h);
    io::write_le<std::uint64_t>(out, c.grid_w);
}

ConditionEmbedderConfig read_embedder_config(std::istream& in) {
    ConditionEmbedderConfig c;
    c.symbol_dim = io::read_le<std::uint64_t>(in);
    c.d_cond = io::read_le<std::uint64_t>(in);
    const std::uint32_t n_keys = io::read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_keys; ++i)
        c.coefficient_keys.push_back(io::read_string(in));
    const std::uint32_t n_fields = io::read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_fields; ++i) {
        PointFieldSpec spec;
        const std::uint8_t kind = io::read_le<std::uint8_t>(in);
        if (kind > 3) {
            throw std::runtime_error("checkpoint file: bad point-field kind " +
                                     std::to_string(kind));
        }
        spec.kind = static_cast<PointFieldKind>(kind);
        spec.channels = io::read_le<std::uint64_t>(in);
        c.point_fields.push_back(spec);
    }
    c.patch.h = io::read_le<std::uint64_t>(in);
    c.patch.w = io::read_le<std::uint64_t>(in);
    c.grid_h = io::read_le<std::uint64_t>(in);
    c.grid_w = io::read_le<std::uint64_t>(in);
    return c;
}

void write_train_config(std::ostream& out, const TrainConfig& c) {
    io::write_le<std::uint64_t>(out, c.batch_size);
    io::write_le<std::uint64_t>(out, c.epochs);
    io::write_le<double>(out, c.lr_init);
    io::write_le<double>(out, c.lr_min);
    io::write_le<std::uint64_t>(out, c.warmup_epochs);
    io::write_le<double>(out, c.adam.beta1);
    io::write_le<double>(out, c.adam.beta2);
    io::write_le<double>(out, c.adam.eps);
    io::write_le<double>(out, c.adam.weight_decay);
    io::write_le<std::uint64_t>(out, c.seed);
    io::write_le<double>(out, c.validation_fraction);
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(c.mode));
}

TrainConfig read_train_config(std::istream& in) {
    TrainConfig c;
    c.batch_size = io::read_le<std::uint64_t>(in);
    c.epochs = io::read_le<std::uint64_t>(in);
    c.lr_init = io::read_le<double>(in);
    c.lr_min = io::read_le<double>(in);
    c.warmup_epochs = io::read_le<std::uint64_t>(in);
    c.adam.beta1 = io::read_le<double>(in);
    c.adam.beta2 = io::read_le<double>(in);
    c.adam.eps = io::read_le<double>(in);
    c.adam.weight_decay = io::read_le<double>(in);
    c.seed = io::read_le<std::uint64_t>(in);
    c.validation_fraction = io::read_le<double>(in);
    const std::uint8_t mode = io::read_le<std::uint8_t>(in);
    if (mode > 2) {
        throw std::runtime_error("checkpoint file: bad conditioning mode " +
                                 std::to_string(mode));
    }
    c.mode = static_cast<ConditioningMode>(mode);
    return c;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    io::write_magic(out, kCheckpointMagic);
    io::write_le<std::uint16_t>(out, kCheckpointVersion);
    write_model_config(out, ckpt.model);
    write_embedder_config(out, ckpt.embedder);
    write_train_config(out, ckpt.train);
    io::write_le<std::uint64_t>(out, ckpt.epoch);
    io::write_string(out, ckpt.rng_state);
    io::write_le<std::uint32_t>(out,
                                static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, values] : ckpt.params) {
        io::write_string(out, name);
        io::write_le<std::uint64_t>(out, values.size());
        for (double v : values) io::write_le<double>(out, v);
    }
}

Checkpoint load_checkpoint(std::istream& in) {
    io::expect_magic(in, kCheckpointMagic, "checkpoint file");
    const std::uint16_t version = io::read_le<std::uint16_t>(in);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint file: format version " +
                                 std::to_string(version) + " unsupported");
    }
    Checkpoint ckpt;
    ckpt.model = read_model_config(in);
    ckpt.embedder = read_embedder_config(in);
    ckpt.train = read_train_config(in);
    ckpt.epoch = io::read_le<std::uint64_t>(in);
    ckpt.rng_state = io::read_string(in);
    const std::uint32_t n_tensors = io::read_le<std::uint32_t>(in);
    ckpt.params.reserve(n_tensors);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = io::read_string(in);
        const std::uint64_t n = io::read_le<std::uint64_t>(in);
        if (n > (std::uint64_t(1) << 32)) {
            throw std::runtime_error("checkpoint file: tensor '" + name +
                                     "' declares an implausible size");
        }
        std::vector<double> values(n);
        for (double& v : values) v = io::read_le<double>(in);
        ckpt.params.emplace_back(std::move(name), std::move(values));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error("checkpoint file: trailing bytes after " +
                                 std::to_string(n_tensors) + " tensors");
    }
    return ckpt;
}

void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out = open_out(path);
    save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in = open_in(path);
    return load_checkpoint(in);
}

Checkpoint make_checkpoint(const UnisolverModel& model,
                           const ConditionEmbedder& embedder,
                           const TrainConfig& train, std::uint64_t epoch,
                           const std::string& rng_state) {
    Checkpoint ckpt;
    ckpt.model = model.config();
    ckpt.embedder = embedder.config();
    ckpt.train = train;
    ckpt.epoch = epoch;
    ckpt.rng_state = rng_state;
    ckpt.params = snapshot_parameters(training_parameters(model, embedder));
    return ckpt;
}

RestoredRun restore_checkpoint(const Checkpoint& ckpt) {
    // The initialization seed is irrelevant: every parameter is overwritten
    // from the stored snapshot.
    Rng rng(0);
    RestoredRun run{
        UnisolverModel(ckpt.model, rng),
        ConditionEmbedder(ckpt.embedder,
                          SymbolEmbedder::hashed(ckpt.embedder.symbol_dim),
                          rng)};
    load_parameter_values(training_parameters(run.model, run.embedder),
                          ckpt.params);
    return run;
}

void require_matching_architecture(const ModelConfig& stored,
                                   const ModelConfig& declared) {
    const auto fail = [](const std::string& field, const std::string& a,
                         const std::string& b) {
        throw std::runtime_error("checkpoint stores " + field + "=" + a +
                                 ", run config declares " + b);
    };
    const auto check_u = [&](const char* field, std::size_t a, std::size_t b) {
        if (a != b) fail(field, std::to_string(a), std::to_string(b));
    };
    check_u("d_feature", stored.d_feature, declared.d_feature);
    if (stored.alpha != declared.alpha) {
        std::ostringstream a, b;
        a << stored.alpha;
        b << declared.alpha;
        fail("alpha", a.str(), b.str());
    }
    check_u("n_layers", stored.n_layers, declared.n_layers);
    check_u("n_heads", stored.n_heads, declared.n_heads);
    check_u("d_head", stored.d_head, declared.d_head);
    check_u("patch_h", stored.patch.h, declared.patch.h);
    check_u("patch_w", stored.patch.w, declared.patch.w);
    check_u("in_channels", stored.in_channels, declared.in_channels);
    check_u("out_channels", stored.out_channels, declared.out_channels);
    check_u("grid_h", stored.grid_h, declared.grid_h);
    check_u("grid_w", stored.grid_w, declared.grid_w);
    check_u("time_steps", stored.time_steps, declared.time_steps);
    if (stored.task_mode != declared.task_mode) {
        fail("task_mode",
             stored.task_mode == TaskMode::Frames ? "frames" : "full-field",
             declared.task_mode == TaskMode::Frames ? "frames" : "full-field");
    }
    check_u("d_cond", stored.d_cond, declared.d_cond);
}

}  // namespace unisolver
