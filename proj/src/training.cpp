#include "unisolver/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>

namespace unisolver {

namespace {

std::string format_double(double v, const char* fmt = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

}  // namespace

// --- metrics -------------------------------------------------------------

double relative_l2(const std::vector<double>& pred,
                   const std::vector<double>& truth) {
    if (pred.size() != truth.size()) {
        throw std::invalid_argument(
            "relative_l2: prediction has " + std::to_string(pred.size()) +
            " values, truth has " + std::to_string(truth.size()));
    }
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        err += d * d;
        ref += truth[i] * truth[i];
    }
    if (ref == 0.0) {
        throw std::invalid_argument(
            "relative_l2: truth field has zero norm, metric undefined");
    }
    return std::sqrt(err) / std::sqrt(ref);
}

Tensor relative_l2_loss(const Tensor& pred, const Tensor& truth) {
    if (pred.size() != truth.size()) {
        throw std::invalid_argument(
            "relative_l2_loss: prediction " + shape_str(pred.shape()) +
            " vs truth " + shape_str(truth.shape()));
    }
    double ref = 0.0;
    for (double t : truth.data()) ref += t * t;
    if (ref == 0.0) {
        throw std::invalid_argument(
            "relative_l2_loss: truth field has zero norm, metric undefined");
    }
    const Tensor diff = sub(pred, truth);
    return scale(sqrt_elem(sum(mul(diff, diff))), 1.0 / std::sqrt(ref));
}

double relative_promotion(double eps_ours, double eps_second) {
    if (!(eps_second > 0.0)) {
        throw std::invalid_argument(
            "relative_promotion: reference error must be positive, got " +
            format_double(eps_second, "%g"));
    }
    if (eps_ours < 0.0) {
        throw std::invalid_argument(
            "relative_promotion: negative error " +
            format_double(eps_ours, "%g"));
    }
    return 1.0 - eps_ours / eps_second;
}

// --- optimizer and schedule ----------------------------------------------

AdamState make_adam_state(const NamedParams& params) {
    AdamState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& [name, t] : params) {
        state.m.emplace_back(t.size(), 0.0);
        state.v.emplace_back(t.size(), 0.0);
    }
    return state;
}

void adam_step(const NamedParams& params, AdamState& state,
               const AdamConfig& config, double lr) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument(
            "adam_step: state tracks " + std::to_string(state.m.size()) +
            " tensors, parameter list has " + std::to_string(params.size()));
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, double(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor param = params[i].second;
        auto& value = param.data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != value.size()) {
            throw std::invalid_argument(
                "adam_step: moment size " + std::to_string(m.size()) +
                " does not match parameter '" + params[i].first + "' of size " +
                std::to_string(value.size()));
        }
        const std::vector<double>* grad =
            param.has_grad() ? &param.grad() : nullptr;
        for (std::size_t j = 0; j < value.size(); ++j) {
            double g = grad ? (*grad)[j] : 0.0;
            g += config.weight_decay * value[j];
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            value[j] -= lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init,
                 double lr_min, std::size_t warmup_steps) {
    if (step > total_steps) {
        throw std::invalid_argument(
            "cosine_lr: step " + std::to_string(step) + " beyond total " +
            std::to_string(total_steps));
    }
    if (warmup_steps > 0 && step < warmup_steps) {
        return lr_init * double(step + 1) / double(warmup_steps);
    }
    if (total_steps <= warmup_steps) return lr_init;
    const double progress =
        double(step - warmup_steps) / double(total_steps - warmup_steps);
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(M_PI * progress));
}

// --- parameter snapshots ---------------------------------------------------

ParameterSnapshot snapshot_parameters(const NamedParams& params) {
    ParameterSnapshot snap;
    snap.reserve(params.size());
    for (const auto& [name, t] : params) snap.emplace_back(name, t.data());
    return snap;
}

void load_parameter_values(const NamedParams& params,
                           const ParameterSnapshot& snapshot) {
    if (params.size() != snapshot.size()) {
        throw std::invalid_argument(
            "load_parameter_values: " + std::to_string(snapshot.size()) +
            " stored tensors for " + std::to_string(params.size()) +
            " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].first != snapshot[i].first) {
            throw std::invalid_argument(
                "load_parameter_values: parameter '" + params[i].first +
                "' does not match stored '" + snapshot[i].first + "'");
        }
        Tensor t = params[i].second;
        if (t.size() != snapshot[i].second.size()) {
            throw std::invalid_argument(
                "load_parameter_values: '" + params[i].first + "' has " +
                std::to_string(t.size()) + " values, stored " +
                std::to_string(snapshot[i].second.size()));
        }
        t.data() = snapshot[i].second;
    }
}

NamedParams training_parameters(const UnisolverModel& model,
                                const ConditionEmbedder& embedder) {
    NamedParams out;
    for (const auto& [name, t] : model.parameters())
        out.emplace_back("model." + name, t);
    for (const auto& [name, t] : embedder.parameters())
        out.emplace_back("cond." + name, t);
    return out;
}

// --- sample adaptation -----------------------------------------------------

void validate_train_config(const TrainConfig& config) {
    if (config.batch_size == 0)
        throw std::invalid_argument("train config: batch_size must be >= 1");
    if (config.epochs == 0)
        throw std::invalid_argument("train config: epochs must be >= 1");
    if (config.lr_init < 0.0 || config.lr_min < 0.0)
        throw std::invalid_argument("train config: negative learning rate");
    if (!(config.adam.beta1 >= 0.0 && config.adam.beta1 < 1.0) ||
        !(config.adam.beta2 >= 0.0 && config.adam.beta2 < 1.0))
        throw std::invalid_argument("train config: betas must lie in [0, 1)");
    if (!(config.adam.eps > 0.0))
        throw std::invalid_argument("train config: eps must be positive");
    if (config.adam.weight_decay < 0.0)
        throw std::invalid_argument("train config: negative weight decay");
    if (!(config.validation_fraction >= 0.0 &&
          config.validation_fraction < 1.0))
        throw std::invalid_argument(
            "train config: validation_fraction must lie in [0, 1)");
}

std::size_t input_channel_count(std::size_t base_channels,
                                const ConditionEmbedderConfig& cond_config,
                                ConditioningMode mode) {
    if (mode != ConditioningMode::ConcatInput) return base_channels;
    std::size_t extra = cond_config.coefficient_keys.size();
    for (const auto& spec : cond_config.point_fields) extra += spec.channels;
    return base_channels + extra;
}

namespace {

const Field* sample_field(const Sample& sample, PointFieldKind kind) {
    switch (kind) {
        case PointFieldKind::Force:
            return sample.components.has_force ? &sample.components.force
                                               : nullptr;
        case PointFieldKind::Kappa:
            return sample.components.has_kappa ? &sample.components.kappa
                                               : nullptr;
        case PointFieldKind::Geometry:
            return sample.components.has_geometry
                       ? &sample.components.geometry_mask
                       : nullptr;
        case PointFieldKind::BoundaryValues:
            return sample.components.has_boundary_values
                       ? &sample.components.boundary_values
                       : nullptr;
    }
    return nullptr;
}

}  // namespace

Tensor sample_input(const Sample& sample, const GridSpec& grid,
                    const ConditionEmbedderConfig& cond_config,
                    ConditioningMode mode) {
    if (sample.inputs.empty())
        throw std::invalid_argument("sample_input: sample has no input field");
    const Field& base = sample.inputs[0];
    if (mode != ConditioningMode::ConcatInput) {
        return Tensor::from_vector(base.shape, base.values);
    }

    const std::size_t cells =
        grid.spatial_dims == 2 ? grid.n_y * grid.n_x : grid.n_x;
    if (base.shape.empty() || base.values.size() % cells != 0) {
        throw std::invalid_argument(
            "sample_input: input field '" + base.name + "' does not tile " +
            std::to_string(cells) + " grid cells");
    }
    std::vector<double> values = base.values;
    const std::size_t base_channels = base.values.size() / cells;

    for (const auto& key : cond_config.coefficient_keys) {
        auto it = sample.components.coefficients.find(key);
        if (it == sample.components.coefficients.end()) {
            throw std::invalid_argument(
                "sample_input: coefficient map is missing key '" + key + "'");
        }
        values.insert(values.end(), cells, it->second);
    }
    for (const auto& spec : cond_config.point_fields) {
        const Field* field = sample_field(sample, spec.kind);
        if (field == nullptr) {
            values.insert(values.end(), spec.channels * cells, 0.0);
            continue;
        }
        if (field->values.size() != spec.channels * cells) {
            throw std::invalid_argument(
                "sample_input: field '" + field->name + "' carries " +
                std::to_string(field->values.size()) + " values, expected " +
                std::to_string(spec.channels * cells));
        }
        values.insert(values.end(), field->values.begin(),
                      field->values.end());
    }

    const std::size_t channels =
        input_channel_count(base_channels, cond_config, mode);
    Shape shape = grid.spatial_dims == 2 ? Shape{channels, grid.n_y, grid.n_x}
                                         : Shape{channels, grid.n_x};
    return Tensor::from_vector(std::move(shape), std::move(values));
}

Tensor sample_target(const Sample& sample, const GridSpec& grid,
                     TaskMode mode) {
    if (sample.outputs.empty())
        throw std::invalid_argument("sample_target: sample has no output field");
    const Field& out = sample.outputs[0];
    if (grid.spatial_dims == 2) {
        if (mode == TaskMode::FullField) {
            throw std::invalid_argument(
                "sample_target: full-field mode is defined for 1-D grids only");
        }
        return Tensor::from_vector(out.shape, out.values);
    }
    if (mode == TaskMode::FullField || out.shape.size() != 3) {
        return Tensor::from_vector(out.shape, out.values);
    }
    // Frames on a 1-D grid: the stored output is [C, n_t, n_x]; the training
    // target is the final frame.
    const std::size_t channels = out.shape[0];
    const std::size_t n_t = out.shape[1];
    const std::size_t n_x = out.shape[2];
    std::vector<double> frame(channels * n_x);
    for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t offset = (c * n_t + (n_t - 1)) * n_x;
        std::copy(out.values.begin() + offset,
                  out.values.begin() + offset + n_x,
                  frame.begin() + c * n_x);
    }
    return Tensor::from_vector({channels, n_x}, std::move(frame));
}

// --- training -----------------------------------------------------------

namespace {

constexpr std::uint64_t kValSplitStream = 0x76616c73706c6974ull;
constexpr std::uint64_t kEpochStreamBase = 0x65706f6368000000ull;

void shuffle_indices(std::vector<std::size_t>& indices, Rng& rng) {
    for (std::size_t i = indices.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(indices[i - 1], indices[j]);
    }
}

DeepConditions zero_conditions(const UnisolverModel& model) {
    DeepConditions cond;
    cond.domain = Tensor::zeros({1, model.config().d_cond});
    cond.point = Tensor::zeros({model.token_count(), model.config().d_cond});
    return cond;
}

void check_compatibility(const UnisolverModel& model,
                         const ConditionEmbedder& embedder,
                         const Dataset& dataset, ConditioningMode mode) {
    const ModelConfig& mc = model.config();
    const GridSpec& grid = dataset.grid;
    const std::size_t want_h = grid.spatial_dims == 2 ? grid.n_y : 1;
    if (mc.grid_w != grid.n_x || mc.grid_h != want_h) {
        throw std::invalid_argument(
            "model grid " + std::to_string(mc.grid_h) + "x" +
            std::to_string(mc.grid_w) + " does not match dataset grid " +
            std::to_string(want_h) + "x" + std::to_string(grid.n_x));
    }
    if (mc.task_mode == TaskMode::FullField) {
        if (grid.spatial_dims != 1) {
            throw std::invalid_argument(
                "full-field mode is defined for 1-D datasets only");
        }
        if (mc.time_steps != grid.n_t) {
            throw std::invalid_argument(
                "model emits " + std::to_string(mc.time_steps) +
                " time steps, dataset stores " + std::to_string(grid.n_t));
        }
    }
    if (dataset.samples.empty())
        throw std::invalid_argument("dataset holds no samples");
    const std::size_t base_channels = dataset.samples[0].inputs.empty()
                                          ? 0
                                          : dataset.samples[0].inputs[0].shape[0];
    const std::size_t want_channels =
        input_channel_count(base_channels, embedder.config(), mode);
    if (mc.in_channels != want_channels) {
        throw std::invalid_argument(
            "model expects " + std::to_string(mc.in_channels) +
            " input channels, samples provide " +
            std::to_string(want_channels));
    }
    if (mode == ConditioningMode::Deep &&
        embedder.token_count() != model.token_count()) {
        throw std::invalid_argument(
            "embedder emits " + std::to_string(embedder.token_count()) +
            " point tokens, model expects " +
            std::to_string(model.token_count()));
    }
}

}  // namespace

TrainResult train(UnisolverModel& model, ConditionEmbedder& embedder,
                  const Dataset& dataset, const TrainConfig& config) {
    validate_train_config(config);
    check_compatibility(model, embedder, dataset, config.mode);

    std::vector<std::size_t> id_indices;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        if (dataset.samples[i].split == SplitTag::ID) id_indices.push_back(i);
    }
    if (id_indices.empty())
        throw std::invalid_argument("train: dataset has no ID samples");

    // Seed-stable validation split.
    {
        Rng split_rng(Rng::derive_stream(config.seed, kValSplitStream));
        shuffle_indices(id_indices, split_rng);
    }
    const std::size_t n_val = static_cast<std::size_t>(
        config.validation_fraction * double(id_indices.size()));
    std::vector<std::size_t> val_indices(id_indices.begin(),
                                         id_indices.begin() + n_val);
    std::vector<std::size_t> train_indices(id_indices.begin() + n_val,
                                           id_indices.end());
    if (train_indices.empty())
        throw std::invalid_argument("train: validation split consumed every sample");

    // Constant per-sample tensors, built once.
    std::vector<Tensor> inputs(dataset.samples.size());
    std::vector<Tensor> targets(dataset.samples.size());
    for (std::size_t i : id_indices) {
        inputs[i] = sample_input(dataset.samples[i], dataset.grid,
                                 embedder.config(), config.mode);
        targets[i] = sample_target(dataset.samples[i], dataset.grid,
                                   model.config().task_mode);
    }
    const DeepConditions zeros = zero_conditions(model);
    auto conditions_for = [&](std::size_t i) {
        return config.mode == ConditioningMode::Deep
                   ? embedder.embed(dataset.samples[i].components)
                   : zeros;
    };

    const NamedParams params = training_parameters(model, embedder);
    AdamState adam = make_adam_state(params);

    const std::size_t steps_per_epoch =
        (train_indices.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = steps_per_epoch * config.epochs;
    const std::size_t warmup_steps = steps_per_epoch * config.warmup_epochs;

    TrainResult result;
    result.best_params = snapshot_parameters(params);
    ParameterSnapshot last_good = result.best_params;
    std::size_t global_step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = train_indices;
        Rng epoch_rng(
            Rng::derive_stream(config.seed, kEpochStreamBase + epoch));
        shuffle_indices(order, epoch_rng);

        double epoch_loss = 0.0;
        bool exploded = false;
        for (std::size_t begin = 0; begin < order.size();
             begin += config.batch_size) {
            const std::size_t end =
                std::min(begin + config.batch_size, order.size());
            Tensor acc;
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t i = order[k];
                const Tensor pred =
                    model.forward(inputs[i], conditions_for(i));
                const Tensor loss = relative_l2_loss(pred, targets[i]);
                acc = acc.defined() ? add(acc, loss) : loss;
            }
            const Tensor batch_loss = scale(acc, 1.0 / double(end - begin));
            const double loss_value = batch_loss.item();
            if (!std::isfinite(loss_value)) {
                exploded = true;
                break;
            }
            epoch_loss += loss_value * double(end - begin);

            for (const auto& [name, t] : params) {
                Tensor handle = t;
                handle.clear_grad();
            }
            backward(batch_loss);
            const double lr = cosine_lr(global_step, total_steps,
                                        config.lr_init, config.lr_min,
                                        warmup_steps);
            adam_step(params, adam, config.adam, lr);
            ++global_step;
        }
        if (exploded) {
            load_parameter_values(params, last_good);
            result.aborted_non_finite = true;
            break;
        }

        const double train_loss = epoch_loss / double(train_indices.size());
        double val_loss = train_loss;
        if (!val_indices.empty()) {
            double sum_val = 0.0;
            for (std::size_t i : val_indices) {
                const Tensor pred =
                    model.forward(inputs[i], conditions_for(i));
                sum_val += relative_l2(pred.data(), targets[i].data());
            }
            val_loss = sum_val / double(val_indices.size());
        }
        result.train_curve.push_back(train_loss);
        result.val_curve.push_back(val_loss);
        result.epochs_run = epoch + 1;
        last_good = snapshot_parameters(params);
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.best_params = last_good;
        }
    }
    return result;
}

// --- evaluation -----------------------------------------------------------

namespace {

std::string coefficient_key(const std::map<std::string, double>& coeffs) {
    std::string key;
    for (const auto& [name, value] : coeffs) {
        if (!key.empty()) key += ",";
        key += name + "=" + format_double(value, "%.12g");
    }
    return key;
}

}  // namespace

EvalReport evaluate(const UnisolverModel& model,
                    const ConditionEmbedder& embedder, const Dataset& dataset,
                    ConditioningMode mode) {
    check_compatibility(model, embedder, dataset, mode);
    const DeepConditions zeros = zero_conditions(model);

    struct Accum {
        std::map<std::string, double> coefficients;
        SplitTag split = SplitTag::ID;
        double sum = 0.0;
        std::size_t count = 0;
    };
    std::map<std::pair<std::string, int>, Accum> groups;
    double sum_id = 0.0, sum_ood = 0.0;
    std::size_t n_id = 0, n_ood = 0;

    for (const Sample& sample : dataset.samples) {
        const Tensor input =
            sample_input(sample, dataset.grid, embedder.config(), mode);
        const Tensor target =
            sample_target(sample, dataset.grid, model.config().task_mode);
        const DeepConditions cond = mode == ConditioningMode::Deep
                                        ? embedder.embed(sample.components)
                                        : zeros;
        const Tensor pred = model.forward(input, cond);
        const double err = relative_l2(pred.data(), target.data());

        const auto key = std::make_pair(
            coefficient_key(sample.components.coefficients),
            int(sample.split));
        Accum& acc = groups[key];
        acc.coefficients = sample.components.coefficients;
        acc.split = sample.split;
        acc.sum += err;
        acc.count += 1;
        if (sample.split == SplitTag::ID) {
            sum_id += err;
            n_id += 1;
        } else {
            sum_ood += err;
            n_ood += 1;
        }
    }

    EvalReport report;
    for (const auto& [key, acc] : groups) {
        EvalGroup group;
        group.coefficients = acc.coefficients;
        group.split = acc.split;
        group.mean_rel_l2 = acc.sum / double(acc.count);
        group.count = acc.count;
        report.groups.push_back(std::move(group));
    }
    report.n_id = n_id;
    report.n_ood = n_ood;
    if (n_id > 0) report.mean_id = sum_id / double(n_id);
    if (n_ood > 0) report.mean_ood = sum_ood / double(n_ood);
    return report;
}

double split_mean(const EvalReport& report, SplitTag split) {
    const std::size_t n = split == SplitTag::ID ? report.n_id : report.n_ood;
    if (n == 0) {
        throw std::invalid_argument(
            std::string("split_mean: report holds no ") +
            (split == SplitTag::ID ? "ID" : "OOD") + " samples");
    }
    return split == SplitTag::ID ? report.mean_id : report.mean_ood;
}

double report_promotion(const EvalReport& ours, const EvalReport& baseline,
                        SplitTag split) {
    return relative_promotion(split_mean(ours, split),
                              split_mean(baseline, split));
}

std::string eval_report_csv(const EvalReport& report) {
    std::set<std::string> keys;
    for (const EvalGroup& group : report.groups)
        for (const auto& [name, value] : group.coefficients) keys.insert(name);

    std::string csv;
    for (const auto& key : keys) csv += key + ",";
    csv += "split,mean_rel_l2,n_samples\n";
    for (const EvalGroup& group : report.groups) {
        for (const auto& key : keys) {
            auto it = group.coefficients.find(key);
            if (it != group.coefficients.end())
                csv += format_double(it->second, "%.12g");
            csv += ",";
        }
        csv += group.split == SplitTag::ID ? "ID" : "OOD";
        csv += "," + format_double(group.mean_rel_l2, "%.10g") + "," +
               std::to_string(group.count) + "\n";
    }
    return csv;
}

std::string loss_curve_csv(const TrainResult& result) {
    std::string csv = "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < result.train_curve.size(); ++i) {
        csv += std::to_string(i + 1) + "," +
               format_double(result.train_curve[i]) + "," +
               format_double(result.val_curve[i]) + "\n";
    }
    return csv;
}

}  // namespace unisolver
