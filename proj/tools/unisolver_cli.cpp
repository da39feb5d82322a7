// Command-line surface: dataset generation, training, evaluation, single
// prediction, and CSV export, all thin deterministic wrappers over the
// library. Every run is described by one JSON config file; binary artifacts
// carry magic+version headers and round-trip byte-identically.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unisolver/dataset.hpp"
#include "unisolver/embedding.hpp"
#include "unisolver/model.hpp"
#include "unisolver/rng.hpp"
#include "unisolver/serialize.hpp"
#include "unisolver/tensor.hpp"
#include "unisolver/training.hpp"

using json = nlohmann::json;
using namespace unisolver;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config file " + path +
                                 " does not parse: " + e.what());
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

const json& require_key(const json& j, const std::string& key,
                        const std::string& context) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw std::runtime_error("config is missing \"" + key + "\" under " +
                                 context);
    }
    return *it;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

std::vector<double> get_doubles(const json& j, const std::string& key) {
    return require_key(j, key, "task").get<std::vector<double>>();
}

// --- config -> library structures ------------------------------------------

TaskSpec task_from_config(const json& config, const std::string& family_flag) {
    const json& task = require_key(config, "task", "the config root");
    const std::string family_name =
        !family_flag.empty() ? family_flag
                             : require_key(task, "family", "task")
                                   .get<std::string>();
    const Family family = family_from_string(family_name);
    switch (family) {
        case Family::Advection:
            return advection_task(get_doubles(task, "betas_id"),
                                  get_or(task, "betas_ood",
                                         std::vector<double>{}),
                                  get_or<std::size_t>(task, "n_x", 64),
                                  get_or(task, "t_out", 0.5));
        case Family::HeterNSMini: {
            TaskSpec spec = heterns_mini_task(
                get_doubles(task, "nus_id"), get_doubles(task, "omegas_id"),
                SplitTag::ID, get_or<std::size_t>(task, "n", 64),
                get_or(task, "T", 10.0), get_or<std::size_t>(task, "n_t", 11));
            const auto nus_ood =
                get_or(task, "nus_ood", std::vector<double>{});
            const auto omegas_ood =
                get_or(task, "omegas_ood", std::vector<double>{});
            if (!nus_ood.empty() && !omegas_ood.empty()) {
                const TaskSpec ood = heterns_mini_task(
                    nus_ood, omegas_ood, SplitTag::OOD,
                    get_or<std::size_t>(task, "n", 64),
                    get_or(task, "T", 10.0),
                    get_or<std::size_t>(task, "n_t", 11));
                spec.combos.insert(spec.combos.end(), ood.combos.begin(),
                                   ood.combos.end());
            }
            return spec;
        }
        case Family::Family1D:
            return family1d_task(get_or<std::size_t>(task, "n_x", 128),
                                 get_or<std::size_t>(task, "n_t", 32));
        case Family::String:
            return string_task(get_or<std::size_t>(task, "n_x", 64),
                               get_or<std::size_t>(task, "n_t", 16),
                               get_or(task, "speed", 1.0),
                               get_or(task, "horizon", 1.0));
    }
    throw std::logic_error("task_from_config: bad family enum");
}

TaskMode task_mode_from_string(const std::string& name) {
    if (name == "frames") return TaskMode::Frames;
    if (name == "full-field") return TaskMode::FullField;
    throw std::runtime_error("unknown task mode: " + name +
                             " (use frames|full-field)");
}

ConditioningMode conditioning_mode_from_string(const std::string& name) {
    if (name == "deep") return ConditioningMode::Deep;
    if (name == "ablated") return ConditioningMode::Ablated;
    if (name == "concat") return ConditioningMode::ConcatInput;
    throw std::runtime_error("unknown conditioning mode: " + name +
                             " (use deep|ablated|concat)");
}

PointFieldKind point_field_kind_from_string(const std::string& name) {
    if (name == "force") return PointFieldKind::Force;
    if (name == "kappa") return PointFieldKind::Kappa;
    if (name == "geometry") return PointFieldKind::Geometry;
    if (name == "boundary_values") return PointFieldKind::BoundaryValues;
    throw std::runtime_error("unknown point field kind: " + name);
}

// Architecture fields come from the config; grid extents, time depth, and
// channel counts come from the dataset the run is bound to.
ModelConfig model_from_config(const json& config, const Dataset& ds,
                              std::size_t in_channels) {
    const json& m = require_key(config, "model", "the config root");
    ModelConfig mc;
    mc.d_feature = get_or<std::size_t>(m, "d_feature", 64);
    mc.alpha = get_or(m, "alpha", 0.5);
    mc.n_layers = get_or<std::size_t>(m, "n_layers", 4);
    mc.n_heads = get_or<std::size_t>(m, "n_heads", 4);
    mc.d_head = get_or<std::size_t>(m, "d_head",
                                    mc.d_feature / std::max<std::size_t>(
                                                       mc.n_heads, 1));
    mc.patch.h = get_or<std::size_t>(m, "patch_h", 1);
    mc.patch.w = get_or<std::size_t>(m, "patch_w", 4);
    mc.task_mode = task_mode_from_string(
        get_or<std::string>(m, "task_mode", "frames"));
    mc.d_cond = get_or<std::size_t>(m, "d_cond", 64);

    mc.grid_h = ds.grid.spatial_dims == 2 ? ds.grid.n_y : 1;
    mc.grid_w = ds.grid.n_x;
    mc.time_steps = mc.task_mode == TaskMode::FullField ? ds.grid.n_t : 1;
    if (ds.samples.empty() || ds.samples[0].outputs.empty()) {
        throw std::runtime_error("dataset has no output fields to train on");
    }
    mc.out_channels = ds.samples[0].outputs[0].shape.at(0);
    mc.in_channels = in_channels;
    return mc;
}

ConditionEmbedderConfig embedder_from_config(const json& config,
                                             const Dataset& ds,
                                             const ModelConfig& mc) {
    ConditionEmbedderConfig ec;
    const json e = config.value("embedder", json::object());
    ec.symbol_dim = get_or<std::size_t>(e, "symbol_dim", 64);
    ec.d_cond = get_or<std::size_t>(e, "d_cond", mc.d_cond);
    ec.coefficient_keys =
        get_or(e, "coefficient_keys", std::vector<std::string>{});
    if (e.contains("point_fields")) {
        for (const json& spec : e.at("point_fields")) {
            ec.point_fields.push_back(
                {point_field_kind_from_string(
                     require_key(spec, "kind", "embedder.point_fields")
                         .get<std::string>()),
                 get_or<std::size_t>(spec, "channels", 1)});
        }
    }
    ec.grid_h = ds.grid.spatial_dims == 2 ? ds.grid.n_y : 1;
    ec.grid_w = ds.grid.n_x;
    const std::size_t default_ph = ds.grid.spatial_dims == 2 ? mc.patch.h : 1;
    ec.patch.h = get_or<std::size_t>(e, "patch_h", default_ph);
    ec.patch.w = get_or<std::size_t>(e, "patch_w", mc.patch.w);
    return ec;
}

TrainConfig train_from_config(const json& config) {
    const json& t = require_key(config, "train", "the config root");
    TrainConfig tc;
    tc.batch_size = get_or<std::size_t>(t, "batch_size", 16);
    tc.epochs = get_or<std::size_t>(t, "epochs", 200);
    tc.lr_init = get_or(t, "lr_init", 5e-4);
    tc.lr_min = get_or(t, "lr_min", 0.0);
    tc.warmup_epochs = get_or<std::size_t>(t, "warmup_epochs", 0);
    tc.adam.beta1 = get_or(t, "beta1", 0.9);
    tc.adam.beta2 = get_or(t, "beta2", 0.999);
    tc.adam.eps = get_or(t, "eps", 1e-8);
    tc.adam.weight_decay = get_or(t, "weight_decay", 0.0);
    tc.seed = get_or<std::uint64_t>(t, "seed", 0);
    tc.validation_fraction = get_or(t, "validation_fraction", 0.10);
    tc.mode = conditioning_mode_from_string(
        get_or<std::string>(t, "mode", "deep"));
    validate_train_config(tc);
    return tc;
}

constexpr std::uint64_t kModelInitStream = 0x6d6f64656c696e69ull;
constexpr std::uint64_t kCondInitStream = 0x636f6e64696e6974ull;

struct BuiltRun {
    ModelConfig model_config;
    ConditionEmbedderConfig embedder_config;
    TrainConfig train_config;
};

BuiltRun build_run(const json& config, const Dataset& ds) {
    BuiltRun run;
    run.train_config = train_from_config(config);
    if (ds.samples.empty() || ds.samples[0].inputs.empty()) {
        throw std::runtime_error("dataset has no input fields");
    }
    // The embedder config is needed to size concat-mode inputs, and the model
    // config is needed for embedder defaults; resolve in two passes.
    const json& m = require_key(config, "model", "the config root");
    ModelConfig seed_mc;
    seed_mc.d_cond = get_or<std::size_t>(m, "d_cond", 64);
    seed_mc.patch.h = get_or<std::size_t>(m, "patch_h", 1);
    seed_mc.patch.w = get_or<std::size_t>(m, "patch_w", 4);
    run.embedder_config = embedder_from_config(config, ds, seed_mc);
    const std::size_t base_channels = ds.samples[0].inputs[0].shape.at(0);
    const std::size_t in_channels = input_channel_count(
        base_channels, run.embedder_config, run.train_config.mode);
    run.model_config = model_from_config(config, ds, in_channels);
    return run;
}

// --- report/curve JSON artifacts -------------------------------------------

std::string split_name(SplitTag split) {
    return split == SplitTag::ID ? "ID" : "OOD";
}

json report_to_json(const EvalReport& report) {
    json groups = json::array();
    for (const EvalGroup& g : report.groups) {
        groups.push_back({{"coefficients", g.coefficients},
                          {"split", split_name(g.split)},
                          {"mean_rel_l2", g.mean_rel_l2},
                          {"count", g.count}});
    }
    json j{{"kind", "eval_report"},
           {"groups", groups},
           {"n_id", report.n_id},
           {"n_ood", report.n_ood}};
    if (report.n_id > 0) j["mean_id"] = report.mean_id;
    if (report.n_ood > 0) j["mean_ood"] = report.mean_ood;
    return j;
}

EvalReport report_from_json(const json& j) {
    EvalReport report;
    for (const json& g : require_key(j, "groups", "the report")) {
        EvalGroup group;
        group.coefficients =
            g.at("coefficients").get<std::map<std::string, double>>();
        const std::string split = g.at("split").get<std::string>();
        if (split != "ID" && split != "OOD") {
            throw std::runtime_error("report split must be ID or OOD, got " +
                                     split);
        }
        group.split = split == "ID" ? SplitTag::ID : SplitTag::OOD;
        group.mean_rel_l2 = g.at("mean_rel_l2").get<double>();
        group.count = g.at("count").get<std::size_t>();
        report.groups.push_back(std::move(group));
    }
    report.n_id = get_or<std::size_t>(j, "n_id", 0);
    report.n_ood = get_or<std::size_t>(j, "n_ood", 0);
    if (j.contains("mean_id")) report.mean_id = j.at("mean_id").get<double>();
    if (j.contains("mean_ood"))
        report.mean_ood = j.at("mean_ood").get<double>();
    return report;
}

json curve_to_json(const TrainResult& result) {
    return json{{"kind", "loss_curve"},
                {"train", result.train_curve},
                {"val", result.val_curve},
                {"best_epoch", result.best_epoch},
                {"epochs_run", result.epochs_run},
                {"aborted_non_finite", result.aborted_non_finite}};
}

EvalReport filter_report(const EvalReport& report, const std::string& split) {
    if (split == "all") return report;
    const SplitTag keep = split == "id" ? SplitTag::ID : SplitTag::OOD;
    EvalReport out;
    for (const EvalGroup& g : report.groups) {
        if (g.split == keep) out.groups.push_back(g);
    }
    if (keep == SplitTag::ID) {
        out.n_id = report.n_id;
        out.mean_id = report.mean_id;
    } else {
        out.n_ood = report.n_ood;
        out.mean_ood = report.mean_ood;
    }
    return out;
}

// --- subcommand bodies -------------------------------------------------------

int run_generate(const std::string& config_path, const std::string& family,
                 const std::string& out_path, std::int64_t seed_flag,
                 const std::string& dtype_name) {
    const json config = load_json_file(config_path);
    const TaskSpec task = task_from_config(config, family);
    const json gen = config.value("generate", json::object());
    const std::size_t n_samples = get_or<std::size_t>(gen, "n_samples", 64);
    const std::uint64_t seed =
        seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag)
                       : get_or<std::uint64_t>(gen, "seed", 0);
    FieldDType dtype = FieldDType::F64;
    const std::string dt =
        !dtype_name.empty() ? dtype_name
                            : get_or<std::string>(gen, "dtype", "f64");
    if (dt == "f32") {
        dtype = FieldDType::F32;
    } else if (dt != "f64") {
        throw std::runtime_error("unknown dtype: " + dt + " (use f32|f64)");
    }

    const Dataset ds = generate_dataset(task, n_samples, seed);
    save_dataset_file(out_path, ds, dtype);

    std::set<std::pair<std::string, int>> groups;
    for (const Sample& s : ds.samples) {
        std::string key;
        for (const auto& [k, v] : s.components.coefficients) {
            key += k + "=" + fmt(v) + ",";
        }
        groups.insert({key, int(s.split)});
    }
    std::cout << "family=" << family_name(ds.family) << "\n"
              << "samples=" << ds.samples.size() << "\n"
              << "retries=" << ds.retry_count << "\n"
              << "condition_groups=" << groups.size() << "\n"
              << "out=" << out_path << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, const std::string& curve_path) {
    const json config = load_json_file(config_path);
    const Dataset ds = load_dataset_file(data_path);
    const BuiltRun run = build_run(config, ds);

    Rng model_rng(Rng::derive_stream(run.train_config.seed, kModelInitStream));
    UnisolverModel model(run.model_config, model_rng);
    Rng cond_rng(Rng::derive_stream(run.train_config.seed, kCondInitStream));
    ConditionEmbedder embedder(
        run.embedder_config,
        SymbolEmbedder::hashed(run.embedder_config.symbol_dim), cond_rng);

    const TrainResult result = train(model, embedder, ds, run.train_config);
    load_parameter_values(training_parameters(model, embedder),
                          result.best_params);

    Rng state_rng(run.train_config.seed);
    const Checkpoint ckpt =
        make_checkpoint(model, embedder, run.train_config, result.best_epoch,
                        state_rng.serialize_state());
    save_checkpoint_file(out_path, ckpt);
    if (!curve_path.empty()) {
        write_text_file(curve_path, curve_to_json(result).dump(2) + "\n");
    }

    // The same evaluation cli_eval runs on this checkpoint and dataset, so
    // the logged numbers are reproducible from the artifacts alone.
    const EvalReport report = evaluate(model, embedder, ds, run.train_config.mode);
    std::cout << "epochs_run=" << result.epochs_run << "\n"
              << "best_epoch=" << result.best_epoch << "\n"
              << "best_val_loss=" << fmt(result.best_val_loss) << "\n";
    if (report.n_id > 0)
        std::cout << "id_mean_rel_l2=" << fmt(report.mean_id) << "\n";
    if (report.n_ood > 0)
        std::cout << "ood_mean_rel_l2=" << fmt(report.mean_ood) << "\n";
    std::cout << "checkpoint=" << out_path << "\n";
    if (result.aborted_non_finite) {
        std::cerr << "training aborted: loss left the reals; checkpoint holds "
                     "the last finite state\n";
        return 1;
    }
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& out_path, const std::string& split,
             const std::string& config_path) {
    const Checkpoint ckpt = load_checkpoint_file(ckpt_path);
    if (!config_path.empty()) {
        // The stored architecture is authoritative; a run config may restate
        // fields but must not contradict them.
        const json config = load_json_file(config_path);
        if (config.contains("model")) {
            const json& m = config.at("model");
            ModelConfig declared = ckpt.model;
            declared.d_feature =
                get_or<std::size_t>(m, "d_feature", declared.d_feature);
            declared.alpha = get_or(m, "alpha", declared.alpha);
            declared.n_layers =
                get_or<std::size_t>(m, "n_layers", declared.n_layers);
            declared.n_heads =
                get_or<std::size_t>(m, "n_heads", declared.n_heads);
            declared.d_head = get_or<std::size_t>(m, "d_head", declared.d_head);
            declared.patch.h = get_or<std::size_t>(m, "patch_h", declared.patch.h);
            declared.patch.w = get_or<std::size_t>(m, "patch_w", declared.patch.w);
            declared.d_cond = get_or<std::size_t>(m, "d_cond", declared.d_cond);
            if (m.contains("task_mode")) {
                declared.task_mode = task_mode_from_string(
                    m.at("task_mode").get<std::string>());
            }
            require_matching_architecture(ckpt.model, declared);
        }
    }
    RestoredRun run = restore_checkpoint(ckpt);
    const Dataset ds = load_dataset_file(data_path);
    const EvalReport report =
        evaluate(run.model, run.embedder, ds, ckpt.train.mode);
    const EvalReport filtered = filter_report(report, split);
    write_text_file(out_path, report_to_json(filtered).dump(2) + "\n");

    if (filtered.n_id > 0)
        std::cout << "id_mean_rel_l2=" << fmt(filtered.mean_id) << "\n";
    if (filtered.n_ood > 0)
        std::cout << "ood_mean_rel_l2=" << fmt(filtered.mean_ood) << "\n";
    std::cout << "groups=" << filtered.groups.size() << "\n"
              << "report=" << out_path << "\n";
    return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& data_path,
                std::size_t index, const std::string& out_path) {
    const Checkpoint ckpt = load_checkpoint_file(ckpt_path);
    RestoredRun run = restore_checkpoint(ckpt);
    const Dataset ds = load_dataset_file(data_path);
    if (index >= ds.samples.size()) {
        throw std::runtime_error("sample index " + std::to_string(index) +
                                 " out of range: dataset holds " +
                                 std::to_string(ds.samples.size()));
    }
    const Sample& sample = ds.samples[index];
    const Tensor input = sample_input(sample, ds.grid,
                                      run.embedder.config(), ckpt.train.mode);
    DeepConditions cond;
    if (ckpt.train.mode == ConditioningMode::Deep) {
        cond = run.embedder.embed(sample.components);
    } else {
        cond.domain = Tensor::zeros({1, ckpt.model.d_cond});
        cond.point =
            Tensor::zeros({run.model.token_count(), ckpt.model.d_cond});
    }
    const Tensor pred = run.model.forward(input, cond);

    const Tensor target =
        sample_target(sample, ds.grid, ckpt.model.task_mode);
    const double err = relative_l2(pred.data(), target.data());

    json j{{"kind", "field"},
           {"name", "prediction"},
           {"index", index},
           {"shape", pred.shape()},
           {"values", pred.data()},
           {"rel_l2_vs_stored_output", err}};
    write_text_file(out_path, j.dump() + "\n");
    std::cout << "rel_l2=" << fmt(err) << "\n"
              << "prediction=" << out_path << "\n";
    return 0;
}

int run_export(const std::string& in_path, const std::string& out_path) {
    const json j = load_json_file(in_path);
    const std::string kind =
        require_key(j, "kind", "the artifact").get<std::string>();
    std::string csv;
    if (kind == "eval_report") {
        csv = eval_report_csv(report_from_json(j));
    } else if (kind == "loss_curve") {
        TrainResult r;
        r.train_curve = j.at("train").get<std::vector<double>>();
        r.val_curve = j.at("val").get<std::vector<double>>();
        if (r.train_curve.size() != r.val_curve.size()) {
            throw std::runtime_error(
                "loss curve arrays disagree on the epoch count");
        }
        csv = loss_curve_csv(r);
    } else {
        throw std::runtime_error("unknown artifact kind: " + kind +
                                 " (expected eval_report|loss_curve)");
    }
    write_text_file(out_path, csv);
    std::cout << "csv=" << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "PDE-conditional transformer laboratory: dataset generation, "
        "training, evaluation, and export"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, curve_path, family,
        split = "all", dtype, in_path, ckpt_path;
    std::int64_t seed_flag = -1;
    std::size_t index = 0;

    CLI::App* gen = app.add_subcommand(
        "generate", "Generate a dataset file from a task config");
    gen->add_option("--config", config_path, "JSON run config")->required();
    gen->add_option("--out", out_path, "output dataset path")->required();
    gen->add_option("--family", family,
                    "override the config's task family");
    gen->add_option("--seed", seed_flag, "override the config's seed");
    gen->add_option("--dtype", dtype, "field payload width: f32|f64");

    CLI::App* tr = app.add_subcommand(
        "train", "Train on a dataset file and write a checkpoint");
    tr->add_option("--config", config_path, "JSON run config")->required();
    tr->add_option("--data", data_path, "dataset file")->required();
    tr->add_option("--out", out_path, "output checkpoint path")->required();
    tr->add_option("--curve", curve_path, "optional loss-curve JSON path");

    CLI::App* ev = app.add_subcommand(
        "eval", "Evaluate a checkpoint against a dataset file");
    ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    ev->add_option("--data", data_path, "dataset file")->required();
    ev->add_option("--out", out_path, "output report JSON path")->required();
    ev->add_option("--split", split, "report filter: all|id|ood")
        ->check(CLI::IsMember({"all", "id", "ood"}));
    ev->add_option("--config", config_path,
                   "optional run config cross-checked against the checkpoint");

    CLI::App* pr = app.add_subcommand(
        "predict", "Run one dataset sample through a checkpoint");
    pr->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    pr->add_option("--data", data_path, "dataset file")->required();
    pr->add_option("--index", index, "sample index");
    pr->add_option("--out", out_path, "output field JSON path")->required();

    CLI::App* ex = app.add_subcommand(
        "export", "Convert a report/curve JSON artifact to CSV");
    ex->add_option("--in", in_path, "report or curve JSON")->required();
    ex->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return run_generate(config_path, family, out_path, seed_flag,
                                dtype);
        if (tr->parsed())
            return run_train(config_path, data_path, out_path, curve_path);
        if (ev->parsed())
            return run_eval(ckpt_path, data_path, out_path, split,
                            config_path);
        if (pr->parsed())
            return run_predict(ckpt_path, data_path, index, out_path);
        if (ex->parsed()) return run_export(in_path, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
