#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "unisolver/dataset.hpp"
#include "unisolver/embedding.hpp"
#include "unisolver/model.hpp"
#include "unisolver/rng.hpp"
#include "unisolver/tensor.hpp"
#include "unisolver/training.hpp"

using namespace unisolver;

namespace {

double max_abs_diff(const std::vector<double>& a,
                    const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](double x) { return std::isfinite(x); });
}

Dataset make_advection(std::size_t n_samples, std::uint64_t seed,
                       std::size_t n_x = 32,
                       std::vector<double> betas_id = {0.2, 0.5, 1.0},
                       std::vector<double> betas_ood = {0.35}) {
    return generate_dataset(advection_task(betas_id, betas_ood, n_x, 0.5),
                            n_samples, seed);
}

ConditionEmbedderConfig embedder_config(std::size_t d_cond,
                                        std::size_t grid_w,
                                        std::size_t patch_w = 4) {
    ConditionEmbedderConfig cfg;
    cfg.symbol_dim = 64;
    cfg.d_cond = d_cond;
    cfg.coefficient_keys = {"beta"};
    cfg.patch = PatchSpec{1, patch_w};
    cfg.grid_h = 1;
    cfg.grid_w = grid_w;
    return cfg;
}

ConditionEmbedder build_embedder(const ConditionEmbedderConfig& cfg,
                                 std::uint64_t seed) {
    Rng rng(seed);
    return ConditionEmbedder(cfg, SymbolEmbedder::hashed(cfg.symbol_dim), rng);
}

ModelConfig model_config(std::size_t d_cond, std::size_t grid_w,
                         std::size_t d_feature = 16, std::size_t n_layers = 1) {
    ModelConfig c;
    c.d_feature = d_feature;
    c.alpha = 0.5;
    c.n_layers = n_layers;
    c.n_heads = 2;
    c.d_head = d_feature / 2;
    c.patch = PatchSpec{1, 4};
    c.in_channels = 1;
    c.out_channels = 1;
    c.grid_h = 1;
    c.grid_w = grid_w;
    c.d_cond = d_cond;
    return c;
}

UnisolverModel build_model(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return UnisolverModel(cfg, rng);
}

}  // namespace

TEST_CASE("relative error metric matches hand values and a scaling law") {
    CHECK(relative_l2({3.0, 4.0}, {3.0, 4.0}) == 0.0);
    CHECK(relative_l2({0.0, 0.0}, {3.0, 4.0}) == doctest::Approx(1.0));
    CHECK(relative_l2({3.0, 0.0}, {3.0, 4.0}) == doctest::Approx(0.8));

    // Scaling a field by c gives a relative error of exactly |c - 1|.
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> truth(17);
        for (double& v : truth) v = rng.uniform(-2.0, 2.0);
        const double c = rng.uniform(-3.0, 3.0);
        std::vector<double> pred = truth;
        for (double& v : pred) v *= c;
        CHECK(relative_l2(pred, truth) ==
              doctest::Approx(std::abs(c - 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("relative error metric rejects malformed inputs") {
    CHECK_THROWS_AS(relative_l2({1.0, 2.0}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(relative_l2({1.0, 2.0}, {0.0, 0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        relative_l2_loss(Tensor::from_vector({1, 2}, {1.0, 2.0}),
                         Tensor::from_vector({1, 2}, {0.0, 0.0})),
        std::invalid_argument);
}

TEST_CASE("differentiable loss agrees with the plain metric and with finite "
          "differences") {
    Rng rng(11);
    std::vector<double> pv(16), tv(16);
    for (double& v : pv) v = rng.uniform(-1.0, 1.0);
    for (double& v : tv) v = rng.uniform(-1.0, 1.0);
    Tensor pred = Tensor::from_vector({2, 8}, pv, /*requires_grad=*/true);
    const Tensor truth = Tensor::from_vector({2, 8}, tv);

    const Tensor loss = relative_l2_loss(pred, truth);
    CHECK(loss.item() ==
          doctest::Approx(relative_l2(pv, tv)).epsilon(1e-14));

    backward(loss);
    REQUIRE(pred.has_grad());
    const std::vector<double> grad = pred.grad();
    const double h = 1e-6;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        std::vector<double> hi = pv, lo = pv;
        hi[i] += h;
        lo[i] -= h;
        const double fd = (relative_l2(hi, tv) - relative_l2(lo, tv)) /
                          (2.0 * h);
        const double denom =
            std::max({std::abs(grad[i]), std::abs(fd), 1e-8});
        CHECK(std::abs(grad[i] - fd) / denom < 1e-5);
    }
}

TEST_CASE("promotion arithmetic") {
    // One solver at 0.0336 against a runner-up at 0.0458 is a 26.6% gain.
    CHECK(std::abs(relative_promotion(0.0336, 0.0458) - 0.266) < 5e-4);
    CHECK(relative_promotion(0.25, 0.25) == 0.0);
    CHECK(relative_promotion(0.0, 0.5) == 1.0);
    CHECK_THROWS_AS(relative_promotion(0.1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(relative_promotion(0.1, -0.2), std::invalid_argument);
    CHECK_THROWS_AS(relative_promotion(-0.1, 0.2), std::invalid_argument);
}

TEST_CASE("adam takes a signed unit-scale first step and leaves gradient-free "
          "tensors alone") {
    Tensor p = Tensor::from_vector({1, 1}, {1.0}, /*requires_grad=*/true);
    Tensor q = Tensor::from_vector({1, 1}, {1.0}, /*requires_grad=*/true);
    const NamedParams params{{"p", p}, {"q", q}};
    AdamState state = make_adam_state(params);
    const AdamConfig adam;

    backward(scale(p, 3.0));  // d/dp = 3
    adam_step(params, state, adam, 0.01);
    // Bias correction makes the first step lr * g / (|g| + eps) ~ lr.
    CHECK(std::abs(p.data()[0] - 0.99) < 1e-9);
    CHECK(q.data()[0] == 1.0);  // zero moments never move a parameter

    // Momentum keeps a parameter moving for a while after its gradient stops.
    p.clear_grad();
    adam_step(params, state, adam, 0.01);
    CHECK(p.data()[0] < 0.99 - 1e-4);
    CHECK(q.data()[0] == 1.0);

    AdamState bad = make_adam_state({{"p", p}});
    CHECK_THROWS_AS(adam_step(params, bad, adam, 0.01),
                    std::invalid_argument);
}

TEST_CASE("adam weight decay shrinks a parameter that has no gradient") {
    Tensor p = Tensor::from_vector({1, 1}, {1.0}, /*requires_grad=*/true);
    const NamedParams params{{"p", p}};
    AdamState state = make_adam_state(params);
    AdamConfig adam;
    adam.weight_decay = 0.1;
    adam_step(params, state, adam, 0.01);
    CHECK(std::abs(p.data()[0] - 0.99) < 1e-7);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    Tensor x = Tensor::from_vector({1, 1}, {1.0}, /*requires_grad=*/true);
    const NamedParams params{{"x", x}};
    AdamState state = make_adam_state(params);
    const AdamConfig adam;
    for (int step = 0; step < 300; ++step) {
        x.clear_grad();
        backward(mul(x, x));
        adam_step(params, state, adam, 0.01);
    }
    CHECK(std::abs(x.data()[0]) < 0.05);
}

TEST_CASE("cosine schedule: warmup ramp, endpoints, symmetry, bounds") {
    const double lr0 = 1e-3, lrm = 1e-5;
    CHECK(cosine_lr(0, 100, lr0, lrm, 0) == doctest::Approx(lr0).epsilon(1e-12));
    CHECK(cosine_lr(100, 100, lr0, lrm, 0) ==
          doctest::Approx(lrm).epsilon(1e-12));
    CHECK(cosine_lr(50, 100, lr0, lrm, 0) ==
          doctest::Approx(0.5 * (lr0 + lrm)).epsilon(1e-12));

    // Linear ramp over the first warmup steps, then the cosine takes over
    // exactly at lr_init.
    CHECK(cosine_lr(0, 100, lr0, lrm, 10) ==
          doctest::Approx(lr0 * 0.1).epsilon(1e-12));
    CHECK(cosine_lr(9, 100, lr0, lrm, 10) == doctest::Approx(lr0));
    CHECK(cosine_lr(10, 100, lr0, lrm, 10) ==
          doctest::Approx(lr0).epsilon(1e-12));

    // The cosine is symmetric about the midpoint of the annealing span.
    for (std::size_t s : {0, 10, 25, 40}) {
        CHECK(cosine_lr(s, 100, lr0, lrm, 0) +
                  cosine_lr(100 - s, 100, lr0, lrm, 0) ==
              doctest::Approx(lr0 + lrm).epsilon(1e-12));
    }
    for (std::size_t s = 0; s <= 100; s += 7) {
        const double lr = cosine_lr(s, 100, lr0, lrm, 0);
        CHECK(lr <= lr0 * (1 + 1e-12));
        CHECK(lr >= lrm * (1 - 1e-12));
    }

    CHECK(cosine_lr(10, 10, lr0, lrm, 10) == lr0);  // all-warmup schedule
    CHECK_THROWS_AS(cosine_lr(101, 100, lr0, lrm, 0), std::invalid_argument);
}

TEST_CASE("snapshots round-trip bitwise and reject mismatched shapes") {
    const ConditionEmbedderConfig ecfg = embedder_config(8, 32);
    ConditionEmbedder embedder = build_embedder(ecfg, 3);
    UnisolverModel model = build_model(model_config(8, 32), 4);

    const NamedParams params = training_parameters(model, embedder);
    CHECK(params.size() ==
          model.parameters().size() + embedder.parameters().size());
    CHECK(params.front().first == "model.patch_embed.w");
    bool saw_cond = false;
    for (const auto& [name, t] : params) {
        CHECK((name.rfind("model.", 0) == 0 || name.rfind("cond.", 0) == 0));
        if (name == "cond.domain.symbols.w1") saw_cond = true;
    }
    CHECK(saw_cond);

    ParameterSnapshot snap = snapshot_parameters(params);
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        for (double& v : handle.data()) v += 1.0;
    }
    load_parameter_values(params, snap);
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(params[i].second.data() == snap[i].second);
    }

    ParameterSnapshot swapped = snap;
    std::swap(swapped[0], swapped[1]);
    CHECK_THROWS_AS(load_parameter_values(params, swapped),
                    std::invalid_argument);
    ParameterSnapshot resized = snap;
    resized[0].second.push_back(0.0);
    CHECK_THROWS_AS(load_parameter_values(params, resized),
                    std::invalid_argument);
    ParameterSnapshot truncated = snap;
    truncated.pop_back();
    CHECK_THROWS_AS(load_parameter_values(params, truncated),
                    std::invalid_argument);
}

TEST_CASE("sample adapters: concat channels, frame targets, validation") {
    const Dataset ds = make_advection(4, 11, 16);
    const Sample& sample = ds.samples[0];
    const double beta = sample.components.coefficients.at("beta");

    ConditionEmbedderConfig cfg = embedder_config(8, 16);
    cfg.point_fields = {{PointFieldKind::Force, 1}};

    CHECK(input_channel_count(1, cfg, ConditioningMode::Deep) == 1);
    CHECK(input_channel_count(1, cfg, ConditioningMode::Ablated) == 1);
    CHECK(input_channel_count(1, cfg, ConditioningMode::ConcatInput) == 3);

    const Tensor plain =
        sample_input(sample, ds.grid, cfg, ConditioningMode::Deep);
    CHECK(plain.shape() == Shape{1, 16});
    CHECK(plain.data() == sample.inputs[0].values);

    const Tensor cat =
        sample_input(sample, ds.grid, cfg, ConditioningMode::ConcatInput);
    REQUIRE(cat.shape() == Shape{3, 16});
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(cat.data()[i] == sample.inputs[0].values[i]);
        CHECK(cat.data()[16 + i] == beta);   // coefficient broadcast
        CHECK(cat.data()[32 + i] == 0.0);    // absent force -> zeros
    }

    Sample forced = sample;
    forced.components.has_force = true;
    forced.components.force = {"f", {1, 16}, std::vector<double>(16, 0.25)};
    const Tensor fcat =
        sample_input(forced, ds.grid, cfg, ConditioningMode::ConcatInput);
    for (std::size_t i = 0; i < 16; ++i) CHECK(fcat.data()[32 + i] == 0.25);

    ConditionEmbedderConfig missing = cfg;
    missing.coefficient_keys = {"gamma"};
    CHECK_THROWS_AS(
        sample_input(sample, ds.grid, missing, ConditioningMode::ConcatInput),
        std::invalid_argument);
    Sample short_force = forced;
    short_force.components.force.shape = {1, 8};
    short_force.components.force.values.resize(8);
    CHECK_THROWS_AS(sample_input(short_force, ds.grid, cfg,
                                 ConditioningMode::ConcatInput),
                    std::invalid_argument);

    // The stored output holds [C, n_t, n_x]; frame mode trains on the final
    // frame, full-field mode on the whole block.
    Sample frames = sample;
    frames.outputs[0].shape = {1, 3, 16};
    frames.outputs[0].values.resize(48);
    for (std::size_t i = 0; i < 48; ++i)
        frames.outputs[0].values[i] = double(i);
    const Tensor last =
        sample_target(frames, ds.grid, TaskMode::Frames);
    REQUIRE(last.shape() == Shape{1, 16});
    for (std::size_t i = 0; i < 16; ++i)
        CHECK(last.data()[i] == double(32 + i));
    const Tensor whole =
        sample_target(frames, ds.grid, TaskMode::FullField);
    CHECK(whole.shape() == Shape{1, 3, 16});
    CHECK(whole.data() == frames.outputs[0].values);

    GridSpec grid2d;
    grid2d.spatial_dims = 2;
    grid2d.n_x = 4;
    grid2d.n_y = 4;
    Sample planar;
    planar.outputs.push_back(
        {"w", {1, 4, 4}, std::vector<double>(16, 1.0)});
    CHECK(sample_target(planar, grid2d, TaskMode::Frames).shape() ==
          Shape{1, 4, 4});
    CHECK_THROWS_AS(sample_target(planar, grid2d, TaskMode::FullField),
                    std::invalid_argument);
}

TEST_CASE("training is bit-deterministic under fixed seeds") {
    const Dataset ds = make_advection(48, 21);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.epochs = 3;
    tc.lr_init = 1e-3;
    tc.seed = 9;

    auto run = [&]() {
        ConditionEmbedder embedder = build_embedder(embedder_config(8, 32), 31);
        UnisolverModel model = build_model(model_config(8, 32), 32);
        TrainResult r = train(model, embedder, ds, tc);
        return std::make_pair(
            r, snapshot_parameters(training_parameters(model, embedder)));
    };
    const auto [ra, pa] = run();
    const auto [rb, pb] = run();

    REQUIRE(ra.train_curve.size() == 3);
    CHECK(ra.epochs_run == 3);
    CHECK(ra.train_curve == rb.train_curve);
    CHECK(ra.val_curve == rb.val_curve);
    CHECK(ra.best_epoch == rb.best_epoch);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].second == pb[i].second);
    }
    for (std::size_t i = 0; i < ra.best_params.size(); ++i) {
        CHECK(ra.best_params[i].second == rb.best_params[i].second);
    }
    CHECK(all_finite(ra.train_curve));
    CHECK(all_finite(ra.val_curve));
}

TEST_CASE("zero learning rate leaves every parameter untouched") {
    const Dataset ds = make_advection(16, 23);
    ConditionEmbedder embedder = build_embedder(embedder_config(8, 32), 41);
    UnisolverModel model = build_model(model_config(8, 32), 42);
    const NamedParams params = training_parameters(model, embedder);
    const ParameterSnapshot before = snapshot_parameters(params);

    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.lr_init = 0.0;
    tc.lr_min = 0.0;
    const TrainResult r = train(model, embedder, ds, tc);
    CHECK(r.epochs_run == 2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(params[i].second.data() == before[i].second);
    }
}

TEST_CASE("a non-finite loss aborts training and restores the last good "
          "parameters") {
    const Dataset ds = make_advection(16, 25);
    ConditionEmbedder embedder = build_embedder(embedder_config(8, 32), 51);
    UnisolverModel model = build_model(model_config(8, 32), 52);
    const NamedParams params = training_parameters(model, embedder);
    const ParameterSnapshot before = snapshot_parameters(params);

    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 4;
    tc.lr_init = 1e308;  // the first update throws the weights to +-1e308
    const TrainResult r = train(model, embedder, ds, tc);
    CHECK(r.aborted_non_finite);
    CHECK(r.epochs_run < 4);
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(all_finite(params[i].second.data()));
    }
    // The blow-up happens inside the first epoch, so the restored state is
    // the initialization itself.
    if (r.epochs_run == 0) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            CHECK(params[i].second.data() == before[i].second);
        }
    }
}

TEST_CASE("one optimizer step moves exactly the gradient-carrying tensors") {
    const Dataset ds = make_advection(4, 13);
    ConditionEmbedder embedder = build_embedder(embedder_config(8, 32), 61);
    UnisolverModel model = build_model(model_config(8, 32), 62);
    const NamedParams params = training_parameters(model, embedder);
    const ParameterSnapshot before = snapshot_parameters(params);

    TrainConfig tc;
    tc.batch_size = 16;  // one batch covers the whole training split
    tc.epochs = 1;
    tc.lr_init = 1e-3;
    tc.validation_fraction = 0.0;
    const TrainResult r = train(model, embedder, ds, tc);
    REQUIRE(r.epochs_run == 1);
    REQUIRE_FALSE(r.aborted_non_finite);

    // At initialization every block is an identity gated by select == 0, so
    // gradient reaches only the patch embedding, the read-out, and the final
    // (zero) layers of each condition projection. The embedder sits behind
    // those zero layers and cannot move yet.
    auto expected_changed = [](const std::string& name) {
        if (name.rfind("cond.", 0) == 0) return false;
        const auto ends_with = [&](const char* suffix) {
            const std::size_t n = std::string(suffix).size();
            return name.size() >= n &&
                   name.compare(name.size() - n, n, suffix) == 0;
        };
        if (name.find(".cond") != std::string::npos)
            return ends_with(".w2") || ends_with(".b2");
        if (name.rfind("model.patch_embed.", 0) == 0) return true;
        if (name.rfind("model.head.out.", 0) == 0) return true;
        return false;
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        const bool changed =
            max_abs_diff(params[i].second.data(), before[i].second) > 0.0;
        CHECK_MESSAGE(changed == expected_changed(params[i].first),
                      params[i].first);
    }
}

TEST_CASE("training skips every sample tagged out-of-distribution") {
    Dataset ds = make_advection(16, 27);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Sample& sample : ds.samples) {
        if (sample.split == SplitTag::OOD) {
            for (Field& f : sample.inputs)
                std::fill(f.values.begin(), f.values.end(), nan);
            for (Field& f : sample.outputs)
                std::fill(f.values.begin(), f.values.end(), nan);
        }
    }
    ConditionEmbedder embedder = build_embedder(embedder_config(8, 32), 71);
    UnisolverModel model = build_model(model_config(8, 32), 72);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 1;
    tc.lr_init = 1e-3;
    const TrainResult r = train(model, embedder, ds, tc);
    CHECK_FALSE(r.aborted_non_finite);
    CHECK(all_finite(r.train_curve));
}

TEST_CASE("a short advection run learns: the loss curve drops and the best "
          "epoch is tracked") {
    const Dataset ds =
        generate_dataset(advection_task({0.2, 0.5, 1.0}, {0.35}, 64, 0.5),
                         96, 3);
    ConditionEmbedder embedder = build_embedder(embedder_config(32, 64), 81);
    UnisolverModel model = build_model(model_config(32, 64, 32, 2), 82);

    TrainConfig tc;
    tc.batch_size = 16;
    tc.epochs = 40;
    tc.lr_init = 2e-3;
    tc.warmup_epochs = 1;
    tc.seed = 5;
    const TrainResult r = train(model, embedder, ds, tc);

    REQUIRE(r.epochs_run == 40);
    REQUIRE(r.train_curve.size() == 40);
    REQUIRE(r.val_curve.size() == 40);
    CHECK(all_finite(r.train_curve));
    CHECK(all_finite(r.val_curve));
    CHECK(r.train_curve.back() < 0.8 * r.train_curve.front());

    const auto best =
        std::min_element(r.val_curve.begin(), r.val_curve.end());
    CHECK(r.best_val_loss == *best);
    CHECK(r.best_epoch ==
          std::size_t(std::distance(r.val_curve.begin(), best)));
    CHECK(r.best_params.size() ==
          training_parameters(model, embedder).size());

    const std::string csv = loss_curve_csv(r);
    CHECK(csv.rfind("epoch,train_loss,val_loss\n1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);

    const EvalReport report = evaluate(model, embedder, ds);
    CHECK(report.n_id == 72);
    CHECK(report.n_ood == 24);
    CHECK(std::isfinite(report.mean_id));
    CHECK(report.mean_id > 0.0);
}

TEST_CASE("evaluation groups by coefficient values and split, and re-runs "
          "bit-exactly") {
    const Dataset ds = make_advection(8, 33);
    const ConditionEmbedderConfig ecfg = embedder_config(8, 32);
    ConditionEmbedder embedder = build_embedder(ecfg, 91);
    const UnisolverModel model = build_model(model_config(8, 32), 92);

    const EvalReport report = evaluate(model, embedder, ds);
    REQUIRE(report.groups.size() == 4);
    std::size_t id_groups = 0, ood_groups = 0;
    for (const EvalGroup& g : report.groups) {
        CHECK(g.count == 2);
        REQUIRE(g.coefficients.count("beta") == 1);
        if (g.split == SplitTag::ID) {
            ++id_groups;
        } else {
            ++ood_groups;
            CHECK(g.coefficients.at("beta") == 0.35);
        }
    }
    CHECK(id_groups == 3);
    CHECK(ood_groups == 1);
    CHECK(report.n_id == 6);
    CHECK(report.n_ood == 2);

    // The split means are plain averages of per-sample errors.
    double sum_id = 0.0, sum_ood = 0.0;
    for (const Sample& sample : ds.samples) {
        const Tensor input =
            sample_input(sample, ds.grid, ecfg, ConditioningMode::Deep);
        const Tensor target =
            sample_target(sample, ds.grid, model.config().task_mode);
        const Tensor pred =
            model.forward(input, embedder.embed(sample.components));
        const double err = relative_l2(pred.data(), target.data());
        (sample.split == SplitTag::ID ? sum_id : sum_ood) += err;
    }
    CHECK(report.mean_id == sum_id / 6.0);
    CHECK(report.mean_ood == sum_ood / 2.0);
    CHECK(split_mean(report, SplitTag::ID) == report.mean_id);
    CHECK(split_mean(report, SplitTag::OOD) == report.mean_ood);

    const EvalReport again = evaluate(model, embedder, ds);
    CHECK(again.mean_id == report.mean_id);
    CHECK(again.mean_ood == report.mean_ood);
    for (std::size_t i = 0; i < report.groups.size(); ++i) {
        CHECK(again.groups[i].mean_rel_l2 == report.groups[i].mean_rel_l2);
    }

    const std::string csv = eval_report_csv(report);
    CHECK(csv.rfind("beta,split,mean_rel_l2,n_samples\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find(",OOD,") != std::string::npos);

    // A dataset without one split reports that split as absent.
    const Dataset id_only = generate_dataset(
        advection_task({0.2, 0.5}, {}, 32, 0.5), 6, 35);
    const EvalReport partial = evaluate(model, embedder, id_only);
    CHECK(partial.n_ood == 0);
    CHECK(std::isnan(partial.mean_ood));
    CHECK_THROWS_AS(split_mean(partial, SplitTag::OOD),
                    std::invalid_argument);

    // Promotion between two reports is the promotion of their split means.
    const UnisolverModel other = build_model(model_config(8, 32), 93);
    ConditionEmbedder other_emb = build_embedder(ecfg, 94);
    const EvalReport base = evaluate(other, other_emb, ds);
    CHECK(report_promotion(report, base, SplitTag::ID) ==
          relative_promotion(report.mean_id, base.mean_id));
}

TEST_CASE("ablated conditioning equals deep conditioning on a fresh network") {
    const Dataset ds = make_advection(8, 37);
    ConditionEmbedder embedder = build_embedder(embedder_config(8, 32), 95);
    const UnisolverModel model = build_model(model_config(8, 32), 96);
    const EvalReport deep = evaluate(model, embedder, ds);
    const EvalReport ablated =
        evaluate(model, embedder, ds, ConditioningMode::Ablated);
    CHECK(deep.mean_id == ablated.mean_id);
    CHECK(deep.mean_ood == ablated.mean_ood);
    for (std::size_t i = 0; i < deep.groups.size(); ++i) {
        CHECK(deep.groups[i].mean_rel_l2 == ablated.groups[i].mean_rel_l2);
    }
}

TEST_CASE("ablated and concat training run clean and never touch the "
          "embedder") {
    const Dataset ds = make_advection(16, 39);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 1;
    tc.lr_init = 1e-3;

    for (ConditioningMode mode :
         {ConditioningMode::Ablated, ConditioningMode::ConcatInput}) {
        ConditionEmbedder embedder =
            build_embedder(embedder_config(8, 32), 97);
        ModelConfig mc = model_config(8, 32);
        mc.in_channels =
            input_channel_count(1, embedder.config(), mode);
        UnisolverModel model = build_model(mc, 98);
        const ParameterSnapshot emb_before =
            snapshot_parameters(training_parameters(model, embedder));

        tc.mode = mode;
        const TrainResult r = train(model, embedder, ds, tc);
        CHECK(r.epochs_run == 1);
        CHECK(all_finite(r.train_curve));

        const NamedParams after = training_parameters(model, embedder);
        bool model_moved = false;
        for (std::size_t i = 0; i < after.size(); ++i) {
            const bool same = after[i].second.data() == emb_before[i].second;
            if (after[i].first.rfind("cond.", 0) == 0) {
                CHECK_MESSAGE(same, after[i].first);
            } else if (!same) {
                model_moved = true;
            }
        }
        CHECK(model_moved);
    }
}

TEST_CASE("config and compatibility validation raises on the first "
          "inconsistency") {
    TrainConfig tc;
    tc.batch_size = 0;
    CHECK_THROWS_AS(validate_train_config(tc), std::invalid_argument);
    tc = TrainConfig{};
    tc.epochs = 0;
    CHECK_THROWS_AS(validate_train_config(tc), std::invalid_argument);
    tc = TrainConfig{};
    tc.lr_init = -1.0;
    CHECK_THROWS_AS(validate_train_config(tc), std::invalid_argument);
    tc = TrainConfig{};
    tc.adam.beta1 = 1.0;
    CHECK_THROWS_AS(validate_train_config(tc), std::invalid_argument);
    tc = TrainConfig{};
    tc.adam.eps = 0.0;
    CHECK_THROWS_AS(validate_train_config(tc), std::invalid_argument);
    tc = TrainConfig{};
    tc.adam.weight_decay = -0.1;
    CHECK_THROWS_AS(validate_train_config(tc), std::invalid_argument);
    tc = TrainConfig{};
    tc.validation_fraction = 1.0;
    CHECK_THROWS_AS(validate_train_config(tc), std::invalid_argument);

    const Dataset ds = make_advection(8, 43);
    ConditionEmbedder embedder = build_embedder(embedder_config(8, 32), 99);

    // Model grid disagrees with the dataset grid.
    const UnisolverModel narrow = build_model(model_config(8, 16), 100);
    CHECK_THROWS_AS(evaluate(narrow, embedder, ds), std::invalid_argument);

    // Full-field model wants more stored time steps than the dataset has.
    ModelConfig ff = model_config(8, 32);
    ff.task_mode = TaskMode::FullField;
    ff.time_steps = 4;
    ff.patch = PatchSpec{2, 4};
    const UnisolverModel full = build_model(ff, 101);
    CHECK_THROWS_AS(evaluate(full, embedder, ds), std::invalid_argument);

    // Deep conditioning requires matching token counts.
    ConditionEmbedder coarse =
        build_embedder(embedder_config(8, 32, /*patch_w=*/8), 102);
    const UnisolverModel model = build_model(model_config(8, 32), 103);
    CHECK_THROWS_AS(evaluate(model, coarse, ds), std::invalid_argument);
    CHECK_NOTHROW(
        evaluate(model, coarse, ds, ConditioningMode::Ablated));

    // Concat mode widens the expected input channel count.
    CHECK_THROWS_AS(
        evaluate(model, embedder, ds, ConditioningMode::ConcatInput),
        std::invalid_argument);

    // Training needs in-distribution samples.
    const Dataset ood_only =
        generate_dataset(advection_task({}, {0.35}, 32, 0.5), 4, 45);
    ConditionEmbedder emb2 = build_embedder(embedder_config(8, 32), 104);
    UnisolverModel m2 = build_model(model_config(8, 32), 105);
    TrainConfig ok;
    ok.epochs = 1;
    CHECK_THROWS_AS(train(m2, emb2, ood_only, ok), std::invalid_argument);
}

TEST_CASE("loss curve rendering uses exact 1-based epochs") {
    TrainResult r;
    r.train_curve = {0.5, 0.25};
    r.val_curve = {0.75, 0.125};
    CHECK(loss_curve_csv(r) ==
          "epoch,train_loss,val_loss\n1,0.5,0.75\n2,0.25,0.125\n");
}
