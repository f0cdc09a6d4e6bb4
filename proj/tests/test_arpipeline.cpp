#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nextview/arpipeline.hpp"
#include "nextview/errors.hpp"

using namespace nextview;
using namespace nextview::arpipeline;

namespace {

denoiser::UNetConfig tiny_unet() {
    denoiser::UNetConfig cfg;
    cfg.base_channels = 8;
    cfg.channel_mult = {1, 2};
    cfg.attn_levels = {1};
    cfg.middle_attention = true;
    cfg.heads = 2;
    cfg.norm_groups = 4;
    cfg.context_dim = 16;
    cfg.context_tokens = 4;
    cfg.time_embed_dim = 16;
    return cfg;
}

conditioning::EncoderConfig tiny_encoder() {
    conditioning::EncoderConfig cfg;
    cfg.input_size = 16;
    cfg.base_channels = 8;
    cfg.out_dim = 16;
    return cfg;
}

TrainConfig tiny_train() {
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.batch_size = 1;
    cfg.view_size = 16;
    cfg.resize_min = 8;
    cfg.resize_max = 16;
    cfg.seed = 7;
    return cfg;
}

std::unique_ptr<Model> tiny_model(std::uint64_t seed = 1) {
    return std::make_unique<Model>(tiny_unet(), tiny_encoder(),
                                   diffusion::linear_schedule(8, 1e-3, 0.25), seed);
}

synthdata::Dataset tiny_dataset(int count = 3, int view_size = 16) {
    synthdata::Dataset ds;
    synthdata::RenderConfig rc;
    rc.resolution = view_size;
    for (int i = 0; i < count; ++i) {
        Rng rng(500 + static_cast<std::uint64_t>(i));
        ds.samples.push_back(
            synthdata::make_sample(synthdata::random_scene(static_cast<std::uint64_t>(i)), rng, rc));
        ds.train_indices.push_back(i);
    }
    return ds;
}

}  // namespace

TEST_CASE("build_example: structure for each k") {
    const auto ds = tiny_dataset(1);
    const TrainConfig cfg = tiny_train();

    for (int k = 1; k <= 3; ++k) {
        Rng rng(11);
        const TrainExample ex = build_example(ds.samples[0], k, rng, cfg);
        CHECK(ex.k == k);
        CHECK(static_cast<int>(ex.condition_views.size()) == 2 * k - 1);
        CHECK(ex.condition_provenance.size() == ex.condition_views.size());
        for (auto p : ex.condition_provenance) CHECK(p == Provenance::GroundTruth);
        CHECK(ex.resize_side % 4 == 0);
        CHECK(ex.resize_side >= cfg.resize_min);
        CHECK(ex.resize_side <= cfg.resize_max);
        REQUIRE(ex.target_rows.size() == 1);
        CHECK(ex.target_rows[0].height == 16);
        CHECK(ex.target_rows[0].width == 32);
        for (std::size_t j = 1; j < ex.condition_elevations.size(); ++j)
            CHECK(ex.condition_elevations[j] == (j % 2 == 1 ? 20.0 : -10.0));
        // conditions are resized ground-truth renders
        for (const auto& pos : ex.condition_views) {
            CHECK(pos[0].height == ex.resize_side);
            CHECK(pos[0].width == ex.resize_side);
        }
    }

    // the target row is the tiled pair of the step's target views
    Rng rng(11);
    const TrainExample ex1 = build_example(ds.samples[0], 1, rng, cfg);
    const Image want = gridops::tile_row(ds.samples[0].target_views[0], ds.samples[0].target_views[1]);
    CHECK(ex1.target_rows[0].data == want.data);

    Rng r1(77), r2(77);
    const TrainExample a = build_example(ds.samples[0], 2, r1, cfg);
    const TrainExample b = build_example(ds.samples[0], 2, r2, cfg);
    CHECK(a.resize_side == b.resize_side);
    CHECK(a.condition_views[1][0].data == b.condition_views[1][0].data);

    CHECK_THROWS_AS(build_example(ds.samples[0], 0, rng, cfg), std::invalid_argument);
    CHECK_THROWS_AS(build_example(ds.samples[0], 4, rng, cfg), std::invalid_argument);
}

TEST_CASE("build_example honors the sequence order") {
    const auto ds = tiny_dataset(1);
    TrainConfig cfg = tiny_train();
    cfg.order = "reverse";
    Rng rng(3);
    const TrainExample ex = build_example(ds.samples[0], 1, rng, cfg);
    // reverse order: step 1 targets the canonical third row (views 4,5 0-based)
    const Image want = gridops::tile_row(ds.samples[0].target_views[4], ds.samples[0].target_views[5]);
    CHECK(ex.target_rows[0].data == want.data);
}

TEST_CASE("train_step: finite positive loss, finite gradients, loss drops when overfitting") {
    auto model = tiny_model();
    AdamW opt(AdamW::Hyper{0.9, 0.999, 1e-8, 0.0});
    const auto ds = tiny_dataset(1);
    TrainConfig cfg = tiny_train();

    Rng ex_rng(5);
    const TrainExample ex = build_example(ds.samples[0], 1, ex_rng, cfg);
    Rng first = step_rng_for(cfg.seed, 0);
    const StepStats s0 = train_step(*model, opt, ex, 1e-3, first, cfg);
    CHECK(std::isfinite(s0.loss));
    CHECK(s0.loss > 0.0);
    CHECK(std::isfinite(s0.grad_norm));
    CHECK(s0.grad_norm > 0.0);
    CHECK(s0.t >= 1);
    CHECK(s0.t <= model->schedule.T);

    double last = s0.loss;
    double first_window = 0.0, last_window = 0.0;
    for (int step = 1; step <= 60; ++step) {
        Rng rng = step_rng_for(cfg.seed, step);
        const StepStats s = train_step(*model, opt, ex, 1e-3, rng, cfg);
        last = s.loss;
        if (step <= 10) first_window += s.loss;
        if (step > 50) last_window += s.loss;
    }
    (void)last;
    CHECK(last_window / 10.0 < first_window / 10.0);
}

TEST_CASE("k=1 training path is byte-equivalent to the single-reference baseline") {
    const auto ds = tiny_dataset(1);

    TrainConfig both = tiny_train();
    both.local_all_refs = true;
    both.global_all_refs = true;

    TrainConfig baseline = tiny_train();
    baseline.local_all_refs = false;
    baseline.global_all_refs = false;

    // identical weights via identical init seed
    auto m1 = tiny_model(42);
    auto m2 = tiny_model(42);

    Rng e1(9), e2(9);
    const TrainExample ex1 = build_example(ds.samples[0], 1, e1, both);
    const TrainExample ex2 = build_example(ds.samples[0], 1, e2, baseline);

    Rng r1 = step_rng_for(123, 0);
    Rng r2 = step_rng_for(123, 0);
    const double l1 = loss_and_gradients(*m1, ex1, r1, both);
    const double l2 = loss_and_gradients(*m2, ex2, r2, baseline);
    CHECK(std::abs(l1 - l2) < 1e-10);

    const auto& items1 = m1->params.items();
    const auto& items2 = m2->params.items();
    REQUIRE(items1.size() == items2.size());
    double max_diff = 0.0;
    for (std::size_t i = 0; i < items1.size(); ++i) {
        REQUIRE(items1[i].second->grad.numel() == items2[i].second->grad.numel());
        for (std::size_t j = 0; j < items1[i].second->grad.data.size(); ++j)
            max_diff = std::max(max_diff, std::abs(items1[i].second->grad.data[j] -
                                                   items2[i].second->grad.data[j]));
    }
    CHECK(max_diff < 1e-10);
}

TEST_CASE("k>1 paths differ between arms (the conditioning actually engages)") {
    const auto ds = tiny_dataset(1);
    TrainConfig both = tiny_train();
    TrainConfig baseline = tiny_train();
    baseline.local_all_refs = false;
    baseline.global_all_refs = false;

    auto m1 = tiny_model(42);
    auto m2 = tiny_model(42);
    // output projections are zero at init; nudge all weights (identically in
    // both models) so the stacked tokens influence the loss
    Rng wrng(8);
    const auto& items1 = m1->params.items();
    const auto& items2 = m2->params.items();
    for (std::size_t pi = 0; pi < items1.size(); ++pi)
        for (std::size_t i = 0; i < items1[pi].second->value.data.size(); ++i) {
            const double nudge = 0.05 * wrng.uniform(-1.0, 1.0);
            items1[pi].second->value.data[i] += nudge;
            items2[pi].second->value.data[i] += nudge;
        }

    Rng e1(9), e2(9);
    const TrainExample ex1 = build_example(ds.samples[0], 3, e1, both);
    const TrainExample ex2 = build_example(ds.samples[0], 3, e2, baseline);
    Rng r1 = step_rng_for(123, 0);
    Rng r2 = step_rng_for(123, 0);
    const double l1 = loss_and_gradients(*m1, ex1, r1, both);
    const double l2 = loss_and_gradients(*m2, ex2, r2, baseline);
    CHECK(l1 != l2);
}

TEST_CASE("teacher-forcing provenance is enforced") {
    const auto ds = tiny_dataset(1);
    const TrainConfig cfg = tiny_train();
    auto model = tiny_model();
    Rng erng(3);
    TrainExample ex = build_example(ds.samples[0], 1, erng, cfg);
    ex.condition_provenance[0] = Provenance::Generated;  // simulate a leak
    Rng rng = step_rng_for(1, 0);
    CHECK_THROWS_AS(loss_and_gradients(*model, ex, rng, cfg), std::logic_error);
}

TEST_CASE("infer: six square views, deterministic under a fixed seed") {
    auto model = tiny_model(4);
    const auto ds = tiny_dataset(1);
    InferOptions opt;
    opt.num_steps = 3;
    opt.global_mode = "lstm_ge";

    const auto views = infer(*model, ds.samples[0].input_view, opt, Rng(31));
    REQUIRE(views.size() == 6);
    for (const auto& v : views) {
        CHECK(v.height == 16);
        CHECK(v.width == 16);
        for (double x : v.data) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
    const auto again = infer(*model, ds.samples[0].input_view, opt, Rng(31));
    for (int i = 0; i < 6; ++i)
        CHECK(views[static_cast<std::size_t>(i)].data == again[static_cast<std::size_t>(i)].data);
    const auto other = infer(*model, ds.samples[0].input_view, opt, Rng(32));
    CHECK(views[0].data != other[0].data);
}

TEST_CASE("infer honors generation order and re-sorts to canonical poses") {
    auto model = tiny_model(4);
    const auto ds = tiny_dataset(1);
    InferOptions normal;
    normal.num_steps = 3;
    InferOptions reverse = normal;
    reverse.order = "reverse";

    // step 1 sees identical conditioning (input only) and identical seeds in
    // both orders, so its generated row must land in canonical row 1 under
    // normal order and canonical row 3 under reverse order, bit-for-bit
    const auto vn = infer(*model, ds.samples[0].input_view, normal, Rng(55));
    const auto vr = infer(*model, ds.samples[0].input_view, reverse, Rng(55));
    CHECK(vn[0].data == vr[4].data);
    CHECK(vn[1].data == vr[5].data);
    CHECK(vn[0].data != vr[0].data);

    InferOptions random_order = normal;
    random_order.order = "random";
    const auto vd = infer(*model, ds.samples[0].input_view, random_order, Rng(55));
    CHECK(vn[0].data == vd[2].data);  // random order generates row 2 first
    REQUIRE(vd.size() == 6);
}

TEST_CASE("cosine restart schedule") {
    TrainConfig cfg = tiny_train();
    cfg.lr = 1e-3;
    cfg.lr_min_frac = 0.1;
    cfg.lr_restart_period = 100;
    CHECK(cosine_restart_lr(cfg, 0) == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(cosine_restart_lr(cfg, 100) == doctest::Approx(1e-3).epsilon(1e-12));  // restart
    CHECK(cosine_restart_lr(cfg, 50) == doctest::Approx(0.5 * (1e-3 + 1e-4)).epsilon(1e-9));
    for (int s = 1; s < 100; ++s)
        CHECK(cosine_restart_lr(cfg, s) < cosine_restart_lr(cfg, s - 1));
    CHECK(cosine_restart_lr(cfg, 99) > cfg.lr * cfg.lr_min_frac * 0.99);
}

TEST_CASE("checkpoint roundtrip preserves parameters and optimizer state") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "nextview_ckpt_test.bin").string();

    auto model = tiny_model(6);
    AdamW opt;
    const auto ds = tiny_dataset(1);
    TrainConfig cfg = tiny_train();
    cfg.steps = 3;
    train(*model, opt, ds, cfg, 0, nullptr);

    CheckpointMeta meta;
    meta.step = 3;
    meta.config_hash = "cafef00dcafef00d";
    meta.train_cfg = cfg;
    save_checkpoint(path, *model, &opt, meta);

    const LoadedCheckpoint lc = load_checkpoint(path);
    CHECK(lc.meta.step == 3);
    CHECK(lc.meta.config_hash == "cafef00dcafef00d");
    CHECK(lc.meta.train_cfg.view_size == cfg.view_size);
    REQUIRE(lc.opt != nullptr);
    CHECK(lc.opt->t() == opt.t());

    const auto& a = model->params.items();
    const auto& b = lc.model->params.items();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second->value.data == b[i].second->value.data);
    }
    for (const auto& [name, mv] : opt.state()) {
        REQUIRE(lc.opt->state().count(name) == 1);
        CHECK(lc.opt->state().at(name).first.data == mv.first.data);
        CHECK(lc.opt->state().at(name).second.data == mv.second.data);
    }
    fs::remove(path);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), DataError);
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted run exactly") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "nextview_resume_test.bin").string();
    const auto ds = tiny_dataset(2);
    TrainConfig cfg = tiny_train();
    cfg.steps = 6;

    // uninterrupted run
    auto m_full = tiny_model(9);
    AdamW opt_full;
    std::vector<double> losses_full;
    train(*m_full, opt_full, ds, cfg, 0,
          [&](int, const StepStats& s) { losses_full.push_back(s.loss); });

    // interrupted at step 3, checkpointed, resumed
    auto m_half = tiny_model(9);
    AdamW opt_half;
    cfg.steps = 3;
    train(*m_half, opt_half, ds, cfg, 0, nullptr);
    CheckpointMeta meta;
    meta.step = 3;
    meta.train_cfg = cfg;
    save_checkpoint(path, *m_half, &opt_half, meta);

    LoadedCheckpoint lc = load_checkpoint(path);
    REQUIRE(lc.opt != nullptr);
    cfg.steps = 6;
    std::vector<double> losses_resumed;
    train(*lc.model, *lc.opt, ds, cfg, lc.meta.step,
          [&](int, const StepStats& s) { losses_resumed.push_back(s.loss); });

    REQUIRE(losses_resumed.size() == 3);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(losses_resumed[static_cast<std::size_t>(i)] -
                       losses_full[static_cast<std::size_t>(i + 3)]) < 1e-6);

    const auto& a = m_full->params.items();
    const auto& b = lc.model->params.items();
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].second->value.data == b[i].second->value.data);
    fs::remove(path);
}

TEST_CASE("noise-level coupling: caches are recorded at the denoising t") {
    // forward_record stores t; merge rejects mixed noise levels, which pins
    // the invariant at the API boundary
    auto model = tiny_model(2);
    Rng rng(17);
    Tensor img({1, 3, 16, 16});
    for (auto& v : img.data) v = rng.uniform(-1, 1);
    Tensor eps(img.dims);
    for (auto& v : eps.data) v = rng.normal();
    const ag::Ref cond = ag::constant(Tensor({1, 4, 16}));
    const auto c3 = denoiser::forward_record(*model->unet, img, 3, eps, cond, model->schedule);
    const auto c5 = denoiser::forward_record(*model->unet, img, 5, eps, cond, model->schedule);
    CHECK(c3.t == 3);
    CHECK(c5.t == 5);
    Rng arng(1);
    CHECK_THROWS_AS(conditioning::merge_reference_caches({c3, c5}, 1.0, arng),
                    std::invalid_argument);
}

TEST_CASE("matmul and none global modes train end to end") {
    const auto ds = tiny_dataset(1);
    for (const char* mode : {"matmul", "none"}) {
        TrainConfig cfg = tiny_train();
        cfg.global_mode = mode;
        auto model = tiny_model(12);
        AdamW opt;
        Rng erng(4);
        const TrainExample ex = build_example(ds.samples[0], 2, erng, cfg);
        Rng rng = step_rng_for(cfg.seed, 0);
        const StepStats s = train_step(*model, opt, ex, 1e-3, rng, cfg);
        CHECK(std::isfinite(s.loss));
        CHECK(s.loss > 0.0);
        // the LSTM path is bypassed: its parameters receive zero gradient
        double lstm_gnorm = 0.0, unet_gnorm = 0.0;
        for (const auto& [name, ref] : model->params.items()) {
            double g = 0.0;
            for (double v : ref->grad.data) g += v * v;
            if (name.rfind("ge.lstm", 0) == 0) lstm_gnorm += g;
            if (name.rfind("unet.", 0) == 0) unet_gnorm += g;
        }
        CHECK(lstm_gnorm == 0.0);
        CHECK(unet_gnorm > 0.0);

        InferOptions iopt;
        iopt.num_steps = 2;
        iopt.global_mode = mode;
        const auto views = infer(*model, ds.samples[0].input_view, iopt, Rng(3));
        CHECK(views.size() == 6);
    }
}
