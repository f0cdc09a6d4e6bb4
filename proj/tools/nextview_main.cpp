// nextview: procedural multi-view dataset generation, autoregressive
// next-view diffusion training/inference, visual-hull reconstruction, and
// 2D/3D evaluation, driven by a JSON experiment config.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "nextview/arpipeline.hpp"
#include "nextview/config.hpp"
#include "nextview/errors.hpp"
#include "nextview/image_io.hpp"
#include "nextview/kernels.hpp"
#include "nextview/metrics.hpp"
#include "nextview/recon3d.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nextview;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> order;
    std::optional<double> alpha;
    std::optional<std::string> mode;
    std::optional<int> steps;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "experiment config JSON");
    cmd->add_option("--seed", f.seed, "override the global seed");
    cmd->add_option("--out", f.out_dir, "override the output directory");
}

config::ExperimentConfig effective_config(const CommonFlags& f, const char* steps_section) {
    auto cfg = f.config_path.empty() ? config::ExperimentConfig::defaults()
                                     : config::ExperimentConfig::load(f.config_path);
    if (f.seed) cfg.raw()["seed"] = *f.seed;
    if (f.out_dir) cfg.raw()["out_dir"] = *f.out_dir;
    if (f.order) {
        cfg.raw()["train"]["order"] = *f.order;
        cfg.raw()["infer"]["order"] = *f.order;
    }
    if (f.alpha) {
        cfg.raw()["train"]["alpha"] = *f.alpha;
        cfg.raw()["infer"]["alpha"] = *f.alpha;
    }
    if (f.mode) cfg.raw()["train"]["global_mode"] = *f.mode;
    if (f.steps && steps_section) cfg.raw()[steps_section]["steps"] = *f.steps;
    return cfg;
}

void write_config_stamp(const config::ExperimentConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.json");
    json stamped = cfg.raw();
    stamped["config_hash"] = cfg.hash();
    out << stamped.dump(2) << "\n";
}

// dataset -----------------------------------------------------------------

fs::path dataset_dir(const config::ExperimentConfig& cfg) {
    return fs::path(cfg.out_dir()) / "dataset";
}

int cmd_gen_data(const config::ExperimentConfig& cfg) {
    const auto data = cfg.data();
    synthdata::RenderConfig rc;
    rc.resolution = data.view_size;

    synthdata::Dataset ds;
    const int total = data.scenes_train + data.scenes_test;
    for (int i = 0; i < total; ++i) {
        const std::uint64_t scene_seed = data.scene_seed_offset + static_cast<std::uint64_t>(i);
        Rng rng(Rng::splitmix(cfg.seed() ^ (0x9e3779b97f4a7c15ull + scene_seed)));
        ds.samples.push_back(synthdata::make_sample(synthdata::random_scene(scene_seed), rng, rc));
        if (i < data.scenes_train)
            ds.train_indices.push_back(i);
        else
            ds.test_indices.push_back(i);
    }
    synthdata::write_dataset(ds, dataset_dir(cfg).string());
    write_config_stamp(cfg, cfg.out_dir());
    std::cout << "wrote " << total << " scenes (" << data.scenes_train << " train / "
              << data.scenes_test << " test) to " << dataset_dir(cfg) << "\n";
    return kExitOk;
}

// train ---------------------------------------------------------------------

std::unique_ptr<arpipeline::Model> fresh_model(const config::ExperimentConfig& cfg) {
    return std::make_unique<arpipeline::Model>(cfg.unet_config(), cfg.encoder_config(),
                                               cfg.schedule(), cfg.seed());
}

int cmd_train(const config::ExperimentConfig& cfg, const std::string& resume_path) {
    const auto ds = synthdata::read_dataset(dataset_dir(cfg).string());
    const auto tcfg = cfg.train_config();

    std::unique_ptr<arpipeline::Model> model;
    std::unique_ptr<arpipeline::AdamW> opt;
    int start_step = 0;
    if (!resume_path.empty()) {
        auto lc = arpipeline::load_checkpoint(resume_path);
        model = std::move(lc.model);
        opt = lc.opt ? std::move(lc.opt)
                     : std::make_unique<arpipeline::AdamW>(
                           arpipeline::AdamW::Hyper{0.9, 0.999, 1e-8, tcfg.weight_decay});
        start_step = lc.meta.step;
        std::cout << "resuming from " << resume_path << " at step " << start_step << "\n";
    } else {
        model = fresh_model(cfg);
        opt = std::make_unique<arpipeline::AdamW>(
            arpipeline::AdamW::Hyper{0.9, 0.999, 1e-8, tcfg.weight_decay});
    }

    const fs::path out(cfg.out_dir());
    fs::create_directories(out / "checkpoints");
    write_config_stamp(cfg, out);
    std::ofstream log(out / "train_log.jsonl", std::ios::app);

    arpipeline::CheckpointMeta meta;
    meta.config_hash = cfg.hash();
    meta.train_cfg = tcfg;

    const auto save = [&](int step) {
        meta.step = step;
        char name[64];
        std::snprintf(name, sizeof(name), "step_%06d.ckpt", step);
        arpipeline::save_checkpoint((out / "checkpoints" / name).string(), *model, opt.get(), meta);
        arpipeline::save_checkpoint((out / "checkpoints" / "latest.ckpt").string(), *model,
                                    opt.get(), meta);
    };

    arpipeline::train(*model, *opt, ds, tcfg, start_step, [&](int step, const arpipeline::StepStats& s) {
        log << json{{"step", step},       {"loss", s.loss},         {"t", s.t},
                    {"k", s.k},           {"grad_norm", s.grad_norm}, {"lr", s.lr},
                    {"wall_ms", now_ms()}}
                   .dump()
            << "\n";
        if ((step + 1) % tcfg.checkpoint_every == 0 || step + 1 == tcfg.steps) save(step + 1);
        if ((step + 1) % 50 == 0)
            std::cout << "step " << step + 1 << "/" << tcfg.steps << " loss " << s.loss << "\n";
    });
    if (start_step >= tcfg.steps) save(start_step);  // nothing to do; still emit a checkpoint
    std::cout << "training complete: " << tcfg.steps << " steps\n";
    return kExitOk;
}

// infer ---------------------------------------------------------------------

arpipeline::InferOptions infer_options_for(const config::ExperimentConfig& cfg,
                                           const arpipeline::CheckpointMeta& meta) {
    // the checkpoint's conditioning arm travels with the weights; order and
    // alpha come from the (possibly flag-overridden) config
    auto opt = cfg.infer_options();
    opt.local_all_refs = meta.train_cfg.local_all_refs;
    opt.global_all_refs = meta.train_cfg.global_all_refs;
    opt.global_mode = meta.train_cfg.global_mode;
    opt.resample_alpha_per_timestep = meta.train_cfg.resample_alpha_per_timestep;
    return opt;
}

int cmd_infer(const config::ExperimentConfig& cfg, const std::string& ckpt_path,
              const std::string& input_path) {
    auto lc = arpipeline::load_checkpoint(ckpt_path);
    const Image input = read_png(input_path);
    const auto opt = infer_options_for(cfg, lc.meta);

    const auto views = arpipeline::infer(*lc.model, input, opt, Rng(Rng::splitmix(cfg.seed())));

    const fs::path out = fs::path(cfg.out_dir()) / "infer";
    fs::create_directories(out);
    json meta;
    meta["config_hash"] = cfg.hash();
    meta["checkpoint"] = ckpt_path;
    meta["order"] = opt.order;
    meta["alpha"] = opt.alpha;
    json poses = json::array();
    const auto rel = poseplan::target_poses();
    for (int i = 0; i < 6; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "view_%d.png", i);
        write_png((out / name).string(), views[static_cast<std::size_t>(i)]);
        poses.push_back({{"azimuth_deg", rel[static_cast<std::size_t>(i)].azimuth_deg},
                         {"elevation_deg", rel[static_cast<std::size_t>(i)].elevation_deg},
                         {"file", name}});
    }
    meta["views"] = poses;
    write_png((out / "grid.png").string(), gridops::tile6(views));
    std::ofstream(out / "poses.json") << meta.dump(2) << "\n";
    std::cout << "wrote 6 views + grid to " << out << "\n";
    return kExitOk;
}

// eval ----------------------------------------------------------------------

struct SampleEval {
    int index = 0;
    metrics::Metric2DReport r2;
    metrics::Metric3DReport r3;
};

recon3d::PointCloud carve_cloud(const synthdata::Sample& sample, const std::vector<Image>& views,
                                const config::ExperimentConfig::EvalSection& ev,
                                std::uint64_t seed) {
    // input silhouette, re-rendered sharp; generated views at native size
    synthdata::RenderConfig rc;
    rc.resolution = ev.carve_render_resolution;
    std::vector<std::uint8_t> input_mask;
    synthdata::render_with_mask(sample.scene, sample.input_pose, rc, &input_mask);

    std::vector<recon3d::MaskedView> mviews;
    recon3d::MaskedView miv;
    miv.mask = std::move(input_mask);
    miv.resolution = ev.carve_render_resolution;
    miv.pose = sample.input_pose;
    mviews.push_back(std::move(miv));
    for (int i = 0; i < 6; ++i) {
        recon3d::MaskedView mv;
        mv.mask = recon3d::silhouette(views[static_cast<std::size_t>(i)], ev.silhouette_threshold);
        mv.resolution = views[static_cast<std::size_t>(i)].height;
        mv.pose = sample.target_poses_abs[static_cast<std::size_t>(i)];
        mviews.push_back(std::move(mv));
    }
    const auto grid = recon3d::carve(mviews, ev.carve_resolution);
    return recon3d::surface_points(grid, ev.surface_point_count, seed);
}

int cmd_eval(const config::ExperimentConfig& cfg, const std::string& ckpt_path,
             const std::string& split, bool use_gt) {
    const auto ds = synthdata::read_dataset(dataset_dir(cfg).string());
    const auto& indices = split == "train" ? ds.train_indices : ds.test_indices;
    if (indices.empty()) throw DataError("eval: split '" + split + "' is empty");
    const auto ev = cfg.eval();

    std::unique_ptr<arpipeline::Model> model;
    arpipeline::InferOptions iopt;
    if (!use_gt) {
        auto lc = arpipeline::load_checkpoint(ckpt_path);
        iopt = infer_options_for(cfg, lc.meta);
        model = std::move(lc.model);
    } else {
        model = fresh_model(cfg);  // encoder weights only feed feature_sim
    }

    const fs::path out = fs::path(cfg.out_dir()) / "eval";
    fs::create_directories(out);
    const std::string tag = use_gt ? split + "_gt" : split;
    std::ofstream jsonl(out / ("report_" + tag + ".jsonl"));
    std::ofstream csv(out / ("report_" + tag + ".csv"));
    csv << "sample,psnr,ssim,feature_sim,lpips,chamfer,fscore_tau,fscore_tau_extra\n";

    std::vector<SampleEval> rows;
    for (int idx : indices) {
        const auto& sample = ds.samples[static_cast<std::size_t>(idx)];
        std::vector<Image> views;
        if (use_gt) {
            views = sample.target_views;
        } else {
            views = arpipeline::infer(*model, sample.input_view, iopt,
                                      Rng(Rng::splitmix(cfg.seed() ^ static_cast<std::uint64_t>(idx))));
        }
        const auto gt_cloud = recon3d::gt_surface_points(sample.scene, ev.surface_point_count,
                                                         cfg.seed() ^ 0xabcd01ull ^ idx);
        const auto recon_cloud =
            use_gt ? gt_cloud
                   : carve_cloud(sample, views, ev, cfg.seed() ^ 0xfeed02ull ^ idx);
        SampleEval se;
        se.index = idx;
        std::tie(se.r2, se.r3) = metrics::evaluate_sample(views, sample.target_views, recon_cloud,
                                                          gt_cloud, *model->encoder, ev.fscore_tau,
                                                          ev.fscore_tau_extra);
        rows.push_back(se);

        // chamfer form: unsquared bidirectional mean of means (stated in the
        // header so the numbers are self-describing)
        jsonl << json{{"sample", idx},
                      {"psnr", se.r2.mean_psnr},
                      {"ssim", se.r2.mean_ssim},
                      {"feature_sim", se.r2.mean_feature_sim},
                      {"lpips", nullptr},  // reserved; needs a pretrained perceptual net
                      {"chamfer", se.r3.chamfer},
                      {"chamfer_form", "unsquared-bidirectional-mean"},
                      {"fscore_tau", se.r3.fscore_tau},
                      {"fscore_tau_extra", se.r3.fscore_tau_extra},
                      {"tau", se.r3.tau},
                      {"tau_extra", se.r3.tau_extra},
                      {"config_hash", cfg.hash()}}
                     .dump()
              << "\n";
        csv << idx << "," << se.r2.mean_psnr << "," << se.r2.mean_ssim << ","
            << se.r2.mean_feature_sim << ",," << se.r3.chamfer << "," << se.r3.fscore_tau << ","
            << se.r3.fscore_tau_extra << "\n";
    }

    json agg;
    double psnr = 0, ssim = 0, feat = 0, cd = 0, f1 = 0, f2 = 0;
    for (const auto& r : rows) {
        psnr += r.r2.mean_psnr;
        ssim += r.r2.mean_ssim;
        feat += r.r2.mean_feature_sim;
        cd += r.r3.chamfer;
        f1 += r.r3.fscore_tau;
        f2 += r.r3.fscore_tau_extra;
    }
    const double n = static_cast<double>(rows.size());
    agg = {{"split", split},       {"samples", rows.size()},  {"psnr", psnr / n},
           {"ssim", ssim / n},     {"feature_sim", feat / n}, {"lpips", nullptr},
           {"chamfer", cd / n},    {"fscore_tau", f1 / n},    {"fscore_tau_extra", f2 / n},
           {"config_hash", cfg.hash()}};
    std::ofstream(out / ("aggregate_" + tag + ".json")) << agg.dump(2) << "\n";
    std::cout << "eval " << split << " (" << rows.size() << " samples): PSNR " << psnr / n
              << " dB, SSIM " << ssim / n << ", feat " << feat / n << ", CD " << cd / n
              << ", F@" << ev.fscore_tau << " " << f1 / n << ", F@" << ev.fscore_tau_extra << " "
              << f2 / n << "\n";
    return kExitOk;
}

// ablate ----------------------------------------------------------------

int cmd_ablate(const config::ExperimentConfig& cfg) {
    const auto ds = synthdata::read_dataset(dataset_dir(cfg).string());
    if (ds.test_indices.empty()) throw DataError("ablate: dataset has no test split");
    const auto ab = cfg.ablation();
    const auto ev = cfg.eval();
    const fs::path out = fs::path(cfg.out_dir()) / "ablation";
    fs::create_directories(out);

    std::vector<int> eval_idx(ds.test_indices.begin(),
                              ds.test_indices.begin() +
                                  std::min<std::size_t>(ds.test_indices.size(),
                                                        static_cast<std::size_t>(ab.eval_samples)));

    std::ofstream csv(out / "table.csv");
    csv << "arm,order,alpha,config_hash,psnr,ssim,feature_sim,chamfer,fscore_tau,fscore_tau_extra\n";
    json table = json::array();

    for (const auto& arm : ab.arms) {
        for (const auto& order : ab.orders) {
            // one checkpoint per (arm, order); the alpha sweep reuses the
            // trained weights train-free
            auto arm_cfg = cfg;
            arm_cfg.raw()["train"]["arm"] = arm;
            arm_cfg.raw()["train"]["order"] = order;
            arm_cfg.raw()["train"]["steps"] = ab.steps;
            arm_cfg.raw()["infer"]["order"] = order;
            const auto tcfg = arm_cfg.train_config();

            auto model = std::make_unique<arpipeline::Model>(
                arm_cfg.unet_config(), arm_cfg.encoder_config(), arm_cfg.schedule(),
                arm_cfg.seed() ^ std::hash<std::string>{}(arm + order));
            arpipeline::AdamW opt(arpipeline::AdamW::Hyper{0.9, 0.999, 1e-8, tcfg.weight_decay});
            arpipeline::train(*model, opt, ds, tcfg, 0, nullptr);

            arpipeline::CheckpointMeta meta;
            meta.step = tcfg.steps;
            meta.config_hash = arm_cfg.hash();
            meta.train_cfg = tcfg;
            arpipeline::save_checkpoint((out / (arm + "_" + order + ".ckpt")).string(), *model,
                                        nullptr, meta);

            for (double alpha : ab.alphas) {
                auto iopt = infer_options_for(arm_cfg, meta);
                iopt.alpha = alpha;
                double psnr = 0, ssim = 0, feat = 0, cd = 0, f1 = 0, f2 = 0;
                for (int idx : eval_idx) {
                    const auto& sample = ds.samples[static_cast<std::size_t>(idx)];
                    const auto views = arpipeline::infer(
                        *model, sample.input_view, iopt,
                        Rng(Rng::splitmix(arm_cfg.seed() ^ static_cast<std::uint64_t>(idx))));
                    const auto gt_cloud = recon3d::gt_surface_points(
                        sample.scene, ev.surface_point_count, arm_cfg.seed() ^ 0xabcd01ull ^ idx);
                    const auto recon_cloud =
                        carve_cloud(sample, views, ev, arm_cfg.seed() ^ 0xfeed02ull ^ idx);
                    const auto [r2, r3] = metrics::evaluate_sample(
                        views, sample.target_views, recon_cloud, gt_cloud, *model->encoder,
                        ev.fscore_tau, ev.fscore_tau_extra);
                    psnr += r2.mean_psnr;
                    ssim += r2.mean_ssim;
                    feat += r2.mean_feature_sim;
                    cd += r3.chamfer;
                    f1 += r3.fscore_tau;
                    f2 += r3.fscore_tau_extra;
                }
                const double n = static_cast<double>(eval_idx.size());
                csv << arm << "," << order << "," << alpha << "," << arm_cfg.hash() << ","
                    << psnr / n << "," << ssim / n << "," << feat / n << "," << cd / n << ","
                    << f1 / n << "," << f2 / n << "\n";
                csv.flush();
                table.push_back({{"arm", arm},
                                 {"order", order},
                                 {"alpha", alpha},
                                 {"config_hash", arm_cfg.hash()},
                                 {"psnr", psnr / n},
                                 {"ssim", ssim / n},
                                 {"feature_sim", feat / n},
                                 {"chamfer", cd / n},
                                 {"fscore_tau", f1 / n},
                                 {"fscore_tau_extra", f2 / n}});
                std::cout << "ablate arm=" << arm << " order=" << order << " alpha=" << alpha
                          << ": PSNR " << psnr / n << "\n";
            }
        }
    }
    std::ofstream(out / "table.json") << table.dump(2) << "\n";
    std::cout << "ablation table written to " << (out / "table.csv") << "\n";
    return kExitOk;
}

// report --------------------------------------------------------------------

int cmd_report(const config::ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir());
    bool printed = false;
    for (const auto& split : {"test", "train", "test_gt", "train_gt"}) {
        const fs::path agg = out / "eval" / ("aggregate_" + std::string(split) + ".json");
        if (!fs::exists(agg)) continue;
        json j;
        std::ifstream(agg) >> j;
        std::cout << "== eval (" << split << ", " << j.at("samples").get<int>()
                  << " samples, config " << j.at("config_hash").get<std::string>() << ")\n";
        std::cout << "  PSNR " << j.at("psnr").get<double>() << " dB | SSIM "
                  << j.at("ssim").get<double>() << " | feature-sim "
                  << j.at("feature_sim").get<double>() << " | LPIPS n/a\n";
        std::cout << "  chamfer " << j.at("chamfer").get<double>() << " | F@tau "
                  << j.at("fscore_tau").get<double>() << " | F@tau' "
                  << j.at("fscore_tau_extra").get<double>() << "\n";
        printed = true;
    }
    const fs::path tbl = out / "ablation" / "table.json";
    if (fs::exists(tbl)) {
        json t;
        std::ifstream(tbl) >> t;
        std::cout << "== ablation (" << t.size() << " rows)\n";
        std::printf("  %-10s %-8s %-6s %-10s %-8s %-8s\n", "arm", "order", "alpha", "psnr", "ssim",
                    "chamfer");
        for (const auto& row : t)
            std::printf("  %-10s %-8s %-6.2f %-10.4f %-8.4f %-8.4f\n",
                        row.at("arm").get<std::string>().c_str(),
                        row.at("order").get<std::string>().c_str(), row.at("alpha").get<double>(),
                        row.at("psnr").get<double>(), row.at("ssim").get<double>(),
                        row.at("chamfer").get<double>());
        printed = true;
    }
    if (!printed) throw DataError("report: no eval or ablation outputs under " + out.string());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nextview: autoregressive next-view diffusion at desk scale"};
    app.require_subcommand(1);

    CommonFlags fl;
    std::string checkpoint, input_path, split = "test";
    bool use_gt = false;
    std::optional<int> scenes_train, scenes_test;

    auto* gen = app.add_subcommand("gen-data", "render the procedural dataset");
    add_common(gen, fl);
    gen->add_option("--scenes-train", scenes_train, "override train scene count");
    gen->add_option("--scenes-test", scenes_test, "override test scene count");

    auto* train = app.add_subcommand("train", "train the denoiser");
    add_common(train, fl);
    train->add_option("--checkpoint", checkpoint, "resume from this checkpoint");
    train->add_option("--steps", fl.steps, "override train.steps");
    train->add_option("--order", fl.order, "sequence order: normal|reverse|random");
    train->add_option("--alpha", fl.alpha, "reference-token sampling proportion");
    train->add_option("--mode", fl.mode, "global conditioning: lstm_ge|matmul|none");

    auto* infer = app.add_subcommand("infer", "generate the six views for one input image");
    add_common(infer, fl);
    infer->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    infer->add_option("--input", input_path, "input view PNG")->required();
    infer->add_option("--order", fl.order, "sequence order: normal|reverse|random");
    infer->add_option("--alpha", fl.alpha, "reference-token sampling proportion");

    auto* eval = app.add_subcommand("eval", "2D/3D evaluation over a dataset split");
    add_common(eval, fl);
    eval->add_option("--checkpoint", checkpoint, "trained checkpoint");
    eval->add_option("--split", split, "test|train");
    eval->add_flag("--use-gt", use_gt, "evaluate ground truth against itself (harness check)");
    eval->add_option("--alpha", fl.alpha, "reference-token sampling proportion");
    eval->add_option("--order", fl.order, "sequence order override");

    auto* ablate = app.add_subcommand("ablate", "arms x orders x alpha comparison table");
    add_common(ablate, fl);
    ablate->add_option("--steps", fl.steps, "override ablation.steps");

    auto* report = app.add_subcommand("report", "print tables from earlier eval/ablate runs");
    add_common(report, fl);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            auto cfg = effective_config(fl, nullptr);
            if (scenes_train) cfg.raw()["data"]["scenes_train"] = *scenes_train;
            if (scenes_test) cfg.raw()["data"]["scenes_test"] = *scenes_test;
            return cmd_gen_data(cfg);
        }
        if (train->parsed()) return cmd_train(effective_config(fl, "train"), checkpoint);
        if (infer->parsed()) return cmd_infer(effective_config(fl, nullptr), checkpoint, input_path);
        if (eval->parsed()) {
            if (split != "test" && split != "train") {
                std::cerr << "eval: --split must be test or train\n";
                return kExitUsage;
            }
            if (!use_gt && checkpoint.empty()) {
                std::cerr << "eval: --checkpoint required unless --use-gt\n";
                return kExitUsage;
            }
            return cmd_eval(effective_config(fl, nullptr), checkpoint, split, use_gt);
        }
        if (ablate->parsed()) return cmd_ablate(effective_config(fl, "ablation"));
        if (report->parsed()) return cmd_report(effective_config(fl, nullptr));
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
