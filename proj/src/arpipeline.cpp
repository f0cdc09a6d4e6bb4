#include "nextview/arpipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nextview/errors.hpp"

namespace nextview::arpipeline {

using ag::Ref;
using nlohmann::json;

Model::Model(denoiser::UNetConfig ucfg, conditioning::EncoderConfig ecfg,
             diffusion::NoiseSchedule sched, std::uint64_t init_seed)
    : unet_cfg(std::move(ucfg)), enc_cfg(ecfg), schedule(std::move(sched)) {
    if (enc_cfg.out_dim != unet_cfg.context_dim)
        throw std::invalid_argument("Model: encoder out_dim must equal UNet context_dim");
    Rng init_rng(Rng::splitmix(init_seed ^ 0xd1ff0510a7b3c9e5ull));
    unet = std::make_unique<denoiser::UNet>(unet_cfg, params, init_rng, "unet.");
    encoder = std::make_unique<conditioning::GlobalEncoder>(enc_cfg, params, init_rng, "enc.");
    lstm_ge = std::make_unique<conditioning::LstmGe>(unet_cfg.context_dim,
                                                     unet_cfg.context_tokens, params, init_rng,
                                                     "ge.");
}

void AdamW::step(ParamStore& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, t_);
    const double bc2 = 1.0 - std::pow(hyper_.beta2, t_);
    for (auto& [name, ref] : params.items()) {
        if (ref->grad.numel() != ref->value.numel()) continue;  // unused parameter this step
        auto& [m, v] = state_[name];
        if (m.numel() != ref->value.numel()) {
            m = Tensor(ref->value.dims);
            v = Tensor(ref->value.dims);
        }
        for (std::size_t i = 0; i < ref->value.data.size(); ++i) {
            const double g = ref->grad.data[i];
            m.data[i] = hyper_.beta1 * m.data[i] + (1.0 - hyper_.beta1) * g;
            v.data[i] = hyper_.beta2 * v.data[i] + (1.0 - hyper_.beta2) * g * g;
            const double mh = m.data[i] / bc1;
            const double vh = v.data[i] / bc2;
            ref->value.data[i] -=
                lr * (mh / (std::sqrt(vh) + hyper_.eps) + hyper_.weight_decay * ref->value.data[i]);
        }
    }
}

double cosine_restart_lr(const TrainConfig& cfg, int step) {
    const int period = std::max(1, cfg.lr_restart_period);
    const double frac = static_cast<double>(step % period) / period;
    const double lr_min = cfg.lr * cfg.lr_min_frac;
    return lr_min + 0.5 * (cfg.lr - lr_min) * (1.0 + std::cos(M_PI * frac));
}

namespace {

poseplan::SequenceOrder parse_order(const std::string& s) {
    if (s == "normal") return poseplan::make_order(poseplan::OrderTag::Normal);
    if (s == "reverse") return poseplan::make_order(poseplan::OrderTag::Reverse);
    if (s == "random") return poseplan::make_order(poseplan::OrderTag::Random);
    throw std::invalid_argument("unknown sequence order: " + s);
}

int draw_resize_side(Rng& rng, const TrainConfig& cfg) {
    // multiples of 4 so the UNet's two downsamplings stay exact
    const int lo = std::max(1, cfg.resize_min / 4);
    const int hi = std::max(lo, cfg.resize_max / 4);
    return 4 * rng.uniform_int(lo, hi);
}

Tensor stack_images_signed(const std::vector<Image>& imgs) {
    const int B = static_cast<int>(imgs.size());
    const int H = imgs[0].height, W = imgs[0].width;
    Tensor out({B, 3, H, W});
    for (int b = 0; b < B; ++b) {
        const Tensor t = image_to_tensor(imgs[b], /*to_signed=*/true);
        std::copy(t.data.begin(), t.data.end(),
                  out.data.begin() + static_cast<std::int64_t>(b) * 3 * H * W);
    }
    return out;
}

Tensor draw_normal(Rng& rng, std::vector<int> dims) {
    Tensor t(std::move(dims));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

Ref global_condition(Model& m, const std::vector<std::vector<Image>>& cond_views,
                     const std::vector<double>& elevations, bool all_refs,
                     const std::string& mode) {
    const int B = static_cast<int>(cond_views[0].size());
    const int M = m.unet_cfg.context_tokens, D = m.unet_cfg.context_dim;
    if (mode == "none") return ag::constant(Tensor({B, M, D}));
    const std::size_t n = all_refs ? cond_views.size() : 1;
    const std::vector<std::vector<Image>> views(cond_views.begin(), cond_views.begin() + n);
    const Ref features = conditioning::encode_globals(*m.encoder, views);
    if (mode == "matmul") return m.lstm_ge->matmul_variant(features);
    if (mode != "lstm_ge") throw std::invalid_argument("unknown global_mode: " + mode);
    const std::vector<double> elevs(elevations.begin(), elevations.begin() + n);
    const auto groups = conditioning::partition(features, elevs);
    const Ref i0 = m.lstm_ge->lstm_encode(0, groups.f1);
    const Ref i1 = m.lstm_ge->lstm_encode(1, groups.f2);
    return m.lstm_ge->fuse(i0, i1);
}

struct ForwardLoss {
    Ref loss;
    int t = 0;
};

ForwardLoss forward_loss(Model& m, const TrainExample& ex, Rng& rng, const TrainConfig& cfg) {
    for (const auto p : ex.condition_provenance)
        if (p != Provenance::GroundTruth)
            throw std::logic_error("train: conditions must be ground-truth renders");
    const int B = static_cast<int>(ex.target_rows.size());
    const int V = ex.target_rows[0].height;

    const int t = rng.uniform_int(1, m.schedule.T);
    const Tensor x0 = stack_images_signed(ex.target_rows);
    const Tensor eps = draw_normal(rng, {B, 3, V, 2 * V});
    const Tensor x_t = diffusion::add_noise(x0, t, eps, m.schedule);

    const Ref cond =
        global_condition(m, ex.condition_views, ex.condition_elevations, cfg.global_all_refs,
                         cfg.global_mode);

    const std::size_t n_local = cfg.local_all_refs ? ex.condition_views.size() : 1;
    std::vector<denoiser::ReferenceCache> caches;
    caches.reserve(n_local);
    for (std::size_t j = 0; j < n_local; ++j) {
        const Tensor imgs = stack_images_signed(ex.condition_views[j]);
        const Tensor eps_j = draw_normal(rng, {B, 3, imgs.dim(2), imgs.dim(3)});
        caches.push_back(denoiser::forward_record(*m.unet, imgs, t, eps_j, cond, m.schedule));
    }
    Rng alpha_rng = rng.fork("alpha");
    const auto merged = conditioning::merge_reference_caches(caches, cfg.alpha, alpha_rng);

    const Ref v_hat = denoiser::forward_denoise(*m.unet, x_t, t, cond, &merged);
    const Tensor v = diffusion::v_target(x0, eps, t, m.schedule);
    return {ag::mse(v_hat, ag::constant(v)), t};
}

}  // namespace

TrainExample build_example_batch(const std::vector<const synthdata::Sample*>& batch, int k,
                                 int resize_side, const TrainConfig& cfg) {
    if (k < 1 || k > 3) throw std::invalid_argument("build_example: k must be in {1,2,3}");
    if (batch.empty()) throw std::invalid_argument("build_example: empty batch");
    const auto perm = poseplan::reorder(parse_order(cfg.order));
    const int V = cfg.view_size;

    TrainExample ex;
    ex.k = k;
    ex.resize_side = resize_side;

    auto add_position = [&](auto&& image_of_sample, double elevation) {
        std::vector<Image> views;
        views.reserve(batch.size());
        for (const auto* s : batch)
            views.push_back(resize_bilinear(image_of_sample(*s), resize_side, resize_side));
        ex.condition_views.push_back(std::move(views));
        ex.condition_elevations.push_back(elevation);
        ex.condition_provenance.push_back(Provenance::GroundTruth);
    };

    add_position([](const synthdata::Sample& s) -> const Image& { return s.input_view; }, 0.0);
    for (int step = 1; step < k; ++step) {
        const int row = perm[static_cast<std::size_t>(step - 1)];  // canonical row id
        const int base = 2 * (row - 1);
        add_position([base](const synthdata::Sample& s) -> const Image& {
            return s.target_views[static_cast<std::size_t>(base)];
        }, 20.0);
        add_position([base](const synthdata::Sample& s) -> const Image& {
            return s.target_views[static_cast<std::size_t>(base + 1)];
        }, -10.0);
    }

    const int target_row = perm[static_cast<std::size_t>(k - 1)];
    const int tbase = 2 * (target_row - 1);
    for (const auto* s : batch) {
        Image left = s->target_views[static_cast<std::size_t>(tbase)];
        Image right = s->target_views[static_cast<std::size_t>(tbase + 1)];
        if (left.height != V) left = resize_bilinear(left, V, V);
        if (right.height != V) right = resize_bilinear(right, V, V);
        ex.target_rows.push_back(gridops::tile_row(left, right));
    }
    return ex;
}

TrainExample build_example(const synthdata::Sample& sample, int k, Rng& rng,
                           const TrainConfig& cfg) {
    const int side = draw_resize_side(rng, cfg);
    return build_example_batch({&sample}, k, side, cfg);
}

double loss_and_gradients(Model& model, const TrainExample& ex, Rng& step_rng,
                          const TrainConfig& cfg) {
    auto fl = forward_loss(model, ex, step_rng, cfg);
    const double loss = fl.loss->value.data[0];
    if (!std::isfinite(loss))
        throw NumericError("non-finite loss (t=" + std::to_string(fl.t) +
                           ", k=" + std::to_string(ex.k) + ")");
    model.params.zero_grad();
    ag::backward(fl.loss);
    return loss;
}

StepStats train_step(Model& model, AdamW& opt, const TrainExample& ex, double lr_now,
                     Rng& step_rng, const TrainConfig& cfg) {
    auto fl = forward_loss(model, ex, step_rng, cfg);
    StepStats stats;
    stats.loss = fl.loss->value.data[0];
    stats.t = fl.t;
    stats.k = ex.k;
    stats.lr = lr_now;
    if (!std::isfinite(stats.loss))
        throw NumericError("non-finite loss (t=" + std::to_string(stats.t) +
                           ", k=" + std::to_string(ex.k) + ")");
    model.params.zero_grad();
    ag::backward(fl.loss);
    stats.grad_norm = model.params.grad_norm();
    if (!std::isfinite(stats.grad_norm))
        throw NumericError("non-finite gradient norm (t=" + std::to_string(stats.t) +
                           ", k=" + std::to_string(ex.k) +
                           ", loss=" + std::to_string(stats.loss) + ")");
    opt.step(model.params, lr_now);
    return stats;
}

Rng step_rng_for(std::uint64_t seed, int step) {
    return Rng(Rng::splitmix(seed ^ (0x7261696e00ull + static_cast<std::uint64_t>(step))));
}

void train(Model& model, AdamW& opt, const synthdata::Dataset& ds, const TrainConfig& cfg,
           int start_step, const StepCallback& on_step) {
    if (ds.train_indices.empty()) throw DataError("train: dataset has no train split");
    for (int step = start_step; step < cfg.steps; ++step) {
        Rng rng = step_rng_for(cfg.seed, step);
        const int k = rng.uniform_int(1, 3);
        const int side = draw_resize_side(rng, cfg);
        std::vector<const synthdata::Sample*> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int idx = ds.train_indices[static_cast<std::size_t>(
                rng.uniform_index(ds.train_indices.size()))];
            batch.push_back(&ds.samples[static_cast<std::size_t>(idx)]);
        }
        const TrainExample ex = build_example_batch(batch, k, side, cfg);
        const double lr = cosine_restart_lr(cfg, step);
        const StepStats stats = train_step(model, opt, ex, lr, rng, cfg);
        if (on_step) on_step(step, stats);
    }
}

std::vector<Image> infer(Model& model, const Image& input_view, const InferOptions& opt, Rng rng) {
    if (input_view.height != input_view.width)
        throw std::invalid_argument("infer: input view must be square");
    const int V = input_view.height;
    const auto perm = poseplan::reorder(parse_order(opt.order));

    std::vector<Image> generated;  // generation order
    std::vector<Provenance> provenance{Provenance::GroundTruth};

    for (int k = 1; k <= 3; ++k) {
        std::vector<std::vector<Image>> cond{{input_view}};
        std::vector<double> elevations{0.0};
        for (std::size_t g = 0; g < generated.size(); ++g) {
            cond.push_back({generated[g]});
            elevations.push_back(g % 2 == 0 ? 20.0 : -10.0);
        }
        if (provenance.size() != cond.size() ||
            std::count(provenance.begin() + 1, provenance.end(), Provenance::Generated) !=
                static_cast<long>(cond.size() - 1))
            throw std::logic_error("infer: non-input conditions must be model outputs");
        const std::size_t n_local = opt.local_all_refs ? cond.size() : 1;

        const Ref cond_T =
            global_condition(model, cond, elevations, opt.global_all_refs, opt.global_mode);

        Rng cond_noise = rng.fork("cond.step" + std::to_string(k));
        Rng alpha_rng = rng.fork("alpha.step" + std::to_string(k));
        std::optional<std::vector<std::vector<std::vector<int>>>> idx;

        auto model_fn = [&](const Tensor& x_t, int t) -> Tensor {
            std::vector<denoiser::ReferenceCache> caches;
            for (std::size_t j = 0; j < n_local; ++j) {
                const Tensor imgs = stack_images_signed(cond[j]);
                const Tensor eps = draw_normal(cond_noise, {1, 3, imgs.dim(2), imgs.dim(3)});
                caches.push_back(
                    denoiser::forward_record(*model.unet, imgs, t, eps, cond_T, model.schedule));
            }
            if (opt.resample_alpha_per_timestep || !idx)
                idx = conditioning::draw_alpha_indices(caches, opt.alpha, alpha_rng);
            const auto merged = conditioning::merge_with_indices(caches, opt.alpha, *idx);
            const Ref v = denoiser::forward_denoise(*model.unet, x_t, t, cond_T, &merged);
            return v->value;
        };

        diffusion::SamplerOptions so;
        so.num_steps = opt.num_steps;
        so.stochastic = opt.stochastic;
        Rng sample_rng = rng.fork("sample.step" + std::to_string(k));
        const Tensor row =
            diffusion::sample(model_fn, {1, 3, V, 2 * V}, model.schedule, so, sample_rng);

        const Image row_img = tensor_to_image(Tensor({3, V, 2 * V}, row.data), /*from_signed=*/true);
        auto [left, right] = gridops::split_row(row_img);
        generated.push_back(std::move(left));
        generated.push_back(std::move(right));
        provenance.push_back(Provenance::Generated);
        provenance.push_back(Provenance::Generated);
    }

    std::vector<Image> canonical(6);
    for (int i = 0; i < 3; ++i) {
        const int row = perm[static_cast<std::size_t>(i)];
        canonical[static_cast<std::size_t>(2 * (row - 1))] = generated[static_cast<std::size_t>(2 * i)];
        canonical[static_cast<std::size_t>(2 * (row - 1) + 1)] =
            generated[static_cast<std::size_t>(2 * i + 1)];
    }
    return canonical;
}

// checkpoint I/O ---------------------------------------------------------

namespace {
json unet_cfg_to_json(const denoiser::UNetConfig& c) {
    return {{"in_channels", c.in_channels},
            {"base_channels", c.base_channels},
            {"channel_mult", c.channel_mult},
            {"attn_levels", c.attn_levels},
            {"middle_attention", c.middle_attention},
            {"heads", c.heads},
            {"norm_groups", c.norm_groups},
            {"context_dim", c.context_dim},
            {"context_tokens", c.context_tokens},
            {"time_embed_dim", c.time_embed_dim}};
}

denoiser::UNetConfig unet_cfg_from_json(const json& j) {
    denoiser::UNetConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.channel_mult = j.at("channel_mult").get<std::vector<int>>();
    c.attn_levels = j.at("attn_levels").get<std::vector<int>>();
    c.middle_attention = j.at("middle_attention").get<bool>();
    c.heads = j.at("heads").get<int>();
    c.norm_groups = j.at("norm_groups").get<int>();
    c.context_dim = j.at("context_dim").get<int>();
    c.context_tokens = j.at("context_tokens").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    return c;
}

json train_cfg_to_json(const TrainConfig& c) {
    return {{"steps", c.steps},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"lr_min_frac", c.lr_min_frac},
            {"lr_restart_period", c.lr_restart_period},
            {"weight_decay", c.weight_decay},
            {"seed", c.seed},
            {"resize_min", c.resize_min},
            {"resize_max", c.resize_max},
            {"view_size", c.view_size},
            {"alpha", c.alpha},
            {"resample_alpha_per_timestep", c.resample_alpha_per_timestep},
            {"checkpoint_every", c.checkpoint_every},
            {"local_all_refs", c.local_all_refs},
            {"global_all_refs", c.global_all_refs},
            {"global_mode", c.global_mode},
            {"order", c.order}};
}

TrainConfig train_cfg_from_json(const json& j) {
    TrainConfig c;
    c.steps = j.at("steps").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.lr_min_frac = j.at("lr_min_frac").get<double>();
    c.lr_restart_period = j.at("lr_restart_period").get<int>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.resize_min = j.at("resize_min").get<int>();
    c.resize_max = j.at("resize_max").get<int>();
    c.view_size = j.at("view_size").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.resample_alpha_per_timestep = j.at("resample_alpha_per_timestep").get<bool>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    c.local_all_refs = j.at("local_all_refs").get<bool>();
    c.global_all_refs = j.at("global_all_refs").get<bool>();
    c.global_mode = j.at("global_mode").get<std::string>();
    c.order = j.at("order").get<std::string>();
    return c;
}

constexpr char kMagic[8] = {'N', 'V', 'C', 'K', '0', '0', '0', '1'};

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated parameter data");
}
}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const AdamW* opt,
                     const CheckpointMeta& meta) {
    json header;
    header["format_version"] = 1;
    header["step"] = meta.step;
    header["config_hash"] = meta.config_hash;
    header["unet"] = unet_cfg_to_json(model.unet_cfg);
    header["encoder"] = {{"input_size", model.enc_cfg.input_size},
                         {"base_channels", model.enc_cfg.base_channels},
                         {"out_dim", model.enc_cfg.out_dim}};
    header["schedule"] = {{"T", model.schedule.T},
                          {"beta_start", model.schedule.beta_start},
                          {"beta_end", model.schedule.beta_end}};
    header["train"] = train_cfg_to_json(meta.train_cfg);
    json plist = json::array();
    for (const auto& [name, ref] : model.params.items())
        plist.push_back({{"name", name}, {"dims", ref->value.dims}});
    header["params"] = std::move(plist);
    header["adam"] = opt ? json{{"present", true}, {"t", opt->t()}} : json{{"present", false}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
    const std::string h = header.dump();
    out.write(kMagic, 8);
    const std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, ref] : model.params.items()) write_doubles(out, ref->value.data);
    if (opt) {
        for (const auto& [name, ref] : model.params.items()) {
            auto it = opt->state().find(name);
            if (it == opt->state().end()) {
                const std::vector<double> zero(ref->value.data.size(), 0.0);
                write_doubles(out, zero);
                write_doubles(out, zero);
            } else {
                write_doubles(out, it->second.first.data);
                write_doubles(out, it->second.second.data);
            }
        }
    }
    if (!out) throw DataError("checkpoint: write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("checkpoint: truncated header in " + path);
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: header parse error: ") + e.what());
    }
    if (header.at("format_version").get<int>() != 1)
        throw DataError("checkpoint: unsupported format version");

    LoadedCheckpoint lc;
    lc.meta.step = header.at("step").get<int>();
    lc.meta.config_hash = header.at("config_hash").get<std::string>();
    lc.meta.train_cfg = train_cfg_from_json(header.at("train"));

    const auto ucfg = unet_cfg_from_json(header.at("unet"));
    conditioning::EncoderConfig ecfg;
    ecfg.input_size = header.at("encoder").at("input_size").get<int>();
    ecfg.base_channels = header.at("encoder").at("base_channels").get<int>();
    ecfg.out_dim = header.at("encoder").at("out_dim").get<int>();
    const auto sched = diffusion::linear_schedule(header.at("schedule").at("T").get<int>(),
                                                  header.at("schedule").at("beta_start").get<double>(),
                                                  header.at("schedule").at("beta_end").get<double>());
    lc.model = std::make_unique<Model>(ucfg, ecfg, sched, /*init_seed=*/0);

    const json& plist = header.at("params");
    const auto& items = lc.model->params.items();
    if (plist.size() != items.size())
        throw DataError("checkpoint: parameter count mismatch (file " +
                        std::to_string(plist.size()) + ", model " + std::to_string(items.size()) +
                        ")");
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (plist[i].at("name").get<std::string>() != items[i].first)
            throw DataError("checkpoint: parameter name mismatch at index " + std::to_string(i));
        if (plist[i].at("dims").get<std::vector<int>>() != items[i].second->value.dims)
            throw DataError("checkpoint: parameter shape mismatch for " + items[i].first);
    }
    for (const auto& [name, ref] : items) read_doubles(in, ref->value.data);

    if (header.at("adam").at("present").get<bool>()) {
        lc.opt = std::make_unique<AdamW>();
        lc.opt->set_t(header.at("adam").at("t").get<int>());
        for (const auto& [name, ref] : items) {
            Tensor m(ref->value.dims), v(ref->value.dims);
            read_doubles(in, m.data);
            read_doubles(in, v.data);
            lc.opt->state()[name] = {std::move(m), std::move(v)};
        }
    }
    return lc;
}

}  // namespace nextview::arpipeline
