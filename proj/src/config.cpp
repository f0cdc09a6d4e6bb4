#include "nextview/config.hpp"

#include <fstream>

#include "nextview/errors.hpp"

namespace nextview::config {

using nlohmann::json;

namespace {
json default_json() {
    return json{
        {"seed", 0},
        {"out_dir", "runs/default"},
        {"data",
         {{"scenes_train", 200}, {"scenes_test", 20}, {"view_size", 32}, {"scene_seed_offset", 0}}},
        {"model",
         {{"base_channels", 16},
          {"channel_mult", {1, 2, 2}},
          {"attn_levels", {2}},
          {"middle_attention", true},
          {"heads", 2},
          {"norm_groups", 8},
          {"context_dim", 64},
          {"context_tokens", 8},
          {"time_embed_dim", 64},
          {"encoder_input", 32},
          {"encoder_base_channels", 16}}},
        {"diffusion",
         {{"timesteps", diffusion::kDefaultSteps},
          {"beta_start", diffusion::kDefaultBetaStart},
          {"beta_end", diffusion::kDefaultBetaEnd}}},
        {"train",
         {{"steps", 2000},
          {"batch_size", 2},
          {"lr", 2e-4},
          {"lr_min_frac", 0.1},
          {"lr_restart_period", 1000},
          {"weight_decay", 1e-4},
          {"resize_min", 16},
          {"resize_max", 64},
          {"checkpoint_every", 500},
          {"alpha", 1.0},
          {"resample_alpha_per_timestep", false},
          {"arm", "both"},
          {"global_mode", "lstm_ge"},
          {"order", "normal"}}},
        {"infer",
         {{"num_steps", 16}, {"alpha", 1.0}, {"order", "normal"}, {"stochastic", false}}},
        {"ablation",
         {{"arms", {"baseline", "stacked_le", "lstm_ge", "both"}},
          {"orders", {"normal", "reverse", "random"}},
          {"alphas", {0.0, 0.3, 1.0}},
          {"steps", 800},
          {"eval_samples", 8}}},
        {"eval",
         {{"carve_resolution", 64},
          {"carve_render_resolution", 160},
          {"silhouette_threshold", 0.05},
          {"surface_point_count", 16384},
          {"fscore_tau", 0.02},
          {"fscore_tau_extra", 0.05}}}};
}

void merge_checked(json& base, const json& user, const std::string& path) {
    if (!user.is_object())
        throw DataError("config: expected object at '" + (path.empty() ? "<root>" : path) + "'");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string where = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw DataError("config: unknown key '" + where + "'");
        if (base[it.key()].is_object() && !base[it.key()].empty())
            merge_checked(base[it.key()], it.value(), where);
        else
            base[it.key()] = it.value();
    }
}
}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.j_ = default_json();
    return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& overrides) {
    ExperimentConfig c;
    c.j_ = default_json();
    merge_checked(c.j_, overrides, "");
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path);
    json user;
    try {
        in >> user;
    } catch (const json::exception& e) {
        throw DataError("config: parse error in " + path + ": " + e.what());
    }
    return from_json(user);
}

std::string ExperimentConfig::hash() const {
    const std::string s = j_.dump();  // nlohmann orders object keys, so this is canonical
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

denoiser::UNetConfig ExperimentConfig::unet_config() const {
    const json& m = j_.at("model");
    denoiser::UNetConfig c;
    c.base_channels = m.at("base_channels").get<int>();
    c.channel_mult = m.at("channel_mult").get<std::vector<int>>();
    c.attn_levels = m.at("attn_levels").get<std::vector<int>>();
    c.middle_attention = m.at("middle_attention").get<bool>();
    c.heads = m.at("heads").get<int>();
    c.norm_groups = m.at("norm_groups").get<int>();
    c.context_dim = m.at("context_dim").get<int>();
    c.context_tokens = m.at("context_tokens").get<int>();
    c.time_embed_dim = m.at("time_embed_dim").get<int>();
    return c;
}

conditioning::EncoderConfig ExperimentConfig::encoder_config() const {
    const json& m = j_.at("model");
    conditioning::EncoderConfig c;
    c.input_size = m.at("encoder_input").get<int>();
    c.base_channels = m.at("encoder_base_channels").get<int>();
    c.out_dim = m.at("context_dim").get<int>();
    return c;
}

diffusion::NoiseSchedule ExperimentConfig::schedule() const {
    const json& d = j_.at("diffusion");
    return diffusion::linear_schedule(d.at("timesteps").get<int>(),
                                      d.at("beta_start").get<double>(),
                                      d.at("beta_end").get<double>());
}

arpipeline::TrainConfig ExperimentConfig::train_config() const {
    const json& t = j_.at("train");
    arpipeline::TrainConfig c;
    c.steps = t.at("steps").get<int>();
    c.batch_size = t.at("batch_size").get<int>();
    c.lr = t.at("lr").get<double>();
    c.lr_min_frac = t.at("lr_min_frac").get<double>();
    c.lr_restart_period = t.at("lr_restart_period").get<int>();
    c.weight_decay = t.at("weight_decay").get<double>();
    c.seed = seed();
    c.resize_min = t.at("resize_min").get<int>();
    c.resize_max = t.at("resize_max").get<int>();
    c.view_size = j_.at("data").at("view_size").get<int>();
    c.alpha = t.at("alpha").get<double>();
    c.resample_alpha_per_timestep = t.at("resample_alpha_per_timestep").get<bool>();
    c.checkpoint_every = t.at("checkpoint_every").get<int>();
    c.global_mode = t.at("global_mode").get<std::string>();
    c.order = t.at("order").get<std::string>();
    apply_arm(t.at("arm").get<std::string>(), c.local_all_refs, c.global_all_refs);
    return c;
}

arpipeline::InferOptions ExperimentConfig::infer_options() const {
    const json& i = j_.at("infer");
    arpipeline::InferOptions o;
    o.num_steps = i.at("num_steps").get<int>();
    o.alpha = i.at("alpha").get<double>();
    o.order = i.at("order").get<std::string>();
    o.stochastic = i.at("stochastic").get<bool>();
    const json& t = j_.at("train");
    o.resample_alpha_per_timestep = t.at("resample_alpha_per_timestep").get<bool>();
    o.global_mode = t.at("global_mode").get<std::string>();
    apply_arm(t.at("arm").get<std::string>(), o.local_all_refs, o.global_all_refs);
    return o;
}

ExperimentConfig::DataSection ExperimentConfig::data() const {
    const json& d = j_.at("data");
    DataSection s;
    s.scenes_train = d.at("scenes_train").get<int>();
    s.scenes_test = d.at("scenes_test").get<int>();
    s.view_size = d.at("view_size").get<int>();
    s.scene_seed_offset = d.at("scene_seed_offset").get<std::uint64_t>();
    return s;
}

ExperimentConfig::EvalSection ExperimentConfig::eval() const {
    const json& e = j_.at("eval");
    EvalSection s;
    s.carve_resolution = e.at("carve_resolution").get<int>();
    s.carve_render_resolution = e.at("carve_render_resolution").get<int>();
    s.silhouette_threshold = e.at("silhouette_threshold").get<double>();
    s.surface_point_count = e.at("surface_point_count").get<int>();
    s.fscore_tau = e.at("fscore_tau").get<double>();
    s.fscore_tau_extra = e.at("fscore_tau_extra").get<double>();
    return s;
}

ExperimentConfig::AblationSection ExperimentConfig::ablation() const {
    const json& a = j_.at("ablation");
    AblationSection s;
    s.arms = a.at("arms").get<std::vector<std::string>>();
    s.orders = a.at("orders").get<std::vector<std::string>>();
    s.alphas = a.at("alphas").get<std::vector<double>>();
    s.steps = a.at("steps").get<int>();
    s.eval_samples = a.at("eval_samples").get<int>();
    return s;
}

void apply_arm(const std::string& arm, bool& local_all_refs, bool& global_all_refs) {
    if (arm == "baseline") {
        local_all_refs = false;
        global_all_refs = false;
    } else if (arm == "stacked_le") {
        local_all_refs = true;
        global_all_refs = false;
    } else if (arm == "lstm_ge") {
        local_all_refs = false;
        global_all_refs = true;
    } else if (arm == "both") {
        local_all_refs = true;
        global_all_refs = true;
    } else {
        throw DataError("config: unknown conditioning arm '" + arm + "'");
    }
}

}  // namespace nextview::config
