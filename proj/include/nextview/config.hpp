#pragma once

#include <string>

#include <json.hpp>

#include "nextview/arpipeline.hpp"
#include "nextview/conditioning.hpp"
#include "nextview/denoiser.hpp"
#include "nextview/diffusion.hpp"

namespace nextview::config {

// Experiment configuration: JSON sections {data, model, diffusion, train,
// infer, ablation, eval} merged over built-in defaults. Unknown keys are
// rejected; the FNV-1a hash of the canonical dump stamps every output.
class ExperimentConfig {
public:
    static ExperimentConfig defaults();
    static ExperimentConfig load(const std::string& path);  // defaults + file
    static ExperimentConfig from_json(const nlohmann::json& overrides);

    const nlohmann::json& raw() const { return j_; }
    nlohmann::json& raw() { return j_; }

    std::string hash() const;

    std::uint64_t seed() const { return j_.at("seed").get<std::uint64_t>(); }
    std::string out_dir() const { return j_.at("out_dir").get<std::string>(); }

    denoiser::UNetConfig unet_config() const;
    conditioning::EncoderConfig encoder_config() const;
    diffusion::NoiseSchedule schedule() const;
    arpipeline::TrainConfig train_config() const;
    arpipeline::InferOptions infer_options() const;

    struct DataSection {
        int scenes_train = 200;
        int scenes_test = 20;
        int view_size = 32;
        std::uint64_t scene_seed_offset = 0;
    };
    DataSection data() const;

    struct EvalSection {
        int carve_resolution = 64;          // voxel grid N
        int carve_render_resolution = 160;  // silhouette render side for 3D eval
        double silhouette_threshold = 0.05;
        int surface_point_count = 16384;
        double fscore_tau = 0.02;
        double fscore_tau_extra = 0.05;
    };
    EvalSection eval() const;

    struct AblationSection {
        std::vector<std::string> arms{"baseline", "stacked_le", "lstm_ge", "both"};
        std::vector<std::string> orders{"normal", "reverse", "random"};
        std::vector<double> alphas{0.0, 0.3, 1.0};
        int steps = 800;
        int eval_samples = 8;
    };
    AblationSection ablation() const;

private:
    nlohmann::json j_;
};

// Maps a conditioning arm name onto the (local, global) reference switches.
void apply_arm(const std::string& arm, bool& local_all_refs, bool& global_all_refs);

}  // namespace nextview::config
