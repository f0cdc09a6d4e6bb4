#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nextview/conditioning.hpp"
#include "nextview/denoiser.hpp"
#include "nextview/diffusion.hpp"
#include "nextview/poseplan.hpp"
#include "nextview/synthdata.hpp"

namespace nextview::arpipeline {

struct TrainConfig {
    int steps = 2000;
    int batch_size = 2;
    double lr = 2e-4;
    double lr_min_frac = 0.1;
    int lr_restart_period = 1000;  // cosine warm restarts
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    int resize_min = 16;  // condition resize range (square side)
    int resize_max = 64;
    int view_size = 32;  // V; target rows are V x 2V
    double alpha = 1.0;  // reference-token sampling proportion
    bool resample_alpha_per_timestep = false;
    int checkpoint_every = 500;
    // conditioning arm: which strategies see the generated-view sequence
    bool local_all_refs = true;   // stack K/V of all condition views
    bool global_all_refs = true;  // grouped LSTM encoding of all condition views
    std::string global_mode = "lstm_ge";  // lstm_ge | matmul | none
    std::string order = "normal";         // normal | reverse | random
};

struct InferOptions {
    int num_steps = 16;
    double alpha = 1.0;
    bool resample_alpha_per_timestep = false;
    std::string order = "normal";
    bool stochastic = false;
    bool local_all_refs = true;
    bool global_all_refs = true;
    std::string global_mode = "lstm_ge";
};

// The full trainable model: UNet denoiser, global image encoder, grouped
// LSTM conditioning head, all registered in one parameter store, plus the noise schedule.
struct Model {
    denoiser::UNetConfig unet_cfg;
    conditioning::EncoderConfig enc_cfg;
    diffusion::NoiseSchedule schedule;
    ParamStore params;
    std::unique_ptr<denoiser::UNet> unet;
    std::unique_ptr<conditioning::GlobalEncoder> encoder;
    std::unique_ptr<conditioning::LstmGe> lstm_ge;

    Model(denoiser::UNetConfig ucfg, conditioning::EncoderConfig ecfg,
          diffusion::NoiseSchedule sched, std::uint64_t init_seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
};

class AdamW {
public:
    struct Hyper {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    AdamW() = default;
    explicit AdamW(Hyper h) : hyper_(h) {}

    void step(ParamStore& params, double lr);

    const Hyper& hyper() const { return hyper_; }
    int t() const { return t_; }

    // exposed for checkpointing
    std::unordered_map<std::string, std::pair<Tensor, Tensor>>& state() { return state_; }
    const std::unordered_map<std::string, std::pair<Tensor, Tensor>>& state() const { return state_; }
    void set_t(int t) { t_ = t; }

private:
    Hyper hyper_;
    int t_ = 0;
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> state_;  // m, v
};

double cosine_restart_lr(const TrainConfig& cfg, int step);

enum class Provenance : char { GroundTruth = 'G', Generated = 'M' };

struct TrainExample {
    int k = 1;
    int resize_side = 32;
    // [position][batch element]; position 0 is the input view
    std::vector<std::vector<Image>> condition_views;
    std::vector<double> condition_elevations;  // per position; [0] unused for grouping
    std::vector<Provenance> condition_provenance;
    std::vector<Image> target_rows;  // per batch element, V x 2V
};

TrainExample build_example(const synthdata::Sample& sample, int k, Rng& rng,
                           const TrainConfig& cfg);
TrainExample build_example_batch(const std::vector<const synthdata::Sample*>& batch, int k,
                                 int resize_side, const TrainConfig& cfg);

struct StepStats {
    double loss = 0.0;
    int t = 0;
    int k = 0;
    double grad_norm = 0.0;
    double lr = 0.0;
};

// One optimizer update on a teacher-forced example. Draws (t, target noise,
// per-condition noise, alpha indices) from step_rng in that order.
StepStats train_step(Model& model, AdamW& opt, const TrainExample& ex, double lr_now,
                     Rng& step_rng, const TrainConfig& cfg);

// Loss and parameter gradients without an optimizer update (gradients are
// left in the store); used by the equivalence and finite-difference tests.
double loss_and_gradients(Model& model, const TrainExample& ex, Rng& step_rng,
                          const TrainConfig& cfg);

// Per-step RNG is a pure function of (seed, step) so an interrupted and a
// resumed run replay identical draws.
Rng step_rng_for(std::uint64_t seed, int step);

using StepCallback = std::function<void(int step, const StepStats&)>;

// Full training loop over the dataset's train split.
void train(Model& model, AdamW& opt, const synthdata::Dataset& ds, const TrainConfig& cfg,
           int start_step, const StepCallback& on_step);

// Three-step autoregressive generation; returns the 6 views in canonical
// pose order regardless of the generation order used.
std::vector<Image> infer(Model& model, const Image& input_view, const InferOptions& opt, Rng rng);

// checkpointing ---------------------------------------------------------

struct CheckpointMeta {
    int step = 0;
    std::string config_hash;
    TrainConfig train_cfg;
};

void save_checkpoint(const std::string& path, const Model& model, const AdamW* opt,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    std::unique_ptr<Model> model;
    std::unique_ptr<AdamW> opt;  // present if the checkpoint carried state
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace nextview::arpipeline
