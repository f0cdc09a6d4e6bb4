#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nextview/autodiff.hpp"
#include "nextview/diffusion.hpp"
#include "nextview/param_store.hpp"

namespace nextview::denoiser {

struct UNetConfig {
    int in_channels = 3;
    int base_channels = 16;
    std::vector<int> channel_mult{1, 2, 2};
    std::vector<int> attn_levels{2};  // encoder/decoder levels carrying attention
    bool middle_attention = true;
    int heads = 2;
    int norm_groups = 8;
    int context_dim = 64;    // cross-attention token dim (D)
    int context_tokens = 8;  // cross-attention token count (M)
    int time_embed_dim = 64;

    int levels() const { return static_cast<int>(channel_mult.size()); }
    bool level_has_attn(int l) const {
        for (int a : attn_levels)
            if (a == l) return true;
        return false;
    }
};

// Per self-attention layer K/V recorded from a reference view's forward
// pass, shape (B, L_i, D_i). Layers follow self_attn_layer_ids() order.
struct LayerKV {
    ag::Ref k;
    ag::Ref v;
};

struct ReferenceCache {
    std::vector<LayerKV> layers;
    int t = 0;  // noise level the reference was recorded at
};

// Concatenation of reference caches in view order e^1..e^{2k-1}, with the
// generated views' tokens subsampled at rate alpha (input view kept whole).
struct MergedCache {
    std::vector<LayerKV> layers;
    double alpha = 1.0;
    // sampled_indices[layer][view-1] = retained token ids of generated view
    // (view 0, the input, always keeps every token and has no entry here)
    std::vector<std::vector<std::vector<int>>> sampled_indices;
};

// Multi-head scaled dot-product attention over token tensors
// q (B,L,D), k/v (B,Lk,D); no projections, D divisible by heads.
ag::Ref multihead_attention(const ag::Ref& q, const ag::Ref& k, const ag::Ref& v, int heads);

class UNet {
public:
    UNet(UNetConfig cfg, ParamStore& store, Rng& init_rng, const std::string& prefix = "unet.");

    const UNetConfig& config() const { return cfg_; }
    const std::vector<std::string>& self_attn_layer_ids() const { return attn_ids_; }

    // One denoising pass. x (B,C,H,W) at noise level t; global_cond (B,M,D).
    // With `cache`, every self-attention consumes K* = [cached..., self].
    // With `record`, the pass appends each layer's K/V to it instead.
    ag::Ref forward(const ag::Ref& x, int t, const ag::Ref& global_cond,
                    const MergedCache* cache = nullptr, ReferenceCache* record = nullptr) const;

private:
    UNetConfig cfg_;
    ParamStore* store_;
    std::string prefix_;
    std::vector<std::string> attn_ids_;

    ag::Ref p(const std::string& name) const { return store_->get(prefix_ + name); }
    ag::Ref res_block(const ag::Ref& x, const ag::Ref& temb, const std::string& name,
                      int in_ch, int out_ch) const;
    ag::Ref attn_block(const ag::Ref& x, const std::string& name, int ch, int layer_index,
                       const MergedCache* cache, ReferenceCache* record) const;
    ag::Ref cross_block(const ag::Ref& x, const std::string& name, int ch,
                        const ag::Ref& context) const;
    ag::Ref time_embedding(int t, int batch) const;
};

// Noise the reference image at level t and record per-layer K/V; the v
// output of the pass is discarded.
ReferenceCache forward_record(const UNet& model, const Tensor& image, int t, const Tensor& eps,
                              const ag::Ref& global_cond, const diffusion::NoiseSchedule& sched);

// Denoise x_t under the (optional) merged reference cache.
ag::Ref forward_denoise(const UNet& model, const Tensor& x_t, int t, const ag::Ref& global_cond,
                        const MergedCache* cache = nullptr);

}  // namespace nextview::denoiser
