#pragma once

#include <string>
#include <vector>

#include "nextview/denoiser.hpp"
#include "nextview/image.hpp"
#include "nextview/param_store.hpp"
#include "nextview/rng.hpp"

namespace nextview::conditioning {

// Small trainable convolutional image encoder standing in for a pretrained
// vision backbone: three stride-2 convs, global average pool, linear head.
struct EncoderConfig {
    int input_size = 32;  // views are resized to this square side
    int base_channels = 16;
    int out_dim = 64;  // must match the UNet's context_dim
};

class GlobalEncoder {
public:
    GlobalEncoder(EncoderConfig cfg, ParamStore& store, Rng& init_rng,
                  const std::string& prefix = "enc.");

    const EncoderConfig& config() const { return cfg_; }

    // (B, out_dim) features for a batch of images (any square size).
    ag::Ref encode(const std::vector<Image>& batch) const;

private:
    EncoderConfig cfg_;
    ParamStore* store_;
    std::string prefix_;
    ag::Ref p(const std::string& name) const { return store_->get(prefix_ + name); }
};

// F (B, n, D) where position j is the encoder output of condition view j.
// views_per_position[j] holds that view for each batch element.
ag::Ref encode_globals(const GlobalEncoder& enc,
                       const std::vector<std::vector<Image>>& views_per_position);

struct GroupedFeatures {
    ag::Ref f1;  // input + elevation-20 views, (B,k,D)
    ag::Ref f2;  // input + elevation-(-10) views, (B,k,D)
    std::vector<int> group1_positions;
    std::vector<int> group2_positions;
};

// Splits condition features by elevation; position 0 (the input view) lands
// in both groups. elevations[j] for j >= 1 must be 20 or -10.
GroupedFeatures partition(const ag::Ref& features, const std::vector<double>& elevations);

// Two LSTMs over the grouped features, an MLP fusion, and the trainable
// token weights W producing the (B,M,D) cross-attention condition.
class LstmGe {
public:
    LstmGe(int feature_dim, int tokens, ParamStore& store, Rng& init_rng,
           const std::string& prefix = "ge.");

    int tokens() const { return tokens_; }

    // final hidden state of LSTM `which` (0 or 1) over seq (B,k,D) -> (B,D)
    ag::Ref lstm_encode(int which, const ag::Ref& seq) const;

    // T = W * MLP(concat(I0, I1)); rank-1 over the token axis per sample
    ag::Ref fuse(const ag::Ref& i0, const ag::Ref& i1) const;

    // ablation: T' = repeat(W, n) x F for stacked features F (B,n,D)
    ag::Ref matmul_variant(const ag::Ref& features) const;

private:
    int dim_;
    int tokens_;
    ParamStore* store_;
    std::string prefix_;
    ag::Ref p(const std::string& name) const { return store_->get(prefix_ + name); }
};

// Concatenates reference caches in view order, keeping every token of the
// input view's cache and a floor(alpha * L) subsample (without replacement,
// original order) of each later view's tokens; K and V share indices.
denoiser::MergedCache merge_reference_caches(const std::vector<denoiser::ReferenceCache>& caches,
                                             double alpha, Rng& rng);

// Same merge with pre-drawn token index sets (indices[view-1][layer]).
denoiser::MergedCache merge_with_indices(const std::vector<denoiser::ReferenceCache>& caches,
                                         double alpha,
                                         const std::vector<std::vector<std::vector<int>>>& indices);

// Draws the per-(view, layer) index sets used by merge_with_indices.
std::vector<std::vector<std::vector<int>>> draw_alpha_indices(
    const std::vector<denoiser::ReferenceCache>& caches, double alpha, Rng& rng);

}  // namespace nextview::conditioning
