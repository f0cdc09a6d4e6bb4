#include "nextview/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nextview::conditioning {

using ag::Ref;

GlobalEncoder::GlobalEncoder(EncoderConfig cfg, ParamStore& store, Rng& init_rng,
                             const std::string& prefix)
    : cfg_(cfg), store_(&store), prefix_(prefix) {
    const int c = cfg_.base_channels;
    auto add_conv = [&](const std::string& name, int out, int in) {
        store_->add(prefix_ + name + ".w", init_uniform({out, in, 3, 3}, in * 9, init_rng));
        store_->add(prefix_ + name + ".b", Tensor({out}));
    };
    add_conv("conv1", c, 3);
    add_conv("conv2", 2 * c, c);
    add_conv("conv3", 2 * c, 2 * c);
    store_->add(prefix_ + "head.w", init_uniform({cfg_.out_dim, 2 * c}, 2 * c, init_rng));
    store_->add(prefix_ + "head.b", Tensor({cfg_.out_dim}));
}

ag::Ref GlobalEncoder::encode(const std::vector<Image>& batch) const {
    if (batch.empty()) throw std::invalid_argument("encode: empty batch");
    const int s = cfg_.input_size;
    const int B = static_cast<int>(batch.size());
    Tensor x({B, 3, s, s});
    for (int b = 0; b < B; ++b) {
        const Image im = (batch[b].height == s && batch[b].width == s)
                             ? batch[b]
                             : resize_bilinear(batch[b], s, s);
        const Tensor t = image_to_tensor(im, /*to_signed=*/true);
        std::copy(t.data.begin(), t.data.end(),
                  x.data.begin() + static_cast<std::int64_t>(b) * 3 * s * s);
    }
    Ref h = ag::constant(std::move(x));
    h = ag::silu(ag::conv2d(h, p("conv1.w"), p("conv1.b"), 2, 1));
    h = ag::silu(ag::conv2d(h, p("conv2.w"), p("conv2.b"), 2, 1));
    h = ag::silu(ag::conv2d(h, p("conv3.w"), p("conv3.b"), 2, 1));
    h = ag::mean_spatial(h);
    return ag::linear(h, p("head.w"), p("head.b"));
}

ag::Ref encode_globals(const GlobalEncoder& enc,
                       const std::vector<std::vector<Image>>& views_per_position) {
    if (views_per_position.empty()) throw std::invalid_argument("encode_globals: no views");
    std::vector<Ref> rows;
    rows.reserve(views_per_position.size());
    for (const auto& batch : views_per_position) {
        const Ref f = enc.encode(batch);  // (B, D)
        rows.push_back(ag::reshape(f, {f->value.dim(0), 1, f->value.dim(1)}));
    }
    return rows.size() == 1 ? rows[0] : ag::concat(rows, 1);
}

GroupedFeatures partition(const ag::Ref& features, const std::vector<double>& elevations) {
    if (features->value.rank() != 3)
        throw std::invalid_argument("partition: features must be (B,n,D)");
    const int n = features->value.dim(1);
    if (static_cast<int>(elevations.size()) != n)
        throw std::invalid_argument("partition: elevation count mismatch");
    GroupedFeatures gf;
    gf.group1_positions.push_back(0);  // input view belongs to both groups
    gf.group2_positions.push_back(0);
    for (int j = 1; j < n; ++j) {
        if (elevations[j] == 20.0)
            gf.group1_positions.push_back(j);
        else if (elevations[j] == -10.0)
            gf.group2_positions.push_back(j);
        else
            throw std::invalid_argument("partition: target elevation must be 20 or -10");
    }
    if (gf.group1_positions.size() != gf.group2_positions.size())
        throw std::invalid_argument("partition: group size mismatch (malformed condition set)");
    gf.f1 = ag::gather_tokens(features, gf.group1_positions);
    gf.f2 = ag::gather_tokens(features, gf.group2_positions);
    return gf;
}

LstmGe::LstmGe(int feature_dim, int tokens, ParamStore& store, Rng& init_rng,
               const std::string& prefix)
    : dim_(feature_dim), tokens_(tokens), store_(&store), prefix_(prefix) {
    for (int l = 0; l < 2; ++l) {
        const std::string ls = "lstm" + std::to_string(l);
        store_->add(prefix_ + ls + ".wx", init_uniform({4 * dim_, dim_}, dim_, init_rng));
        store_->add(prefix_ + ls + ".wh", init_uniform({4 * dim_, dim_}, dim_, init_rng));
        store_->add(prefix_ + ls + ".b", Tensor({4 * dim_}));
    }
    store_->add(prefix_ + "mlp1.w", init_uniform({2 * dim_, 2 * dim_}, 2 * dim_, init_rng));
    store_->add(prefix_ + "mlp1.b", Tensor({2 * dim_}));
    store_->add(prefix_ + "mlp2.w", init_uniform({dim_, 2 * dim_}, 2 * dim_, init_rng));
    store_->add(prefix_ + "mlp2.b", Tensor({dim_}));
    store_->add(prefix_ + "w_tokens", Tensor::full({tokens_, 1}, 1.0));
}

ag::Ref LstmGe::lstm_encode(int which, const ag::Ref& seq) const {
    if (seq->value.rank() != 3 || seq->value.dim(2) != dim_)
        throw std::invalid_argument("lstm_encode: sequence must be (B,k,D)");
    const int B = seq->value.dim(0), k = seq->value.dim(1);
    if (k < 1) throw std::invalid_argument("lstm_encode: empty sequence");
    const std::string ls = "lstm" + std::to_string(which);
    const Ref wx = p(ls + ".wx"), wh = p(ls + ".wh"), b = p(ls + ".b");
    const Ref hidden_bias = ag::constant(Tensor({4 * dim_}));  // recurrent path carries no bias

    Ref h = ag::constant(Tensor({B, dim_}));
    Ref c = ag::constant(Tensor({B, dim_}));
    for (int step = 0; step < k; ++step) {
        const Ref x = ag::reshape(ag::slice(seq, 1, step, 1), {B, dim_});
        const Ref gates = ag::add(ag::linear(x, wx, b), ag::linear(h, wh, hidden_bias));
        const Ref i = ag::sigmoid(ag::slice(gates, 1, 0, dim_));
        const Ref f = ag::sigmoid(ag::slice(gates, 1, dim_, dim_));
        const Ref g = ag::tanh_(ag::slice(gates, 1, 2 * dim_, dim_));
        const Ref o = ag::sigmoid(ag::slice(gates, 1, 3 * dim_, dim_));
        c = ag::add(ag::mul(f, c), ag::mul(i, g));
        h = ag::mul(o, ag::tanh_(c));
    }
    return h;
}

ag::Ref LstmGe::fuse(const ag::Ref& i0, const ag::Ref& i1) const {
    if (i0->value.dims != i1->value.dims || i0->value.rank() != 2 || i0->value.dim(1) != dim_)
        throw std::invalid_argument("fuse: inputs must both be (B,D)");
    Ref h = ag::concat({i0, i1}, 1);
    h = ag::gelu(ag::linear(h, p("mlp1.w"), p("mlp1.b")));
    h = ag::linear(h, p("mlp2.w"), p("mlp2.b"));
    return ag::outer_tokens(p("w_tokens"), h);
}

ag::Ref LstmGe::matmul_variant(const ag::Ref& features) const {
    if (features->value.rank() != 3 || features->value.dim(2) != dim_)
        throw std::invalid_argument("matmul_variant: features must be (B,n,D)");
    const int n = features->value.dim(1);
    const Ref w = p("w_tokens");  // (M,1)
    std::vector<Ref> reps(static_cast<std::size_t>(n), w);
    const Ref w_rep = n == 1 ? w : ag::concat(reps, 1);  // (M,n)
    return ag::matmul_broadcast(w_rep, features);        // (B,M,D)
}

namespace {
std::vector<int> sample_without_replacement(int count, int total, Rng& rng) {
    std::vector<int> pool(static_cast<std::size_t>(total));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < count; ++i) {
        const int j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(total - i)));
        std::swap(pool[i], pool[j]);
    }
    std::vector<int> idx(pool.begin(), pool.begin() + count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

void validate_caches(const std::vector<denoiser::ReferenceCache>& caches) {
    if (caches.empty()) throw std::invalid_argument("merge: no reference caches");
    const std::size_t layers = caches[0].layers.size();
    for (const auto& c : caches)
        if (c.layers.size() != layers)
            throw std::invalid_argument("merge: inconsistent layer sets across caches");
    for (const auto& c : caches)
        if (c.t != caches[0].t)
            throw std::invalid_argument("merge: caches recorded at different noise levels");
}
}  // namespace

std::vector<std::vector<std::vector<int>>> draw_alpha_indices(
    const std::vector<denoiser::ReferenceCache>& caches, double alpha, Rng& rng) {
    validate_caches(caches);
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("merge: alpha must be in [0,1]");
    const std::size_t layers = caches[0].layers.size();
    std::vector<std::vector<std::vector<int>>> indices(caches.size() > 1 ? caches.size() - 1 : 0);
    for (std::size_t j = 1; j < caches.size(); ++j) {
        Rng view_rng = rng.fork("alpha.view" + std::to_string(j));
        indices[j - 1].resize(layers);
        for (std::size_t li = 0; li < layers; ++li) {
            const int L = caches[j].layers[li].k->value.dim(1);
            const int keep = static_cast<int>(std::floor(alpha * L));
            indices[j - 1][li] = sample_without_replacement(keep, L, view_rng);
        }
    }
    return indices;
}

denoiser::MergedCache merge_with_indices(
    const std::vector<denoiser::ReferenceCache>& caches, double alpha,
    const std::vector<std::vector<std::vector<int>>>& indices) {
    validate_caches(caches);
    const std::size_t layers = caches[0].layers.size();
    if (caches.size() > 1 && indices.size() != caches.size() - 1)
        throw std::invalid_argument("merge: index sets do not match cache count");

    denoiser::MergedCache merged;
    merged.alpha = alpha;
    merged.sampled_indices.resize(layers);
    for (std::size_t li = 0; li < layers; ++li) {
        std::vector<Ref> ks{caches[0].layers[li].k};  // input view kept in full
        std::vector<Ref> vs{caches[0].layers[li].v};
        for (std::size_t j = 1; j < caches.size(); ++j) {
            const auto& idx = indices[j - 1][li];
            merged.sampled_indices[li].push_back(idx);
            if (idx.empty()) continue;
            ks.push_back(ag::gather_tokens(caches[j].layers[li].k, idx));
            vs.push_back(ag::gather_tokens(caches[j].layers[li].v, idx));
        }
        merged.layers.push_back({ks.size() == 1 ? ks[0] : ag::concat(ks, 1),
                                 vs.size() == 1 ? vs[0] : ag::concat(vs, 1)});
    }
    return merged;
}

denoiser::MergedCache merge_reference_caches(const std::vector<denoiser::ReferenceCache>& caches,
                                             double alpha, Rng& rng) {
    return merge_with_indices(caches, alpha, draw_alpha_indices(caches, alpha, rng));
}

}  // namespace nextview::conditioning
