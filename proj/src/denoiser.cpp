#include "nextview/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace nextview::denoiser {

using ag::Ref;

namespace {
std::string lvl(const std::string& base, int l) { return base + std::to_string(l); }
}  // namespace

ag::Ref multihead_attention(const Ref& q, const Ref& k, const Ref& v, int heads) {
    const int B = q->value.dim(0), L = q->value.dim(1), D = q->value.dim(2);
    const int Lk = k->value.dim(1);
    if (k->value.dim(0) != B || v->value.dim(0) != B)
        throw std::invalid_argument("attention: batch mismatch");
    if (k->value.dim(2) != D || v->value.dim(2) != D || v->value.dim(1) != Lk)
        throw std::invalid_argument("attention: K/V dim mismatch");
    if (D % heads != 0) throw std::invalid_argument("attention: dim not divisible by heads");
    const int dh = D / heads;

    auto split = [&](const Ref& x, int tokens) {
        return ag::reshape(ag::permute(ag::reshape(x, {B, tokens, heads, dh}), {0, 2, 1, 3}),
                           {B * heads, tokens, dh});
    };
    const Ref qh = split(q, L);
    const Ref kh = split(k, Lk);
    const Ref vh = split(v, Lk);

    Ref att = ag::bmm(qh, ag::permute(kh, {0, 2, 1}));
    att = ag::scale(att, 1.0 / std::sqrt(static_cast<double>(dh)));
    const Ref probs = ag::softmax_last(att);
    const Ref out = ag::bmm(probs, vh);
    return ag::reshape(ag::permute(ag::reshape(out, {B, heads, L, dh}), {0, 2, 1, 3}), {B, L, D});
}

UNet::UNet(UNetConfig cfg, ParamStore& store, Rng& init_rng, const std::string& prefix)
    : cfg_(std::move(cfg)), store_(&store), prefix_(prefix) {
    const int L = cfg_.levels();
    const int E = cfg_.time_embed_dim;
    if (E % 2 != 0) throw std::invalid_argument("UNet: time_embed_dim must be even");
    std::vector<int> ch(L);
    for (int l = 0; l < L; ++l) ch[l] = cfg_.base_channels * cfg_.channel_mult[l];

    auto add_linear = [&](const std::string& name, int out, int in, bool zero = false) {
        store_->add(prefix_ + name + ".w",
                    zero ? Tensor({out, in}) : init_uniform({out, in}, in, init_rng));
        store_->add(prefix_ + name + ".b", Tensor({out}));
    };
    auto add_conv = [&](const std::string& name, int out, int in, int ks, bool zero = false) {
        store_->add(prefix_ + name + ".w", zero ? Tensor({out, in, ks, ks})
                                               : init_uniform({out, in, ks, ks}, in * ks * ks, init_rng));
        store_->add(prefix_ + name + ".b", Tensor({out}));
    };
    auto add_norm = [&](const std::string& name, int c) {
        if (c % cfg_.norm_groups != 0 && name.find("ln") == std::string::npos)
            throw std::invalid_argument("UNet: norm_groups must divide channels (" + name + ")");
        store_->add(prefix_ + name + ".gamma", Tensor::full({c}, 1.0));
        store_->add(prefix_ + name + ".beta", Tensor({c}));
    };
    auto add_res = [&](const std::string& name, int in, int out) {
        add_norm(name + ".gn1", in);
        add_conv(name + ".conv1", out, in, 3);
        add_linear(name + ".temb", out, E);
        add_norm(name + ".gn2", out);
        add_conv(name + ".conv2", out, out, 3);
        if (in != out) add_conv(name + ".skip", out, in, 1);
    };
    auto add_attn = [&](const std::string& name, int c) {
        add_norm(name + ".ln", c);
        add_linear(name + ".q", c, c);
        add_linear(name + ".k", c, c);
        add_linear(name + ".v", c, c);
        add_linear(name + ".o", c, c, /*zero=*/true);
    };
    auto add_cross = [&](const std::string& name, int c) {
        add_norm(name + ".ln", c);
        add_linear(name + ".q", c, c);
        add_linear(name + ".k", c, cfg_.context_dim);
        add_linear(name + ".v", c, cfg_.context_dim);
        add_linear(name + ".o", c, c, /*zero=*/true);
    };

    add_linear("temb.fc1", E, E);
    add_linear("temb.fc2", E, E);
    add_conv("stem", ch[0], cfg_.in_channels, 3);

    for (int l = 0; l < L; ++l) {
        if (l > 0) add_conv(lvl("down", l), ch[l - 1], ch[l - 1], 3);
        add_res(lvl("enc", l) + ".res", l == 0 ? ch[0] : ch[l - 1], ch[l]);
        if (cfg_.level_has_attn(l)) {
            add_attn(lvl("enc", l) + ".attn", ch[l]);
            add_cross(lvl("enc", l) + ".cross", ch[l]);
            attn_ids_.push_back(lvl("enc", l) + ".attn");
        }
    }
    add_res("mid.res1", ch[L - 1], ch[L - 1]);
    if (cfg_.middle_attention) {
        add_attn("mid.attn", ch[L - 1]);
        add_cross("mid.cross", ch[L - 1]);
        attn_ids_.push_back("mid.attn");
    }
    add_res("mid.res2", ch[L - 1], ch[L - 1]);
    for (int l = L - 1; l >= 0; --l) {
        add_res(lvl("dec", l) + ".res", 2 * ch[l], ch[l]);
        if (cfg_.level_has_attn(l)) {
            add_attn(lvl("dec", l) + ".attn", ch[l]);
            add_cross(lvl("dec", l) + ".cross", ch[l]);
            attn_ids_.push_back(lvl("dec", l) + ".attn");
        }
        if (l > 0) add_conv(lvl("up", l), ch[l - 1], ch[l], 3);
    }
    add_norm("head.gn", ch[0]);
    add_conv("head.conv", cfg_.in_channels, ch[0], 3, /*zero=*/true);
}

ag::Ref UNet::time_embedding(int t, int batch) const {
    const int E = cfg_.time_embed_dim;
    const int half = E / 2;
    Tensor emb({batch, E});
    for (int i = 0; i < half; ++i) {
        const double w = std::exp(-std::log(10000.0) * i / half);
        const double s = std::sin(t * w), c = std::cos(t * w);
        for (int b = 0; b < batch; ++b) {
            emb.data[static_cast<std::size_t>(b) * E + i] = s;
            emb.data[static_cast<std::size_t>(b) * E + half + i] = c;
        }
    }
    Ref h = ag::constant(std::move(emb));
    h = ag::linear(h, p("temb.fc1.w"), p("temb.fc1.b"));
    h = ag::silu(h);
    h = ag::linear(h, p("temb.fc2.w"), p("temb.fc2.b"));
    return h;
}

ag::Ref UNet::res_block(const Ref& x, const Ref& temb, const std::string& name, int in_ch,
                        int out_ch) const {
    Ref h = ag::group_norm(x, cfg_.norm_groups, p(name + ".gn1.gamma"), p(name + ".gn1.beta"));
    h = ag::silu(h);
    h = ag::conv2d(h, p(name + ".conv1.w"), p(name + ".conv1.b"), 1, 1);
    const Ref tproj = ag::linear(ag::silu(temb), p(name + ".temb.w"), p(name + ".temb.b"));
    h = ag::add_channel_bias(h, tproj);
    h = ag::group_norm(h, cfg_.norm_groups, p(name + ".gn2.gamma"), p(name + ".gn2.beta"));
    h = ag::silu(h);
    h = ag::conv2d(h, p(name + ".conv2.w"), p(name + ".conv2.b"), 1, 1);
    const Ref skip = (in_ch == out_ch) ? x : ag::conv2d(x, p(name + ".skip.w"), p(name + ".skip.b"), 1, 0);
    return ag::add(h, skip);
}

ag::Ref UNet::attn_block(const Ref& x, const std::string& name, int ch, int layer_index,
                         const MergedCache* cache, ReferenceCache* record) const {
    const int B = x->value.dim(0), H = x->value.dim(2), W = x->value.dim(3);
    const int L = H * W;
    const Ref tokens = ag::permute(ag::reshape(x, {B, ch, L}), {0, 2, 1});
    const Ref tn = ag::layer_norm_last(tokens, p(name + ".ln.gamma"), p(name + ".ln.beta"));
    const Ref q = ag::linear(tn, p(name + ".q.w"), p(name + ".q.b"));
    const Ref k = ag::linear(tn, p(name + ".k.w"), p(name + ".k.b"));
    const Ref v = ag::linear(tn, p(name + ".v.w"), p(name + ".v.b"));
    if (record) record->layers.push_back({k, v});

    Ref kk = k, vv = v;
    if (cache) {
        const LayerKV& c = cache->layers[static_cast<std::size_t>(layer_index)];
        if (c.k->value.dim(2) != ch)
            throw std::invalid_argument("forward: cache dim mismatch at " + name);
        kk = ag::concat({c.k, k}, 1);
        vv = ag::concat({c.v, v}, 1);
    }
    Ref o = multihead_attention(q, kk, vv, cfg_.heads);
    o = ag::linear(o, p(name + ".o.w"), p(name + ".o.b"));
    const Ref out = ag::add(tokens, o);
    return ag::reshape(ag::permute(out, {0, 2, 1}), {B, ch, H, W});
}

ag::Ref UNet::cross_block(const Ref& x, const std::string& name, int ch,
                          const Ref& context) const {
    const int B = x->value.dim(0), H = x->value.dim(2), W = x->value.dim(3);
    if (context->value.rank() != 3 || context->value.dim(0) != B ||
        context->value.dim(2) != cfg_.context_dim)
        throw std::invalid_argument("forward: global condition must be (B,M,context_dim)");
    const Ref tokens = ag::permute(ag::reshape(x, {B, ch, H * W}), {0, 2, 1});
    const Ref tn = ag::layer_norm_last(tokens, p(name + ".ln.gamma"), p(name + ".ln.beta"));
    const Ref q = ag::linear(tn, p(name + ".q.w"), p(name + ".q.b"));
    const Ref k = ag::linear(context, p(name + ".k.w"), p(name + ".k.b"));
    const Ref v = ag::linear(context, p(name + ".v.w"), p(name + ".v.b"));
    Ref o = multihead_attention(q, k, v, cfg_.heads);
    o = ag::linear(o, p(name + ".o.w"), p(name + ".o.b"));
    const Ref out = ag::add(tokens, o);
    return ag::reshape(ag::permute(out, {0, 2, 1}), {B, ch, H, W});
}

ag::Ref UNet::forward(const Ref& x, int t, const Ref& global_cond, const MergedCache* cache,
                      ReferenceCache* record) const {
    if (cache && record) throw std::logic_error("forward: cannot record and consume in one pass");
    if (cache && cache->layers.size() != attn_ids_.size())
        throw std::invalid_argument("forward: cache layer count mismatch");
    const int L = cfg_.levels();
    const int B = x->value.dim(0);
    std::vector<int> ch(L);
    for (int l = 0; l < L; ++l) ch[l] = cfg_.base_channels * cfg_.channel_mult[l];

    const Ref temb = time_embedding(t, B);
    Ref h = ag::conv2d(x, p("stem.w"), p("stem.b"), 1, 1);

    int attn_index = 0;
    std::vector<Ref> skips(L);
    for (int l = 0; l < L; ++l) {
        if (l > 0) h = ag::conv2d(h, p(lvl("down", l) + ".w"), p(lvl("down", l) + ".b"), 2, 1);
        h = res_block(h, temb, lvl("enc", l) + ".res", l == 0 ? ch[0] : ch[l - 1], ch[l]);
        if (cfg_.level_has_attn(l)) {
            h = attn_block(h, lvl("enc", l) + ".attn", ch[l], attn_index++, cache, record);
            h = cross_block(h, lvl("enc", l) + ".cross", ch[l], global_cond);
        }
        skips[l] = h;
    }
    h = res_block(h, temb, "mid.res1", ch[L - 1], ch[L - 1]);
    if (cfg_.middle_attention) {
        h = attn_block(h, "mid.attn", ch[L - 1], attn_index++, cache, record);
        h = cross_block(h, "mid.cross", ch[L - 1], global_cond);
    }
    h = res_block(h, temb, "mid.res2", ch[L - 1], ch[L - 1]);
    for (int l = L - 1; l >= 0; --l) {
        h = ag::concat({h, skips[l]}, 1);
        h = res_block(h, temb, lvl("dec", l) + ".res", 2 * ch[l], ch[l]);
        if (cfg_.level_has_attn(l)) {
            h = attn_block(h, lvl("dec", l) + ".attn", ch[l], attn_index++, cache, record);
            h = cross_block(h, lvl("dec", l) + ".cross", ch[l], global_cond);
        }
        if (l > 0) {
            h = ag::upsample_nearest2(h);
            h = ag::conv2d(h, p(lvl("up", l) + ".w"), p(lvl("up", l) + ".b"), 1, 1);
        }
    }
    h = ag::group_norm(h, cfg_.norm_groups, p("head.gn.gamma"), p("head.gn.beta"));
    h = ag::silu(h);
    h = ag::conv2d(h, p("head.conv.w"), p("head.conv.b"), 1, 1);
    return h;
}

ReferenceCache forward_record(const UNet& model, const Tensor& image, int t, const Tensor& eps,
                              const ag::Ref& global_cond, const diffusion::NoiseSchedule& sched) {
    ReferenceCache cache;
    cache.t = t;
    const Ref x_t = ag::constant(diffusion::add_noise(image, t, eps, sched));
    (void)model.forward(x_t, t, global_cond, nullptr, &cache);
    if (cache.layers.size() != model.self_attn_layer_ids().size())
        throw std::logic_error("forward_record: layer recording incomplete");
    return cache;
}

ag::Ref forward_denoise(const UNet& model, const Tensor& x_t, int t, const ag::Ref& global_cond,
                        const MergedCache* cache) {
    return model.forward(ag::constant(x_t), t, global_cond, cache, nullptr);
}

}  // namespace nextview::denoiser
