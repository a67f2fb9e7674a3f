#pragma once

// Learnable modules. Weights are stored unscaled N(0,1) draws and rescaled
// by 1/sqrt(fan_in) at use (equalized learning-rate convention). Forward
// passes are pure in (params, inputs); parameters mutate only through the
// optimizer between steps.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "coordgan/autodiff.hpp"
#include "coordgan/config.hpp"
#include "coordgan/coordspace.hpp"
#include "coordgan/rng.hpp"
#include "coordgan/tensor.hpp"

namespace coordgan::nets {

template <class T>
using Var = ad::VarT<T>;

constexpr double kLeakySlope = 0.2;

// Named parameter registry. Group membership is encoded in the name prefix
// ("generator/...", "encoder/...").
template <class T>
struct ParamStoreT {
    std::vector<std::pair<std::string, Var<T>>> items;

    Var<T> make(const std::string& name, TensorT<T> init) {
        auto v = Var<T>::leaf(std::move(init), true);
        items.emplace_back(name, v);
        return v;
    }

    std::vector<std::pair<std::string, Var<T>>> group(const std::string& prefix) const {
        std::vector<std::pair<std::string, Var<T>>> out;
        for (const auto& kv : items)
            if (kv.first.rfind(prefix, 0) == 0) out.push_back(kv);
        return out;
    }

    Var<T> find(const std::string& name) const {
        for (const auto& kv : items)
            if (kv.first == name) return kv.second;
        throw std::runtime_error("param store: no parameter named " + name);
    }
};

// ------------------------------------------------------------ layers ------

template <class T>
struct LinearT {
    Var<T> w;  // [out, in]
    Var<T> b;  // [out]
    T wscale = 1;

    static LinearT create(ParamStoreT<T>& ps, const std::string& name, int64_t in, int64_t out,
                          Rng& rng, double gain = std::sqrt(2.0), double bias_init = 0.0) {
        LinearT l;
        l.w = ps.make(name + ".w", TensorT<T>::randn({out, in}, rng));
        l.b = ps.make(name + ".b", TensorT<T>::full({out}, T(bias_init)));
        l.wscale = T(gain / std::sqrt(double(in)));
        return l;
    }

    Var<T> forward(const Var<T>& x) const {
        return ad::add(ad::scale(ad::matmul_nt(x, w), wscale), b);
    }
};

template <class T>
struct Conv2dT {
    Var<T> w;  // [O, C, k, k]
    Var<T> b;  // [O]
    T wscale = 1;
    int k = 3, pad = 1;

    static Conv2dT create(ParamStoreT<T>& ps, const std::string& name, int64_t in, int64_t out,
                          int k, Rng& rng, double gain = std::sqrt(2.0)) {
        Conv2dT c;
        c.k = k;
        c.pad = k / 2;
        c.w = ps.make(name + ".w", TensorT<T>::randn({out, in, int64_t(k), int64_t(k)}, rng));
        c.b = ps.make(name + ".b", TensorT<T>::zeros({out}));
        c.wscale = T(gain / std::sqrt(double(in) * k * k));
        return c;
    }

    Var<T> forward(const Var<T>& x) const {
        Var<T> y = ad::scale(ad::conv2d(x, w, pad), wscale);
        return ad::add(y, ad::reshape(b, {1, b.numel(), 1, 1}));
    }
};

template <class T>
Var<T> leaky(const Var<T>& x) {
    return ad::leaky_relu(x, T(kLeakySlope));
}

// z / sqrt(mean(z^2) + eps), rowwise.
template <class T>
Var<T> pixel_norm(const Var<T>& z) {
    const int64_t N = z.dim(0), D = z.dim(1);
    Var<T> m = ad::scale(ad::sum_to(ad::square(z), Shape{N, 1}), T(1) / T(D));
    return ad::div(z, ad::broadcast_to(ad::sqrt(ad::add_scalar(m, T(1e-8))), z.shape()));
}

// --------------------------------------------------------- mapping --------

template <class T>
struct MappingNetT {
    std::vector<LinearT<T>> fcs;

    static MappingNetT create(ParamStoreT<T>& ps, const std::string& prefix, int64_t dim,
                              int64_t hidden, int64_t depth, Rng& rng) {
        MappingNetT m;
        for (int64_t i = 0; i < depth; ++i) {
            const int64_t in = i == 0 ? dim : hidden;
            const int64_t out = i == depth - 1 ? dim : hidden;
            m.fcs.push_back(LinearT<T>::create(ps, prefix + "/fc" + std::to_string(i), in, out, rng));
        }
        return m;
    }

    // noise z [N,D] -> mapped code w [N,D]
    Var<T> forward(const Var<T>& z) const {
        Var<T> x = pixel_norm(z);
        for (const auto& fc : fcs) x = leaky(fc.forward(x));
        return x;
    }
};

// ------------------------------------------------------- warp MLPs --------

// Three-layer MLP over (coordinate, structure code) rows, tanh output, so
// warped components stay strictly inside (-1, 1).
template <class T>
struct CoordMlpT {
    LinearT<T> l0, l1, l2;

    static CoordMlpT create(ParamStoreT<T>& ps, const std::string& prefix, int64_t latent,
                            int64_t hidden, Rng& rng) {
        CoordMlpT m;
        m.l0 = LinearT<T>::create(ps, prefix + "/fc0", 2 + latent, hidden, rng);
        m.l1 = LinearT<T>::create(ps, prefix + "/fc1", hidden, hidden, rng);
        m.l2 = LinearT<T>::create(ps, prefix + "/fc2", hidden, 2, rng, /*gain=*/1.0);
        return m;
    }

    // rows [R, 2+latent] -> [R, 2]
    Var<T> forward_rows(const Var<T>& rows) const {
        Var<T> h = leaky(l0.forward(rows));
        h = leaky(l1.forward(h));
        return ad::tanh(l2.forward(h));
    }

    // coords [P,2] (shared across batch), codes [N,latent] -> [N,P,2].
    Var<T> forward(const Var<T>& coord_rows, const Var<T>& codes) const {
        const int64_t P = coord_rows.dim(0), N = codes.dim(0), D = codes.dim(1);
        Var<T> ct = ad::reshape(ad::broadcast_to(ad::reshape(coord_rows, {1, P, 2}), {N, P, 2}),
                                {N * P, 2});
        Var<T> wt = ad::reshape(ad::broadcast_to(ad::reshape(codes, {N, 1, D}), {N, P, D}),
                                {N * P, D});
        Var<T> out = forward_rows(ad::concat<T>({ct, wt}, 1));
        return ad::reshape(out, {N, P, 2});
    }
};

// [N,P,2] pixel rows -> [N,2,H,W]
template <class T>
Var<T> rows_to_nchw(const Var<T>& rows, int64_t H, int64_t W) {
    return ad::permute(ad::reshape(rows, {rows.dim(0), H, W, 2}), {0, 3, 1, 2});
}

template <class T>
Var<T> nchw_to_rows(const Var<T>& maps) {
    const int64_t N = maps.dim(0), H = maps.dim(2), W = maps.dim(3);
    return ad::reshape(ad::permute(maps, {0, 2, 3, 1}), {N, H * W, 2});
}

// ---------------------------------------------------- positional enc ------

template <class T>
struct PosEncT {
    Conv2dT<T> proj;  // 1x1, 2 -> E

    static PosEncT create(ParamStoreT<T>& ps, const std::string& prefix, int64_t channels, Rng& rng) {
        PosEncT p;
        p.proj = Conv2dT<T>::create(ps, prefix + "/proj", 2, channels, 1, rng, /*gain=*/1.0);
        return p;
    }

    // [N,2,H,W] -> [N,E,H,W], elementwise sine of a linear projection
    Var<T> forward(const Var<T>& coords_nchw) const { return ad::sin(proj.forward(coords_nchw)); }
};

// ------------------------------------------------- modulated conv ---------

// Per-sample weight modulation/demodulation. The style is an affine function
// of the texture code (bias-initialized at 1); modulated kernels are
// demodulated by the root-sum-square over (in, k, k), eps = 1e-8. No bias —
// the caller owns bias and activation.
template <class T>
struct ModConvT {
    LinearT<T> affine;  // latent -> Cin
    Var<T> w;           // [O, Cin, k, k]
    T wscale = 1;
    int k = 3, pad = 1;

    static ModConvT create(ParamStoreT<T>& ps, const std::string& prefix, int64_t latent,
                           int64_t in, int64_t out, int k, Rng& rng) {
        ModConvT m;
        m.k = k;
        m.pad = k / 2;
        m.affine = LinearT<T>::create(ps, prefix + ".affine", latent, in, rng, /*gain=*/1.0,
                                      /*bias_init=*/1.0);
        m.w = ps.make(prefix + ".w", TensorT<T>::randn({out, in, int64_t(k), int64_t(k)}, rng));
        m.wscale = T(1.0 / std::sqrt(double(in) * k * k));
        return m;
    }

    // x [N,Cin,H,W], w_t [N,latent] -> [N,O,H,W]
    Var<T> forward(const Var<T>& x, const Var<T>& w_t) const {
        const int64_t N = x.dim(0);
        Var<T> styles = affine.forward(w_t);  // [N, Cin]
        std::vector<Var<T>> outs;
        outs.reserve(size_t(N));
        for (int64_t n = 0; n < N; ++n) {
            Var<T> s = ad::reshape(ad::slice(styles, 0, n, 1), {1, styles.dim(1), 1, 1});
            Var<T> wm = ad::scale(ad::mul(w, s), wscale);
            Var<T> denom = ad::sqrt(ad::add_scalar(
                ad::sum_to(ad::square(wm), Shape{wm.dim(0), 1, 1, 1}), T(1e-8)));
            Var<T> wd = ad::div(wm, denom);
            outs.push_back(ad::conv2d(ad::slice(x, 0, n, 1), wd, pad));
        }
        return N == 1 ? outs[0] : ad::concat(outs, 0);
    }
};

// ------------------------------------------------------- generator --------

template <class T>
struct GeneratorT {
    PosEncT<T> posenc;
    std::vector<ModConvT<T>> layers;
    std::vector<Var<T>> layer_bias;
    std::vector<int> rgb_taps;       // layer index after which an RGB skip is taken
    std::vector<Conv2dT<T>> to_rgb;  // 1x1 feature->3 per tap
    std::vector<Conv2dT<T>> upsample_convs;  // optional high-res stages
    std::vector<bool> concat_mask;
    int64_t height = 0, width = 0;

    static GeneratorT create(ParamStoreT<T>& ps, const TrainConfig& cfg, Rng& rng) {
        GeneratorT g;
        g.height = g.width = cfg.resolution;
        g.posenc = PosEncT<T>::create(ps, "posenc", cfg.posenc_channels, rng);
        g.concat_mask = cfg.struc_mod_layers();
        int64_t in_ch = cfg.posenc_channels;
        for (int64_t l = 0; l < cfg.gen_layers; ++l) {
            const int64_t cin = in_ch + (g.concat_mask[size_t(l)] ? 2 : 0);
            g.layers.push_back(ModConvT<T>::create(ps, "generator/layer" + std::to_string(l),
                                                   cfg.latent_dim, cin, cfg.gen_channels, 3, rng));
            g.layer_bias.push_back(
                ps.make("generator/layer" + std::to_string(l) + ".b", TensorT<T>::zeros({cfg.gen_channels})));
            in_ch = cfg.gen_channels;
            if ((l + 1) % cfg.rgb_every == 0 || l == cfg.gen_layers - 1) {
                g.rgb_taps.push_back(int(l));
                g.to_rgb.push_back(Conv2dT<T>::create(
                    ps, "generator/rgb" + std::to_string(g.rgb_taps.size() - 1), cfg.gen_channels, 3,
                    1, rng, /*gain=*/1.0));
            }
        }
        for (int64_t u = 0; u < cfg.upsample_blocks; ++u) {
            g.upsample_convs.push_back(Conv2dT<T>::create(
                ps, "generator/up" + std::to_string(u), cfg.gen_channels, cfg.gen_channels, 3, rng));
            g.to_rgb.push_back(Conv2dT<T>::create(ps, "generator/uprgb" + std::to_string(u),
                                                  cfg.gen_channels, 3, 1, rng, /*gain=*/1.0));
        }
        return g;
    }

    // Separate embed/concat coordinate inputs so the structure-modulation
    // wiring is independently checkable; forward() passes the same map twice.
    Var<T> forward_detail(const Var<T>& c_embed, const Var<T>& c_concat,
                          const std::vector<Var<T>>& styles) const {
        Var<T> feat = posenc.forward(c_embed);
        Var<T> rgb;
        size_t tap = 0;
        for (size_t l = 0; l < layers.size(); ++l) {
            Var<T> in = concat_mask[l] ? ad::concat<T>({feat, c_concat}, 1) : feat;
            feat = layers[l].forward(in, styles[l]);
            feat = leaky(ad::add(feat, ad::reshape(layer_bias[l], {1, layer_bias[l].numel(), 1, 1})));
            if (tap < rgb_taps.size() && rgb_taps[tap] == int(l)) {
                Var<T> t = to_rgb[tap].forward(feat);
                rgb = rgb.defined() ? ad::add(rgb, t) : t;
                ++tap;
            }
        }
        for (size_t u = 0; u < upsample_convs.size(); ++u) {
            feat = leaky(upsample_convs[u].forward(ad::upsample2(feat)));
            rgb = ad::add(ad::upsample2(rgb), to_rgb[tap + u].forward(feat));
        }
        return rgb;
    }

    // c_warped [N,2,H,W]; one style per layer (broadcast a single w_t for
    // W-space inputs). Raw RGB output; exporters clamp to [-1,1].
    Var<T> forward(const Var<T>& c_warped, const std::vector<Var<T>>& styles) const {
        return forward_detail(c_warped, c_warped, styles);
    }

    std::vector<Var<T>> broadcast_style(const Var<T>& w_t) const {
        return std::vector<Var<T>>(layers.size(), w_t);
    }
};

// ---------------------------------------------------- discriminators ------

template <class T>
struct ImageDiscT {
    std::vector<Conv2dT<T>> convs;  // stride-1 conv + pool pyramid
    LinearT<T> fc0, fc1;

    static ImageDiscT create(ParamStoreT<T>& ps, const std::string& prefix, const TrainConfig& cfg,
                             Rng& rng) {
        ImageDiscT d;
        const int64_t cmax = cfg.disc_channels * 4;
        int64_t res = cfg.resolution, c = cfg.disc_channels, in = 3, idx = 0;
        while (true) {
            d.convs.push_back(
                Conv2dT<T>::create(ps, prefix + "/conv" + std::to_string(idx++), in, c, 3, rng));
            in = c;
            if (res <= 4) break;
            res /= 2;
            c = std::min(c * 2, cmax);
        }
        d.fc0 = LinearT<T>::create(ps, prefix + "/fc0", in * res * res, cfg.disc_channels * 4, rng);
        d.fc1 = LinearT<T>::create(ps, prefix + "/fc1", cfg.disc_channels * 4, 1, rng, /*gain=*/1.0);
        return d;
    }

    // [N,3,H,W] -> [N,1] logits
    Var<T> forward(const Var<T>& x) const {
        Var<T> h = x;
        for (size_t i = 0; i < convs.size(); ++i) {
            h = leaky(convs[i].forward(h));
            if (i + 1 < convs.size()) h = ad::avgpool2(h);
        }
        h = ad::reshape(h, {h.dim(0), h.numel() / h.dim(0)});
        return fc1.forward(leaky(fc0.forward(h)));
    }
};

// Co-occurrence discriminator: shared per-patch feature extractor; reference
// features are mean-pooled, concatenated with the query feature, classified.
template <class T>
struct PatchDiscT {
    std::vector<Conv2dT<T>> convs;
    LinearT<T> feat_fc;
    LinearT<T> cls0, cls1;
    int64_t patch_size = 8;

    static PatchDiscT create(ParamStoreT<T>& ps, const std::string& prefix, const TrainConfig& cfg,
                             Rng& rng) {
        PatchDiscT d;
        d.patch_size = cfg.resolution / 4;
        int64_t res = d.patch_size, c = cfg.patch_channels, in = 3, idx = 0;
        while (res > 2) {
            d.convs.push_back(
                Conv2dT<T>::create(ps, prefix + "/conv" + std::to_string(idx++), in, c, 3, rng));
            in = c;
            res /= 2;
            c = std::min(c * 2, cfg.patch_channels * 4);
        }
        d.convs.push_back(Conv2dT<T>::create(ps, prefix + "/conv" + std::to_string(idx), in, c, 3, rng));
        d.feat_fc = LinearT<T>::create(ps, prefix + "/feat_fc", c * res * res, cfg.patch_feat, rng);
        d.cls0 = LinearT<T>::create(ps, prefix + "/cls0", cfg.patch_feat * 2, cfg.patch_feat, rng);
        d.cls1 = LinearT<T>::create(ps, prefix + "/cls1", cfg.patch_feat, 1, rng, /*gain=*/1.0);
        return d;
    }

    // [M,3,ps,ps] -> [M,F]
    Var<T> features(const Var<T>& patches) const {
        Var<T> h = patches;
        for (size_t i = 0; i < convs.size(); ++i) {
            h = leaky(convs[i].forward(h));
            if (i + 1 < convs.size()) h = ad::avgpool2(h);
        }
        h = ad::reshape(h, {h.dim(0), h.numel() / h.dim(0)});
        return leaky(feat_fc.forward(h));
    }

    // refs [R,F] (R >= 1), query [1,F] -> [1,1] logit
    Var<T> logit(const Var<T>& ref_feats, const Var<T>& query_feat) const {
        if (ref_feats.dim(0) < 1) throw std::invalid_argument("patch disc: need >= 1 reference");
        Var<T> mean = ad::scale(ad::sum_to(ref_feats, Shape{1, ref_feats.dim(1)}),
                                T(1) / T(ref_feats.dim(0)));
        Var<T> h = ad::concat<T>({mean, query_feat}, 1);
        return cls1.forward(leaky(cls0.forward(h)));
    }
};

// --------------------------------------------------------- encoder --------

template <class T>
struct ResDownT {
    Conv2dT<T> c1, c2, skip;

    static ResDownT create(ParamStoreT<T>& ps, const std::string& prefix, int64_t in, int64_t out,
                           Rng& rng) {
        ResDownT b;
        b.c1 = Conv2dT<T>::create(ps, prefix + ".c1", in, out, 3, rng);
        b.c2 = Conv2dT<T>::create(ps, prefix + ".c2", out, out, 3, rng);
        b.skip = Conv2dT<T>::create(ps, prefix + ".skip", in, out, 1, rng, /*gain=*/1.0);
        return b;
    }

    Var<T> forward(const Var<T>& x) const {
        Var<T> y = leaky(c2.forward(leaky(c1.forward(x))));
        Var<T> s = skip.forward(x);
        return ad::avgpool2(ad::scale(ad::add(y, s), T(1.0 / std::sqrt(2.0))));
    }
};

template <class T>
struct EncoderOutT {
    Var<T> w_s;                      // [N, latent]
    std::vector<Var<T>> w_t_layers;  // one per generator layer (W+)
};

template <class T>
struct EncoderT {
    std::vector<ResDownT<T>> trunk;
    Conv2dT<T> s_conv;   // 1x1
    LinearT<T> s_fc;
    Conv2dT<T> t_conv;   // 3x3 before global pooling
    std::vector<LinearT<T>> t_heads;

    static EncoderT create(ParamStoreT<T>& ps, const TrainConfig& cfg, Rng& rng) {
        EncoderT e;
        const int64_t base = cfg.enc_channels;
        const int64_t chans[4] = {base, base * 2, base * 3, base * 4};
        int64_t in = 3;
        for (int i = 0; i < 4; ++i) {
            e.trunk.push_back(ResDownT<T>::create(ps, "encoder/block" + std::to_string(i), in,
                                                  chans[i], rng));
            in = chans[i];
        }
        const int64_t res = cfg.resolution / 16;
        e.s_conv = Conv2dT<T>::create(ps, "encoder/s_conv", in, in, 1, rng);
        e.s_fc = LinearT<T>::create(ps, "encoder/s_fc", in * res * res, cfg.latent_dim, rng,
                                    /*gain=*/1.0);
        e.t_conv = Conv2dT<T>::create(ps, "encoder/t_conv", in, in, 3, rng);
        for (int64_t l = 0; l < cfg.gen_layers; ++l)
            e.t_heads.push_back(LinearT<T>::create(ps, "encoder/t_head" + std::to_string(l), in,
                                                   cfg.latent_dim, rng, /*gain=*/1.0));
        return e;
    }

    EncoderOutT<T> forward(const Var<T>& x) const {
        Var<T> h = x;
        for (const auto& b : trunk) h = b.forward(h);
        EncoderOutT<T> out;
        Var<T> sh = leaky(s_conv.forward(h));
        sh = ad::reshape(sh, {sh.dim(0), sh.numel() / sh.dim(0)});
        out.w_s = s_fc.forward(sh);
        Var<T> th = leaky(t_conv.forward(h));
        const int64_t N = th.dim(0), C = th.dim(1), HW = th.dim(2) * th.dim(3);
        Var<T> pooled = ad::reshape(
            ad::scale(ad::sum_to(th, Shape{N, C, 1, 1}), T(1) / T(HW)), {N, C});
        for (const auto& head : t_heads) out.w_t_layers.push_back(head.forward(pooled));
        return out;
    }
};

// ----------------------------------------------------------- model --------

template <class T>
struct CoordGanModelT {
    TrainConfig cfg;
    ParamStoreT<T> params;
    MappingNetT<T> structure_mapper, texture_mapper;
    CoordMlpT<T> warp_mlp;
    std::optional<CoordMlpT<T>> backward_mlp;
    GeneratorT<T> generator;
    ImageDiscT<T> image_disc;
    PatchDiscT<T> patch_disc;
    EncoderT<T> encoder;
    TensorT<T> canonical_rows;  // [H*W, 2] constant

    static CoordGanModelT create(const TrainConfig& cfg, uint64_t init_seed) {
        Rng rng(init_seed);
        CoordGanModelT m;
        m.cfg = cfg;
        m.structure_mapper = MappingNetT<T>::create(m.params, "structure-mapper", cfg.latent_dim,
                                                    cfg.map_hidden, cfg.map_depth, rng);
        m.texture_mapper = MappingNetT<T>::create(m.params, "texture-mapper", cfg.latent_dim,
                                                  cfg.map_hidden, cfg.map_depth, rng);
        m.warp_mlp = CoordMlpT<T>::create(m.params, "warp-mlp", cfg.latent_dim, cfg.warp_hidden, rng);
        if (cfg.backward_mlp)
            m.backward_mlp =
                CoordMlpT<T>::create(m.params, "backward-mlp", cfg.latent_dim, cfg.warp_hidden, rng);
        m.generator = GeneratorT<T>::create(m.params, cfg, rng);
        m.image_disc = ImageDiscT<T>::create(m.params, "image-discriminator", cfg, rng);
        m.patch_disc = PatchDiscT<T>::create(m.params, "patch-discriminator", cfg, rng);
        m.encoder = EncoderT<T>::create(m.params, cfg, rng);
        m.canonical_rows =
            coords::make_canonical<T>(cfg.resolution, cfg.resolution).pixel_rows().clone();
        return m;
    }

    Var<T> canonical_const() const { return Var<T>::constant(canonical_rows); }

    // z [N,D] -> warped coordinate rows [N,P,2]
    Var<T> warp_from_code(const Var<T>& w_s) const {
        return warp_mlp.forward(canonical_const(), w_s);
    }
};

template <class T>
struct SynthOutT {
    Var<T> image;      // [N,3,H,W], raw
    Var<T> corr_nchw;  // [N,2,H,W]
    Var<T> corr_rows;  // [N,P,2]
    Var<T> w_s;        // [N,latent]
    Var<T> w_t;        // [N,latent]
};

// Full synthesis path from noise codes.
template <class T>
SynthOutT<T> synthesize(const CoordGanModelT<T>& m, const Var<T>& z_s, const Var<T>& z_t) {
    SynthOutT<T> o;
    o.w_s = m.structure_mapper.forward(z_s);
    o.w_t = m.texture_mapper.forward(z_t);
    o.corr_rows = m.warp_from_code(o.w_s);
    o.corr_nchw = rows_to_nchw(o.corr_rows, m.cfg.resolution, m.cfg.resolution);
    o.image = m.generator.forward(o.corr_nchw, m.generator.broadcast_style(o.w_t));
    return o;
}

using CoordGanModel = CoordGanModelT<real>;

}  // namespace coordgan::nets
