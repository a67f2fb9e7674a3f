#pragma once

// Training objectives. The perceptual distance runs over a frozen,
// seed-fixed random convolutional pyramid with channel-normalized feature
// differences, so the whole training stack is hermetic; a pretrained
// extractor can be substituted by constructing PerceptualT from external
// weights.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "coordgan/autodiff.hpp"
#include "coordgan/config.hpp"
#include "coordgan/coordspace.hpp"
#include "coordgan/nets.hpp"

namespace coordgan::losses {

template <class T>
using Var = ad::VarT<T>;

struct LossWeights {
    double lambda_t = 5.0;
    double lambda_s = 1.0;
    double lambda_warp = 5.0;
    double lambda_cham = 100.0;
    double lambda_gan = 2.0;
    double lambda_con = 10.0;
    double lambda_rec = 10.0;
    double lambda_bmlp = 1.0;

    static LossWeights from_config(const TrainConfig& c) {
        return {c.lambda_t, c.lambda_s, c.lambda_warp, c.lambda_cham,
                c.lambda_gan, c.lambda_con, c.lambda_rec, c.lambda_bmlp};
    }
};

// lambda_warp / lambda_t / lambda_s ramp linearly from zero over the warmup
// window; the chamfer and adversarial weights stay constant.
inline LossWeights warmup_weights(int64_t iter, const TrainConfig& cfg) {
    LossWeights w = LossWeights::from_config(cfg);
    const double s = cfg.warmup <= 0 ? 1.0 : std::min(1.0, double(iter) / double(cfg.warmup));
    w.lambda_warp *= s;
    w.lambda_t *= s;
    w.lambda_s *= s;
    return w;
}

// ------------------------------------------------ perceptual distance -----

template <class T>
struct PerceptualT {
    std::vector<TensorT<T>> weights;  // frozen conv kernels, [O,C,3,3]

    static PerceptualT create(uint64_t seed, int64_t base_channels) {
        PerceptualT p;
        Rng rng(seed);
        const int64_t chans[3] = {base_channels, base_channels * 2, base_channels * 3};
        int64_t in = 3;
        for (int l = 0; l < 3; ++l) {
            TensorT<T> w = TensorT<T>::randn({chans[l], in, 3, 3}, rng,
                                             T(std::sqrt(2.0 / double(in * 9))));
            p.weights.push_back(std::move(w));
            in = chans[l];
        }
        return p;
    }

    // Feature taps after each activation; pooling stops when the map gets small.
    std::vector<Var<T>> features(const Var<T>& x) const {
        std::vector<Var<T>> taps;
        Var<T> h = x;
        for (size_t l = 0; l < weights.size(); ++l) {
            h = ad::leaky_relu(ad::conv2d(h, Var<T>::constant(weights[l]), 1), T(0.2));
            taps.push_back(h);
            if (l + 1 < weights.size() && h.dim(2) >= 4 && h.dim(3) >= 4) h = ad::avgpool2(h);
        }
        return taps;
    }

    // Mean over layers of channel-normalized feature-difference energy.
    Var<T> distance(const Var<T>& x1, const Var<T>& x2) const {
        if (x1.shape() != x2.shape())
            throw std::invalid_argument("perceptual_distance: shape mismatch");
        std::vector<Var<T>> f1 = features(x1), f2 = features(x2);
        Var<T> total;
        for (size_t l = 0; l < f1.size(); ++l) {
            Var<T> n1 = channel_norm(f1[l]);
            Var<T> n2 = channel_norm(f2[l]);
            Var<T> sq = ad::square(ad::sub(n1, n2));
            // mean over batch and pixels of the per-pixel channel sum
            Var<T> d = ad::scale(ad::mean_all(sq), T(n1.dim(1)));
            total = total.defined() ? ad::add(total, d) : d;
        }
        return ad::scale(total, T(1.0 / double(f1.size())));
    }

private:
    static Var<T> channel_norm(const Var<T>& f) {
        Var<T> n2 = ad::sum_to(ad::square(f), Shape{f.dim(0), 1, f.dim(2), f.dim(3)});
        return ad::div(f, ad::broadcast_to(ad::sqrt(ad::add_scalar(n2, T(1e-8))), f.shape()));
    }
};

template <class T>
Var<T> perceptual_distance(const Var<T>& x1, const Var<T>& x2, const PerceptualT<T>& extractor) {
    return extractor.distance(x1, x2);
}

// ------------------------------------------------------- adversarial ------

// Non-saturating softplus forms: the generator term drives fake logits up,
// the discriminator term separates real from fake.
template <class T>
std::pair<Var<T>, Var<T>> gan_losses(const Var<T>& d_logits_real, const Var<T>& d_logits_fake) {
    Var<T> g = ad::mean_all(ad::softplus(ad::neg(d_logits_fake)));
    Var<T> d = ad::add(ad::mean_all(ad::softplus(ad::neg(d_logits_real))),
                       ad::mean_all(ad::softplus(d_logits_fake)));
    return {g, d};
}

// R1 = 0.5 * mean_n ||d logit_n / d x_n||^2. Exact second-order path: the
// input gradient is itself a graph node, so backpropagating the penalty
// reaches the discriminator parameters.
template <class T>
Var<T> r1_penalty(const std::function<Var<T>(const Var<T>&)>& disc, const TensorT<T>& real_batch) {
    Var<T> x = Var<T>::leaf(real_batch.clone(), /*requires_grad=*/true);
    Var<T> logits = disc(x);
    Var<T> s = ad::sum_all(logits);
    ad::Gradients<T> g = ad::backward(s);
    Var<T> gx = g[x];
    const int64_t N = real_batch.dim(0);
    return ad::scale(ad::sum_all(ad::square(gx)), T(0.5) / T(N));
}

// ------------------------------------------------------ paper losses ------

// Same structure code, two texture codes; perceptual distance between the
// two renders.
template <class T>
Var<T> texture_swap_loss(const nets::CoordGanModelT<T>& m, const Var<T>& z_s, const Var<T>& z_t1,
                         const Var<T>& z_t2, const PerceptualT<T>& perc) {
    auto o1 = nets::synthesize(m, z_s, z_t1);
    auto o2 = nets::synthesize(m, z_s, z_t2);
    return perc.distance(o1.image, o2.image);
}

struct CropRect {
    int64_t y = 0, x = 0, size = 0;
};

// Reference/query crop recipe: 8 reference crops, sides uniform in
// [res/8, res/4], resized to res/4.
template <class T>
std::vector<CropRect> sample_crops(int64_t res, int64_t count, Rng& rng) {
    std::vector<CropRect> crops;
    const int64_t lo = std::max<int64_t>(1, res / 8), hi = std::max<int64_t>(lo, res / 4);
    for (int64_t i = 0; i < count; ++i) {
        CropRect c;
        c.size = lo + int64_t(rng.below(uint64_t(hi - lo + 1)));
        c.y = int64_t(rng.below(uint64_t(res - c.size + 1)));
        c.x = int64_t(rng.below(uint64_t(res - c.size + 1)));
        crops.push_back(c);
    }
    return crops;
}

template <class T>
Var<T> extract_patch(const Var<T>& img, const CropRect& c, int64_t out_size) {
    Var<T> p = ad::slice(ad::slice(img, 2, c.y, c.size), 3, c.x, c.size);
    return ad::resize_bilinear(p, out_size, out_size);
}

template <class T>
struct PatchPairLoss {
    Var<T> g_term;  // -log sigma(fake logit)
    Var<T> d_term;  // -log sigma(real) - log(1 - sigma(fake))
    std::vector<CropRect> ref_crops, query_crops;
};

// Co-occurrence loss for one (texture-sharing) pair: refs from `img_a`,
// fake query from `img_b`, real query from `real_img`.
template <class T>
PatchPairLoss<T> structure_swap_pair(const nets::PatchDiscT<T>& pd, const Var<T>& img_a,
                                     const Var<T>& img_b, const Var<T>& real_img, Rng& rng) {
    const int64_t res = img_a.dim(2);
    const int64_t ps = pd.patch_size;
    PatchPairLoss<T> out;
    out.ref_crops = sample_crops<T>(res, 8, rng);
    out.query_crops = sample_crops<T>(res, 2, rng);  // fake query, real query
    std::vector<Var<T>> refs;
    for (const auto& c : out.ref_crops) refs.push_back(extract_patch(img_a, c, ps));
    Var<T> ref_feats = pd.features(ad::concat(refs, 0));
    Var<T> fake_q = pd.features(extract_patch(img_b, out.query_crops[0], ps));
    Var<T> fake_logit = pd.logit(ref_feats, fake_q);

    // Real pair: references and query from the same dataset image.
    std::vector<Var<T>> real_refs;
    auto real_crops = sample_crops<T>(res, 8, rng);
    for (const auto& c : real_crops) real_refs.push_back(extract_patch(real_img, c, ps));
    Var<T> real_ref_feats = pd.features(ad::concat(real_refs, 0));
    Var<T> real_q = pd.features(extract_patch(real_img, out.query_crops[1], ps));
    Var<T> real_logit = pd.logit(real_ref_feats, real_q);

    out.g_term = ad::mean_all(ad::softplus(ad::neg(fake_logit)));
    out.d_term = ad::add(ad::mean_all(ad::softplus(ad::neg(real_logit))),
                         ad::mean_all(ad::softplus(fake_logit)));
    return out;
}

// Spec-shaped entry: two structure codes, one texture code.
template <class T>
PatchPairLoss<T> structure_swap_loss(const nets::CoordGanModelT<T>& m, const Var<T>& z_s1,
                                     const Var<T>& z_s2, const Var<T>& z_t, const Var<T>& real_img,
                                     Rng& rng) {
    auto oa = nets::synthesize(m, z_s1, z_t);
    auto ob = nets::synthesize(m, z_s2, z_t);
    return structure_swap_pair(m.patch_disc, oa.image, ob.image, real_img, rng);
}

// Warp x1 into x2's frame via the soft correspondence, then compare
// perceptually. Per-sample inputs: images [1,3,H,W], coordinate rows [P,2].
template <class T>
Var<T> warp_pair_loss(const Var<T>& x1, const Var<T>& rows1, const Var<T>& x2, const Var<T>& rows2,
                      T tau, const PerceptualT<T>& perc) {
    const int64_t H = x1.dim(2), W = x1.dim(3);
    Var<T> src_pixels = ad::reshape(ad::permute(x1, {0, 2, 3, 1}), {H * W, 3});
    Var<T> warped_rows = ad::affinity_warp(rows2, rows1, src_pixels, tau);
    Var<T> warped = ad::permute(ad::reshape(warped_rows, {1, H, W, 3}), {0, 3, 1, 2});
    return perc.distance(warped, x2);
}

template <class T>
Var<T> warp_loss(const nets::CoordGanModelT<T>& m, const Var<T>& z_s1, const Var<T>& z_t1,
                 const Var<T>& z_s2, const Var<T>& z_t2, T tau, const PerceptualT<T>& perc) {
    auto o1 = nets::synthesize(m, z_s1, z_t1);
    auto o2 = nets::synthesize(m, z_s2, z_t2);
    return warp_pair_loss(o1.image, ad::reshape(o1.corr_rows, {o1.corr_rows.dim(1), 2}), o2.image,
                          ad::reshape(o2.corr_rows, {o2.corr_rows.dim(1), 2}), tau, perc);
}

// ------------------------------------------------- composite objectives ---

// Breakdown entries hold the weighted contributions (they sum to "total");
// "<name>_raw" entries hold the unweighted loss values.
using Breakdown = std::map<std::string, double>;

template <class T>
struct ObjectiveOut {
    Var<T> total;
    Breakdown breakdown;
};

// Paired-batch generator objective over one synthesized batch (N = B).
// The batch is arranged so adjacent pairs (2i, 2i+1) share structure and
// offset pairs (2i+1, 2i+2 mod B) share texture; warp pairs run round-robin
// (i, i+3 mod B).
template <class T>
ObjectiveOut<T> generator_objective(const nets::CoordGanModelT<T>& m,
                                    const nets::SynthOutT<T>& o, const TensorT<T>& real_images,
                                    const LossWeights& w, T tau, const PerceptualT<T>& perc,
                                    Rng& crop_rng, const TrainConfig& cfg) {
    const int64_t B = o.image.dim(0);
    const int64_t P = o.corr_rows.dim(1);
    ObjectiveOut<T> res;
    Var<T> total = Var<T>::constant(TensorT<T>::scalar(T(0)));

    auto add_term = [&](const std::string& name, const Var<T>& v, double lambda) {
        res.breakdown[name + "_raw"] = double(v.item());
        res.breakdown[name] = lambda * double(v.item());
        if (lambda != 0.0) total = ad::add(total, ad::scale(v, T(lambda)));
    };
    auto zero_term = [&](const std::string& name) {
        res.breakdown[name + "_raw"] = 0.0;
        res.breakdown[name] = 0.0;
    };
    auto img_at = [&](int64_t i) { return ad::slice(o.image, 0, i, 1); };
    auto rows_at = [&](int64_t i) {
        return ad::reshape(ad::slice(o.corr_rows, 0, i, 1), {P, 2});
    };

    // Texture swapping: pairs (0,1),(2,3),... share structure codes. The
    // stacked even/odd halves give the mean pair distance in one pass.
    if (cfg.use_texture_swap) {
        std::vector<Var<T>> evens, odds;
        for (int64_t i = 0; i + 1 < B; i += 2) {
            evens.push_back(img_at(i));
            odds.push_back(img_at(i + 1));
        }
        Var<T> lt = perc.distance(ad::concat(evens, 0), ad::concat(odds, 0));
        add_term("texture_swap", lt, w.lambda_t);
    } else {
        zero_term("texture_swap");
    }

    // Structure swapping: pairs (1,2),(3,4),...,(B-1,0) share texture codes.
    if (cfg.use_structure_swap) {
        Var<T> ls;
        for (int64_t i = 1; i < B; i += 2) {
            const int64_t j = (i + 1) % B;
            Var<T> real_img = ad::slice(Var<T>::constant(real_images), 0, i % real_images.dim(0), 1);
            auto pair = structure_swap_pair(m.patch_disc, img_at(i), img_at(j), real_img, crop_rng);
            ls = ls.defined() ? ad::add(ls, pair.g_term) : pair.g_term;
        }
        ls = ad::scale(ls, T(2.0 / double(B)));
        add_term("structure_swap", ls, w.lambda_s);
    } else {
        zero_term("structure_swap");
    }

    // Warp loss: round-robin pairs (i, i+3 mod B); x_i pulled into x_j's
    // frame, all pairs compared in one stacked perceptual pass.
    if (cfg.use_warp_loss) {
        std::vector<Var<T>> warped, targets;
        for (int64_t i = 0; i < B; ++i) {
            const int64_t j = (i + 3) % B;
            Var<T> src_pixels =
                ad::reshape(ad::permute(img_at(i), {0, 2, 3, 1}), {P, 3});
            Var<T> wr = ad::affinity_warp(rows_at(j), rows_at(i), src_pixels, tau);
            warped.push_back(ad::permute(
                ad::reshape(wr, {1, m.cfg.resolution, m.cfg.resolution, 3}), {0, 3, 1, 2}));
            targets.push_back(img_at(j));
        }
        Var<T> lw = perc.distance(ad::concat(warped, 0), ad::concat(targets, 0));
        add_term("warp", lw, w.lambda_warp);
    } else {
        zero_term("warp");
    }

    // Chamfer between the canonical frame and each warped frame.
    {
        Var<T> lc;
        Var<T> canon = m.canonical_const();
        for (int64_t i = 0; i < B; ++i) {
            Var<T> c = coords::chamfer_var(canon, rows_at(i));
            lc = lc.defined() ? ad::add(lc, c) : c;
        }
        lc = ad::scale(lc, T(1.0 / double(B)));
        add_term("chamfer", lc, w.lambda_cham);
    }

    // Adversarial term on all synthesized images.
    {
        Var<T> logits = m.image_disc.forward(o.image);
        Var<T> g = ad::mean_all(ad::softplus(ad::neg(logits)));
        add_term("gan", g, w.lambda_gan);
    }

    // Backward-MLP supervision (variant): L1 between the recovered canonical
    // frame and the true canonical frame. Inputs are gradient-stopped so the
    // B-MLP observes, rather than steers, the warp.
    if (m.backward_mlp) {
        Var<T> rows_all = ad::stop_gradient(ad::reshape(o.corr_rows, {B * P, 2}));
        Var<T> ws_all = ad::stop_gradient(o.w_s);
        Var<T> back = m.backward_mlp->forward_rows(ad::concat<T>(
            {rows_all,
             ad::reshape(ad::broadcast_to(ad::reshape(ws_all, {B, 1, ws_all.dim(1)}),
                                          {B, P, ws_all.dim(1)}),
                         {B * P, ws_all.dim(1)})},
            1));
        Var<T> canon_tiled = ad::broadcast_to(
            ad::reshape(m.canonical_const(), {1, P, 2}), {B, P, 2});
        Var<T> lb = ad::l1(ad::reshape(back, {B, P, 2}), canon_tiled);
        add_term("bmlp", lb, w.lambda_bmlp);
    }

    res.breakdown["total"] = double(total.item());
    res.total = total;
    return res;
}

// Discriminator-side objective: image and patch discriminator terms, plus
// lazily-scheduled R1 penalties. `fakes` must already be gradient-free.
template <class T>
ObjectiveOut<T> discriminator_objective(const nets::CoordGanModelT<T>& m, const TensorT<T>& fakes,
                                        const TensorT<T>& reals, bool apply_r1,
                                        const TrainConfig& cfg, Rng& crop_rng) {
    ObjectiveOut<T> res;
    Var<T> total = Var<T>::constant(TensorT<T>::scalar(T(0)));
    const int64_t B = fakes.dim(0);
    const int64_t ps = m.patch_disc.patch_size;

    // Image discriminator.
    {
        Var<T> logit_real = m.image_disc.forward(Var<T>::constant(reals));
        Var<T> logit_fake = m.image_disc.forward(Var<T>::constant(fakes));
        Var<T> d = ad::add(ad::mean_all(ad::softplus(ad::neg(logit_real))),
                           ad::mean_all(ad::softplus(logit_fake)));
        res.breakdown["d_img"] = double(d.item());
        total = ad::add(total, d);
    }

    // Patch discriminator over texture-sharing fake pairs (i, i+1 mod B for
    // odd i) against same-image real pairs.
    {
        Var<T> d;
        Var<T> fakes_v = Var<T>::constant(fakes);
        Var<T> reals_v = Var<T>::constant(reals);
        for (int64_t i = 1; i < B; i += 2) {
            const int64_t j = (i + 1) % B;
            auto pair = structure_swap_pair(m.patch_disc, ad::slice(fakes_v, 0, i, 1),
                                            ad::slice(fakes_v, 0, j, 1),
                                            ad::slice(reals_v, 0, i % reals.dim(0), 1), crop_rng);
            d = d.defined() ? ad::add(d, pair.d_term) : pair.d_term;
        }
        d = ad::scale(d, T(2.0 / double(B)));
        res.breakdown["d_patch"] = double(d.item());
        total = ad::add(total, d);
    }

    // Lazy R1: applied every r1_interval steps with compensating weight.
    if (apply_r1) {
        const double k = double(cfg.r1_interval);
        Var<T> r1_img = r1_penalty<T>([&](const Var<T>& x) { return m.image_disc.forward(x); }, reals);
        res.breakdown["r1_img_raw"] = double(r1_img.item());
        res.breakdown["r1_img"] = cfg.r1_gamma_img * k * double(r1_img.item());
        total = ad::add(total, ad::scale(r1_img, T(cfg.r1_gamma_img * k)));

        // Patch R1 w.r.t. the query patch input of a real pair.
        auto crops = sample_crops<T>(cfg.resolution, 9, crop_rng);
        Var<T> reals_v = Var<T>::constant(reals);
        std::vector<Var<T>> refs;
        for (int64_t c = 0; c < 8; ++c)
            refs.push_back(extract_patch(ad::slice(reals_v, 0, 0, 1), crops[size_t(c)], ps));
        Var<T> ref_feats = ad::stop_gradient(m.patch_disc.features(ad::concat(refs, 0)));
        TensorT<T> qpatch =
            extract_patch(ad::slice(reals_v, 0, 0, 1), crops[8], ps).value().clone();
        Var<T> r1_patch = r1_penalty<T>(
            [&](const Var<T>& q) { return m.patch_disc.logit(ref_feats, m.patch_disc.features(q)); },
            qpatch);
        res.breakdown["r1_patch_raw"] = double(r1_patch.item());
        res.breakdown["r1_patch"] = cfg.r1_gamma_patch * k * double(r1_patch.item());
        total = ad::add(total, ad::scale(r1_patch, T(cfg.r1_gamma_patch * k)));
    } else {
        res.breakdown["r1_img"] = 0.0;
        res.breakdown["r1_patch"] = 0.0;
    }

    res.breakdown["total"] = double(total.item());
    res.total = total;
    return res;
}

template <class T>
struct EncoderObjectiveOut {
    Var<T> total;
    Breakdown breakdown;
    double consistency_value = 0;  // unweighted, for probes
};

// Encoder objective: latent consistency on synthesized inputs, L1+perceptual
// reconstruction of real inputs, and a texture-swap term through the frozen
// generator. Targets and synthesized inputs are gradient-stopped; generator
// parameters receive no update (the encoder optimizer owns only encoder
// parameters).
template <class T>
EncoderObjectiveOut<T> encoder_objective(const nets::CoordGanModelT<T>& m,
                                         const TensorT<T>& real_batch, const Var<T>& z_s,
                                         const Var<T>& z_t, const LossWeights& w,
                                         const PerceptualT<T>& perc, Rng& rng) {
    EncoderObjectiveOut<T> res;
    Var<T> total = Var<T>::constant(TensorT<T>::scalar(T(0)));
    const int64_t H = m.cfg.resolution, W = m.cfg.resolution;

    // Latent consistency on synthesized images.
    auto synth = nets::synthesize(m, ad::stop_gradient(z_s), ad::stop_gradient(z_t));
    Var<T> x_f = ad::stop_gradient(synth.image);
    Var<T> target_ws = ad::stop_gradient(synth.w_s);
    Var<T> target_rows = ad::stop_gradient(synth.corr_rows);
    auto enc_f = m.encoder.forward(x_f);
    Var<T> enc_rows = m.warp_mlp.forward(m.canonical_const(), enc_f.w_s);
    Var<T> l_con = ad::add(ad::mse(enc_f.w_s, target_ws), ad::mse(enc_rows, target_rows));
    res.consistency_value = double(l_con.item());
    res.breakdown["consistency_raw"] = res.consistency_value;
    res.breakdown["consistency"] = w.lambda_con * res.consistency_value;
    total = ad::add(total, ad::scale(l_con, T(w.lambda_con)));

    // Reconstruction of real inputs (through the frozen generator).
    Var<T> x_r = Var<T>::constant(real_batch);
    auto enc_r = m.encoder.forward(x_r);
    Var<T> rows_r = m.warp_mlp.forward(m.canonical_const(), enc_r.w_s);
    Var<T> maps_r = nets::rows_to_nchw(rows_r, H, W);
    Var<T> x_hat = m.generator.forward(maps_r, enc_r.w_t_layers);
    Var<T> l_rec = ad::add(ad::l1(x_hat, x_r), perc.distance(x_hat, x_r));
    res.breakdown["reconstruction_raw"] = double(l_rec.item());
    res.breakdown["reconstruction"] = w.lambda_rec * double(l_rec.item());
    total = ad::add(total, ad::scale(l_rec, T(w.lambda_rec)));

    // Texture swap through the encoded structure: reconstruction vs. a
    // re-render with a fresh texture code.
    {
        const int64_t N = x_r.dim(0), D = m.cfg.latent_dim;
        TensorT<T> z2 = TensorT<T>::randn({N, D}, rng);
        Var<T> w_t2 = m.texture_mapper.forward(Var<T>::constant(z2));
        Var<T> x_swap = m.generator.forward(maps_r, m.generator.broadcast_style(w_t2));
        Var<T> l_t = perc.distance(x_hat, x_swap);
        res.breakdown["texture_swap_raw"] = double(l_t.item());
        res.breakdown["texture_swap"] = w.lambda_t * double(l_t.item());
        total = ad::add(total, ad::scale(l_t, T(w.lambda_t)));
    }

    res.breakdown["total"] = double(total.item());
    res.total = total;
    return res;
}

using Perceptual = PerceptualT<real>;

}  // namespace coordgan::losses
