#include "coordgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "coordgan/image_io.hpp"
#include "coordgan/train.hpp"

using nlohmann::json;

namespace coordgan::eval {

IouResult iou(const coords::SegMask& pred, const coords::SegMask& gt, int32_t num_classes) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("iou: dimension mismatch");
    IouResult r;
    r.per_class.assign(size_t(num_classes), 0.0);
    r.class_present.assign(size_t(num_classes), false);
    std::vector<int64_t> inter(size_t(num_classes), 0), uni(size_t(num_classes), 0);
    const int32_t* p = pred.labels.data();
    const int32_t* g = gt.labels.data();
    for (int64_t i = 0, n = pred.labels.numel(); i < n; ++i) {
        if (p[i] == g[i]) {
            ++inter[size_t(p[i])];
            ++uni[size_t(p[i])];
        } else {
            ++uni[size_t(p[i])];
            ++uni[size_t(g[i])];
        }
    }
    double sum = 0;
    int present = 0;
    for (int32_t c = 0; c < num_classes; ++c) {
        if (uni[size_t(c)] == 0) continue;
        r.class_present[size_t(c)] = true;
        r.per_class[size_t(c)] = double(inter[size_t(c)]) / double(uni[size_t(c)]);
        sum += r.per_class[size_t(c)];
        ++present;
    }
    r.mean = present ? sum / present : 0.0;
    return r;
}

coords::CoordinateMap encode_map(const nets::CoordGanModel& model, const Tensor& image_nchw) {
    auto enc = model.encoder.forward(ad::Var::constant(image_nchw));
    auto rows = model.warp_mlp.forward(model.canonical_const(), enc.w_s);
    const int64_t H = model.cfg.resolution, W = model.cfg.resolution;
    Tensor hw2 = rows.value().reshaped({H, W, 2}).clone();
    return coords::CoordinateMap(H, W, std::move(hw2));
}

IouReport eval_label_propagation_with(const MapFn& map_fn, const std::vector<data::Sample>& dataset,
                                      const TrainConfig& cfg, uint64_t seed) {
    if (dataset.empty()) throw std::invalid_argument("label propagation: empty dataset");
    const int64_t n = int64_t(dataset.size());
    const int64_t runs = cfg.prop_runs;
    const int64_t queries = std::min<int64_t>(cfg.prop_queries, n - 1);
    Rng rng(seed);
    IouReport rep;
    rep.runs = runs;
    rep.queries = queries;
    rep.tau = cfg.tau;
    const int32_t K = data::kNumClasses;
    std::vector<double> class_sum(size_t(K), 0.0);
    std::vector<int64_t> class_cnt(size_t(K), 0);
    for (int64_t run = 0; run < runs; ++run) {
        const int64_t ref_id = int64_t(rng.below(uint64_t(n)));
        rep.reference_ids.push_back(ref_id);
        coords::CoordinateMap c_ref = map_fn(dataset[size_t(ref_id)], ref_id);
        // queries: seeded distinct picks, excluding the reference
        std::vector<int64_t> pool(static_cast<size_t>(n), 0);
        std::iota(pool.begin(), pool.end(), 0);
        pool.erase(pool.begin() + ref_id);
        for (int64_t i = int64_t(pool.size()) - 1; i > 0; --i)
            std::swap(pool[size_t(i)], pool[size_t(rng.below(uint64_t(i + 1)))]);
        double run_sum = 0;
        for (int64_t q = 0; q < queries; ++q) {
            const data::Sample& qs = dataset[size_t(pool[size_t(q)])];
            coords::CoordinateMap c_q = map_fn(qs, pool[size_t(q)]);
            coords::SegMask pred =
                coords::propagate_labels(dataset[size_t(ref_id)].mask, c_ref, c_q, real(cfg.tau));
            IouResult r = iou(pred, qs.mask, K);
            run_sum += r.mean;
            for (int32_t c = 0; c < K; ++c)
                if (r.class_present[size_t(c)]) {
                    class_sum[size_t(c)] += r.per_class[size_t(c)];
                    ++class_cnt[size_t(c)];
                }
        }
        rep.run_means.push_back(run_sum / double(queries));
    }
    rep.mean = std::accumulate(rep.run_means.begin(), rep.run_means.end(), 0.0) / double(runs);
    rep.per_class_mean.assign(size_t(K), 0.0);
    for (int32_t c = 0; c < K; ++c)
        if (class_cnt[size_t(c)]) rep.per_class_mean[size_t(c)] = class_sum[size_t(c)] / class_cnt[size_t(c)];
    return rep;
}

IouReport eval_label_propagation(const nets::CoordGanModel& model,
                                 const std::vector<data::Sample>& dataset, const TrainConfig& cfg,
                                 uint64_t seed) {
    // Encoded maps are cached per sample index across runs.
    std::vector<coords::CoordinateMap> cache(dataset.size());
    std::vector<bool> have(dataset.size(), false);
    MapFn fn = [&](const data::Sample& s, int64_t idx) {
        if (!have[size_t(idx)]) {
            cache[size_t(idx)] = encode_map(model, train::hwc_to_nchw1(s.image));
            have[size_t(idx)] = true;
        }
        return cache[size_t(idx)];
    };
    return eval_label_propagation_with(fn, dataset, cfg, seed);
}

BaselineIou permutation_baseline_iou(const std::vector<data::Sample>& dataset,
                                     const TrainConfig& cfg, uint64_t seed, int64_t trials) {
    BaselineIou b;
    b.trials = trials;
    std::vector<double> vals;
    for (int64_t t = 0; t < trials; ++t) {
        Rng trial_rng(seed ^ (0x517cc1b727220a95ull * uint64_t(t + 1)));
        const uint64_t map_seed = trial_rng.next_u64();
        MapFn fn = [&](const data::Sample& s, int64_t idx) {
            Rng r(map_seed ^ (0xd1342543de82ef95ull * uint64_t(idx + 1)));
            TensorT<real> v = TensorT<real>::rand_uniform({s.mask.height, s.mask.width, 2}, r,
                                                          real(-1), real(1));
            return coords::CoordinateMap(s.mask.height, s.mask.width, std::move(v));
        };
        vals.push_back(eval_label_propagation_with(fn, dataset, cfg, trial_rng.next_u64()).mean);
    }
    b.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / double(vals.size());
    double var = 0;
    for (double v : vals) var += (v - b.mean) * (v - b.mean);
    b.stddev = vals.size() > 1 ? std::sqrt(var / double(vals.size() - 1)) : 0.0;
    const double half = 1.96 * b.stddev / std::sqrt(double(vals.size()));
    b.lo95 = b.mean - half;
    b.hi95 = b.mean + half;
    return b;
}

// --------------------------------------------------------------------------

double coordinate_bin_color_distance(const TensorT<real>& img1_hwc,
                                     const coords::CoordinateMap& map1,
                                     const TensorT<real>& img2_hwc,
                                     const coords::CoordinateMap& map2) {
    constexpr int kGrid = 4;
    auto bin_means = [&](const TensorT<real>& img, const coords::CoordinateMap& map,
                         std::vector<std::array<double, 3>>& mean, std::vector<int64_t>& count) {
        mean.assign(kGrid * kGrid, {0, 0, 0});
        count.assign(kGrid * kGrid, 0);
        const real* px = img.data();
        for (int64_t i = 0; i < map.height; ++i)
            for (int64_t j = 0; j < map.width; ++j) {
                const real x = map.x_at(i, j), y = map.y_at(i, j);
                const int bx = std::min(kGrid - 1, int((x + 1) * 0.5 * kGrid));
                const int by = std::min(kGrid - 1, int((y + 1) * 0.5 * kGrid));
                const size_t cell = size_t(by * kGrid + bx);
                for (int c = 0; c < 3; ++c) mean[cell][size_t(c)] += double(px[(i * map.width + j) * 3 + c]);
                ++count[cell];
            }
        for (size_t cell = 0; cell < mean.size(); ++cell)
            if (count[cell])
                for (int c = 0; c < 3; ++c) mean[cell][size_t(c)] /= double(count[cell]);
    };
    std::vector<std::array<double, 3>> m1, m2;
    std::vector<int64_t> c1, c2;
    bin_means(img1_hwc, map1, m1, c1);
    bin_means(img2_hwc, map2, m2, c2);
    double sum = 0;
    int64_t cells = 0;
    for (size_t cell = 0; cell < m1.size(); ++cell) {
        if (!c1[cell] || !c2[cell]) continue;
        double d2 = 0;
        for (int c = 0; c < 3; ++c) {
            const double d = m1[cell][size_t(c)] - m2[cell][size_t(c)];
            d2 += d * d;
        }
        sum += std::sqrt(d2);
        ++cells;
    }
    return cells ? sum / double(cells) : 0.0;
}

namespace {

struct GenPair {
    TensorT<real> img_hwc[2];
    coords::CoordinateMap map[2];
    Tensor img_nchw[2];
};

GenPair generate_pair(const nets::CoordGanModel& m, const Tensor& z_s2, const Tensor& z_t2) {
    auto out = nets::synthesize(m, ad::Var::constant(z_s2), ad::Var::constant(z_t2));
    GenPair p;
    const int64_t H = m.cfg.resolution, W = m.cfg.resolution;
    for (int i = 0; i < 2; ++i) {
        p.img_nchw[i] = kern::slice_axis(out.image.value(), 0, i, 1).clone();
        p.img_hwc[i] = train::nchw1_to_hwc(p.img_nchw[i]);
        Tensor rows = kern::slice_axis(out.corr_rows.value(), 0, i, 1).reshaped({H, W, 2}).clone();
        p.map[i] = coords::CoordinateMap(H, W, std::move(rows));
    }
    return p;
}

}  // namespace

SwapReport eval_swap_consistency(const nets::CoordGanModel& model, int64_t n_pairs,
                                 const TrainConfig& cfg, uint64_t seed) {
    SwapReport rep;
    rep.pairs = n_pairs;
    auto perc = losses::Perceptual::create(cfg.perceptual_seed, cfg.perceptual_channels);
    Rng rng(seed);
    const int64_t D = cfg.latent_dim;
    double tex_sum = 0, ind_perc_sum = 0, struct_sum = 0, ind_color_sum = 0;
    for (int64_t i = 0; i < n_pairs; ++i) {
        // texture swap: shared structure code
        {
            Tensor zs = Tensor::randn({1, D}, rng);
            Tensor zs2({2, D});
            std::copy(zs.data(), zs.data() + D, zs2.data());
            std::copy(zs.data(), zs.data() + D, zs2.data() + D);
            Tensor zt2 = Tensor::randn({2, D}, rng);
            GenPair p = generate_pair(model, zs2, zt2);
            tex_sum += double(perc.distance(ad::Var::constant(p.img_nchw[0]),
                                            ad::Var::constant(p.img_nchw[1]))
                                  .item());
        }
        // independent control (both metrics measured on the same pairs)
        {
            Tensor zs2 = Tensor::randn({2, D}, rng);
            Tensor zt2 = Tensor::randn({2, D}, rng);
            GenPair p = generate_pair(model, zs2, zt2);
            ind_perc_sum += double(perc.distance(ad::Var::constant(p.img_nchw[0]),
                                                 ad::Var::constant(p.img_nchw[1]))
                                       .item());
            ind_color_sum +=
                coordinate_bin_color_distance(p.img_hwc[0], p.map[0], p.img_hwc[1], p.map[1]);
        }
        // structure swap: shared texture code
        {
            Tensor zt = Tensor::randn({1, D}, rng);
            Tensor zt2({2, D});
            std::copy(zt.data(), zt.data() + D, zt2.data());
            std::copy(zt.data(), zt.data() + D, zt2.data() + D);
            Tensor zs2 = Tensor::randn({2, D}, rng);
            GenPair p = generate_pair(model, zs2, zt2);
            struct_sum +=
                coordinate_bin_color_distance(p.img_hwc[0], p.map[0], p.img_hwc[1], p.map[1]);
        }
    }
    rep.texture_swap_perceptual = tex_sum / double(n_pairs);
    rep.independent_perceptual = ind_perc_sum / double(n_pairs);
    rep.structure_swap_color = struct_sum / double(n_pairs);
    rep.independent_color = ind_color_sum / double(n_pairs);
    rep.texture_ratio =
        rep.independent_perceptual > 0 ? rep.texture_swap_perceptual / rep.independent_perceptual : 0;
    rep.structure_ratio =
        rep.independent_color > 0 ? rep.structure_swap_color / rep.independent_color : 0;
    return rep;
}

// --------------------------------------------------------------------------

namespace {
void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    rgb[0] = r + m;
    rgb[1] = g + m;
    rgb[2] = b + m;
}
}  // namespace

TensorT<real> colorize_map(const coords::CoordinateMap& map) {
    TensorT<real> out({map.height, map.width, 3});
    for (int64_t i = 0; i < map.height; ++i)
        for (int64_t j = 0; j < map.width; ++j) {
            const double x = map.x_at(i, j), y = map.y_at(i, j);
            const double h = (std::atan2(y, x) + 3.14159265358979323846) / (2 * 3.14159265358979323846);
            const double s = std::min(1.0, std::sqrt(x * x + y * y) / std::sqrt(2.0));
            double rgb[3];
            hsv_to_rgb(std::min(h, 0.999999), s, 1.0, rgb);
            for (int c = 0; c < 3; ++c)
                out[(i * map.width + j) * 3 + c] = real(rgb[c] * 2.0 - 1.0);
        }
    return out;
}

TensorT<real> generate_hwc(const nets::CoordGanModel& model, uint64_t structure_seed,
                           uint64_t texture_seed) {
    Rng rs(structure_seed), rt(texture_seed);
    Tensor z_s = Tensor::randn({1, model.cfg.latent_dim}, rs);
    Tensor z_t = Tensor::randn({1, model.cfg.latent_dim}, rt);
    auto out = nets::synthesize(model, ad::Var::constant(z_s), ad::Var::constant(z_t));
    TensorT<real> hwc = train::nchw1_to_hwc(out.image.value());
    for (int64_t i = 0; i < hwc.numel(); ++i) hwc[i] = std::clamp(hwc[i], real(-1), real(1));
    return hwc;
}

coords::CoordinateMap generate_map(const nets::CoordGanModel& model, uint64_t structure_seed) {
    Rng rs(structure_seed);
    Tensor z_s = Tensor::randn({1, model.cfg.latent_dim}, rs);
    auto w_s = model.structure_mapper.forward(ad::Var::constant(z_s));
    auto rows = model.warp_from_code(w_s);
    const int64_t H = model.cfg.resolution, W = model.cfg.resolution;
    return coords::CoordinateMap(H, W, rows.value().reshaped({H, W, 2}).clone());
}

void render_grid(const nets::CoordGanModel& model, const std::vector<uint64_t>& structure_seeds,
                 const std::vector<uint64_t>& texture_seeds, const std::string& out_path) {
    const int64_t H = model.cfg.resolution, W = model.cfg.resolution;
    const int64_t R = int64_t(structure_seeds.size());
    const int64_t C = int64_t(texture_seeds.size());
    TensorT<real> grid({R * H, (C + 1) * W, 3});
    auto paste = [&](const TensorT<real>& tile, int64_t r, int64_t c) {
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j)
                for (int k = 0; k < 3; ++k)
                    grid[((r * H + i) * (C + 1) * W + c * W + j) * 3 + k] = tile[(i * W + j) * 3 + k];
    };
    for (int64_t r = 0; r < R; ++r) {
        paste(colorize_map(generate_map(model, structure_seeds[size_t(r)])), r, 0);
        for (int64_t c = 0; c < C; ++c)
            paste(generate_hwc(model, structure_seeds[size_t(r)], texture_seeds[size_t(c)]), r, c + 1);
    }
    img::write_png_rgb(out_path, img::from_float_hwc(grid.cast<float>()));
}

// --------------------------------------------------------------------------

std::string IouReport::to_json() const {
    json j;
    j["mean_iou"] = mean;
    j["run_means"] = run_means;
    j["per_class_mean"] = per_class_mean;
    j["reference_ids"] = reference_ids;
    j["runs"] = runs;
    j["queries_per_run"] = queries;
    j["tau"] = tau;
    return j.dump(2);
}

std::string IouReport::to_table() const {
    std::ostringstream os;
    os << "label propagation (" << runs << " runs x " << queries << " queries, tau=" << tau << ")\n";
    for (size_t r = 0; r < run_means.size(); ++r)
        os << "  run " << r << " (ref " << reference_ids[r] << "): mean IOU " << run_means[r] << "\n";
    os << "  per-class:";
    for (double v : per_class_mean) os << " " << v;
    os << "\n  averaged mean IOU: " << mean << "\n";
    return os.str();
}

std::string SwapReport::to_json() const {
    json j;
    j["pairs"] = pairs;
    j["texture_swap_perceptual"] = texture_swap_perceptual;
    j["independent_perceptual"] = independent_perceptual;
    j["texture_ratio"] = texture_ratio;
    j["structure_swap_color"] = structure_swap_color;
    j["independent_color"] = independent_color;
    j["structure_ratio"] = structure_ratio;
    return j.dump(2);
}

std::string SwapReport::to_table() const {
    std::ostringstream os;
    os << "swap consistency over " << pairs << " pairs\n"
       << "  texture swap perceptual:  " << texture_swap_perceptual << " (control "
       << independent_perceptual << ", ratio " << texture_ratio << ")\n"
       << "  structure swap color:     " << structure_swap_color << " (control "
       << independent_color << ", ratio " << structure_ratio << ")\n";
    return os.str();
}

}  // namespace coordgan::eval
