#pragma once

// Measurement protocols: label-propagation IOU (5 seeded reference runs,
// averaged), swap-consistency metrics with independent-pair controls, and
// qualitative grid rendering. Everything is read-only over checkpoints and
// deterministic given (checkpoint, dataset, seed).

#include <functional>
#include <string>
#include <vector>

#include "coordgan/coordspace.hpp"
#include "coordgan/data.hpp"
#include "coordgan/losses.hpp"
#include "coordgan/nets.hpp"

namespace coordgan::eval {

struct IouResult {
    std::vector<double> per_class;     // valid where class_present
    std::vector<bool> class_present;   // union non-empty
    double mean = 0;                   // over present classes
};

// Per class c: |pred=c AND gt=c| / |pred=c OR gt=c|; empty-union classes are
// excluded from the mean.
IouResult iou(const coords::SegMask& pred, const coords::SegMask& gt, int32_t num_classes);

struct IouReport {
    double mean = 0;                      // averaged over runs
    std::vector<double> run_means;        // one per reference run
    std::vector<double> per_class_mean;   // averaged over (run, query) where defined
    std::vector<int64_t> reference_ids;
    int64_t runs = 0;
    int64_t queries = 0;
    double tau = 0;

    std::string to_json() const;
    std::string to_table() const;
};

// Produces a correspondence map for a sample; swapping in a stub makes the
// protocol testable without a trained encoder.
using MapFn = std::function<coords::CoordinateMap(const data::Sample&, int64_t index)>;

IouReport eval_label_propagation_with(const MapFn& map_fn, const std::vector<data::Sample>& dataset,
                                      const TrainConfig& cfg, uint64_t seed);

// Encoder-backed protocol: encode reference and queries, propagate the
// reference mask, score against ground truth.
IouReport eval_label_propagation(const nets::CoordGanModel& model,
                                 const std::vector<data::Sample>& dataset, const TrainConfig& cfg,
                                 uint64_t seed);

coords::CoordinateMap encode_map(const nets::CoordGanModel& model, const Tensor& image_nchw);

struct BaselineIou {
    double mean = 0, stddev = 0, lo95 = 0, hi95 = 0;
    int64_t trials = 0;
};

// Null model: propagation through uniform-random coordinate maps. Bounds
// what label-frequency transfer alone achieves.
BaselineIou permutation_baseline_iou(const std::vector<data::Sample>& dataset,
                                     const TrainConfig& cfg, uint64_t seed, int64_t trials);

struct SwapReport {
    int64_t pairs = 0;
    double texture_swap_perceptual = 0;   // shared structure, varied texture
    double independent_perceptual = 0;    // fully independent control
    double texture_ratio = 0;
    double structure_swap_color = 0;      // shared texture, varied structure
    double independent_color = 0;         // control on the same metric
    double structure_ratio = 0;

    std::string to_json() const;
    std::string to_table() const;
};

// Texture-swap structural distance (perceptual) and structure-swap texture
// distance (per-part color statistics over coordinate-space bins), each
// reported with its independent-pair control.
SwapReport eval_swap_consistency(const nets::CoordGanModel& model, int64_t n_pairs,
                                 const TrainConfig& cfg, uint64_t seed);

// Per-part color statistic: mean RGB per occupied 4x4 coordinate-space cell.
// Distance between two images = mean L2 over cells occupied in both.
double coordinate_bin_color_distance(const TensorT<real>& img1_hwc,
                                     const coords::CoordinateMap& map1,
                                     const TensorT<real>& img2_hwc,
                                     const coords::CoordinateMap& map2);

// Fixed bijective coordinate->color mapping: hue from atan2(y,x), saturation
// from radius/sqrt(2), value 1. Output [H,W,3] in [-1,1].
TensorT<real> colorize_map(const coords::CoordinateMap& map);

// Rows share structure, columns share texture; the first column holds the
// color-coded correspondence map of the row's structure.
void render_grid(const nets::CoordGanModel& model, const std::vector<uint64_t>& structure_seeds,
                 const std::vector<uint64_t>& texture_seeds, const std::string& out_path);

// Generated image for seed-derived codes, clamped HWC.
TensorT<real> generate_hwc(const nets::CoordGanModel& model, uint64_t structure_seed,
                           uint64_t texture_seed);
coords::CoordinateMap generate_map(const nets::CoordGanModel& model, uint64_t structure_seed);

}  // namespace coordgan::eval
