#pragma once

// Coordinate-frame math: canonical maps, hard/soft correspondence transfer,
// cross-image warping, chamfer distance, and label propagation. Everything
// here is a pure function of its inputs.
//
// Conventions (also documented in docs/config.md):
//   - Coordinates are stored (x, y), x horizontal. Pixel (row i, col j) of an
//     H x W map normalizes to x = 2j/(W-1) - 1, y = 2i/(H-1) - 1.
//   - A coordinate map is an [H, W, 2] tensor; reshaping to [H*W, 2] yields
//     row-major pixel rows.
//   - Images at this layer are [H, W, C] in [-1, 1].

#include <cstdint>
#include <string>
#include <vector>

#include "coordgan/autodiff.hpp"
#include "coordgan/kernels.hpp"
#include "coordgan/tensor.hpp"

namespace coordgan::coords {

template <class T>
struct CoordinateMapT {
    int64_t height = 0;
    int64_t width = 0;
    TensorT<T> values;  // [H, W, 2], each component in [-1, 1]

    CoordinateMapT() = default;
    CoordinateMapT(int64_t h, int64_t w, TensorT<T> v) : height(h), width(w), values(std::move(v)) {
        if (values.shape() != Shape{h, w, 2})
            throw std::invalid_argument("CoordinateMap: values must be [H,W,2], got " +
                                        shape_str(values.shape()));
        validate_range();
    }

    void validate_range() const {
        const T* p = values.data();
        for (int64_t i = 0, n = values.numel(); i < n; ++i)
            if (!(p[i] >= T(-1) && p[i] <= T(1)))
                throw std::invalid_argument("CoordinateMap: component outside [-1,1]");
    }

    int64_t pixels() const { return height * width; }
    // [H*W, 2] view of the same storage.
    TensorT<T> pixel_rows() const { return values.reshaped({height * width, 2}); }
    T x_at(int64_t i, int64_t j) const { return values[(i * width + j) * 2]; }
    T y_at(int64_t i, int64_t j) const { return values[(i * width + j) * 2 + 1]; }
};

template <class T>
struct AffinityMatrixT {
    int64_t rows = 0;  // target pixels
    int64_t cols = 0;  // source pixels
    TensorT<T> weights;  // row-stochastic, nonnegative

    void validate() const {
        const T* p = weights.data();
        for (int64_t r = 0; r < rows; ++r) {
            T s = 0;
            for (int64_t c = 0; c < cols; ++c) {
                if (p[r * cols + c] < T(0))
                    throw std::runtime_error("AffinityMatrix: negative weight");
                s += p[r * cols + c];
            }
            if (std::abs(double(s) - 1.0) > 1e-6)
                throw std::runtime_error("AffinityMatrix: row does not sum to 1");
        }
    }
};

struct SegMask {
    int64_t height = 0;
    int64_t width = 0;
    int32_t num_classes = 0;
    TensorT<int32_t> labels;  // [H, W], values in [0, num_classes)

    void validate() const {
        const int32_t* p = labels.data();
        for (int64_t i = 0, n = labels.numel(); i < n; ++i)
            if (p[i] < 0 || p[i] >= num_classes)
                throw std::invalid_argument("SegMask: label out of range");
    }
};

using CoordinateMap = CoordinateMapT<real>;
using AffinityMatrix = AffinityMatrixT<real>;

// --------------------------------------------------------------------------

template <class T>
CoordinateMapT<T> make_canonical(int64_t height, int64_t width) {
    if (height < 2 || width < 2)
        throw std::invalid_argument("make_canonical: dimensions must be >= 2");
    TensorT<T> v({height, width, 2});
    T* p = v.data();
    for (int64_t i = 0; i < height; ++i) {
        const T y = T(2) * T(i) / T(height - 1) - T(1);
        for (int64_t j = 0; j < width; ++j) {
            const T x = T(2) * T(j) / T(width - 1) - T(1);
            p[(i * width + j) * 2] = x;
            p[(i * width + j) * 2 + 1] = y;
        }
    }
    return CoordinateMapT<T>(height, width, std::move(v));
}

// For each pixel of c1, the row-major index of the closest pixel of c2
// (squared Euclidean distance; ties to the smallest index). Row blocks keep
// memory bounded for large maps.
template <class T>
std::vector<int64_t> hard_transfer(const CoordinateMapT<T>& c1, const CoordinateMapT<T>& c2) {
    const int64_t Q = c1.pixels(), P = c2.pixels();
    if (Q == 0 || P == 0) throw std::invalid_argument("hard_transfer: empty map");
    std::vector<int64_t> out(static_cast<size_t>(Q), 0);
    const int64_t block = std::max<int64_t>(1, std::min<int64_t>(Q, (1 << 22) / std::max<int64_t>(P, 1)));
    TensorT<T> dist({block, P});
    std::vector<T> vals(static_cast<size_t>(block), T(0));
    for (int64_t q0 = 0; q0 < Q; q0 += block) {
        const int64_t qn = std::min(block, Q - q0);
        kern::pairwise_sqdist(c1.pixel_rows().data() + q0 * 2, c2.pixel_rows().data(), dist.data(),
                              qn, P, 2);
        kern::reduce_min_rows(dist.data(), vals.data(), out.data() + q0, qn, P);
    }
    return out;
}

// Row-stochastic soft relaxation: weights(q,p) = softmax_p(-||ct_q - cs_p||^2 / tau).
template <class T>
AffinityMatrixT<T> soft_affinity(const CoordinateMapT<T>& c_target, const CoordinateMapT<T>& c_source,
                                 T tau) {
    if (!(tau > T(0))) throw std::invalid_argument("soft_affinity: tau must be > 0");
    const int64_t Q = c_target.pixels(), P = c_source.pixels();
    TensorT<T> d({Q, P});
    kern::pairwise_sqdist(c_target.pixel_rows().data(), c_source.pixel_rows().data(), d.data(), Q, P, 2);
    T* pd = d.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < Q * P; ++i) pd[i] = -pd[i] / tau;
    AffinityMatrixT<T> a;
    a.rows = Q;
    a.cols = P;
    a.weights = TensorT<T>({Q, P});
    kern::softmax_rows(d.data(), a.weights.data(), Q, P);
    return a;
}

// Affinity-weighted pull of source pixels into the target frame. Uses the
// fused row-block kernel, so no Q x P matrix is materialized; results equal
// the explicit soft_affinity route.
template <class T>
TensorT<T> warp_image(const TensorT<T>& x_source, const CoordinateMapT<T>& c_source,
                      const CoordinateMapT<T>& c_target, T tau) {
    if (!(tau > T(0))) throw std::invalid_argument("warp_image: tau must be > 0");
    if (x_source.ndim() != 3 || x_source.dim(0) != c_source.height || x_source.dim(1) != c_source.width)
        throw std::invalid_argument("warp_image: image dims must match c_source dims");
    const int64_t C = x_source.dim(2);
    const int64_t Q = c_target.pixels(), P = c_source.pixels();
    TensorT<T> out({c_target.height, c_target.width, C});
    kern::affinity_warp(c_target.pixel_rows().data(), c_source.pixel_rows().data(),
                        x_source.data(), out.data(), Q, P, C, tau);
    return out;
}

// Symmetric mean nearest-neighbor distance between the two coordinate sets.
template <class T>
T chamfer(const CoordinateMapT<T>& c_canon, const CoordinateMapT<T>& c_warped) {
    const int64_t Q = c_canon.pixels(), P = c_warped.pixels();
    if (Q == 0 || P == 0) throw std::invalid_argument("chamfer: empty map");
    std::vector<T> colmin(size_t(P), std::numeric_limits<T>::infinity());
    T rowsum = 0;
    const T* a = c_canon.pixel_rows().data();
    const T* b = c_warped.pixel_rows().data();
    const int64_t block = std::max<int64_t>(1, std::min<int64_t>(Q, (1 << 22) / std::max<int64_t>(P, 1)));
    TensorT<T> dist({block, P});
    for (int64_t q0 = 0; q0 < Q; q0 += block) {
        const int64_t qn = std::min(block, Q - q0);
        kern::pairwise_sqdist(a + q0 * 2, b, dist.data(), qn, P, 2);
        const T* pd = dist.data();
        for (int64_t q = 0; q < qn; ++q) {
            T best = std::numeric_limits<T>::infinity();
            for (int64_t p = 0; p < P; ++p) {
                const T d = pd[q * P + p];
                best = std::min(best, d);
                colmin[size_t(p)] = std::min(colmin[size_t(p)], d);
            }
            rowsum += std::sqrt(best);
        }
    }
    T colsum = 0;
    for (int64_t p = 0; p < P; ++p) colsum += std::sqrt(colmin[size_t(p)]);
    return rowsum / T(Q) + colsum / T(P);
}

// Differentiable chamfer over pixel-row coordinate vars ([Q,2] and [P,2]).
// Materializes the distance matrix; intended for training-scale maps.
template <class T>
ad::VarT<T> chamfer_var(const ad::VarT<T>& canon_rows, const ad::VarT<T>& warped_rows) {
    using ad::VarT;
    const int64_t Q = canon_rows.dim(0), P = warped_rows.dim(0);
    VarT<T> a2 = ad::sum_to(ad::square(canon_rows), Shape{Q, 1});
    VarT<T> b2 = ad::reshape(ad::sum_to(ad::square(warped_rows), Shape{P, 1}), Shape{1, P});
    VarT<T> cross = ad::matmul_nt(canon_rows, warped_rows);
    VarT<T> sq = ad::add(ad::sub(ad::broadcast_to(a2, Shape{Q, P}), ad::scale(cross, T(2))),
                         ad::broadcast_to(b2, Shape{Q, P}));
    // Guard against tiny negative rounding and a non-finite sqrt gradient at 0.
    VarT<T> d = ad::sqrt(ad::relu_mask_ge(sq, T(1e-12)));
    VarT<T> row = ad::mean_all(ad::reduce_min_rows(d));
    VarT<T> col = ad::mean_all(ad::reduce_min_rows(ad::transpose2d(d)));
    return ad::add(row, col);
}

// Differentiable soft warp over vars: target/source pixel rows plus source
// pixel values [P,C]; returns [Q,C]. First-order differentiable (fused kernel).
template <class T>
ad::VarT<T> warp_image_var(const ad::VarT<T>& target_rows, const ad::VarT<T>& source_rows,
                           const ad::VarT<T>& source_values, T tau) {
    return ad::affinity_warp(target_rows, source_rows, source_values, tau);
}

// Soft label votes: affinity-weighted one-hot reference labels; argmax with
// ties to the smallest class index.
template <class T>
SegMask propagate_labels(const SegMask& mask_ref, const CoordinateMapT<T>& c_ref,
                         const CoordinateMapT<T>& c_query, T tau) {
    if (mask_ref.num_classes <= 0) throw std::invalid_argument("propagate_labels: empty class set");
    if (mask_ref.height != c_ref.height || mask_ref.width != c_ref.width)
        throw std::invalid_argument("propagate_labels: mask dims must match c_ref dims");
    const int64_t P = c_ref.pixels(), Q = c_query.pixels();
    const int64_t K = mask_ref.num_classes;
    TensorT<T> onehot({P, K});
    const int32_t* lab = mask_ref.labels.data();
    for (int64_t p = 0; p < P; ++p) onehot[p * K + lab[p]] = T(1);
    TensorT<T> votes({Q, K});
    kern::affinity_warp(c_query.pixel_rows().data(), c_ref.pixel_rows().data(), onehot.data(),
                        votes.data(), Q, P, K, tau);
    SegMask out;
    out.height = c_query.height;
    out.width = c_query.width;
    out.num_classes = mask_ref.num_classes;
    out.labels = TensorT<int32_t>({c_query.height, c_query.width});
    int32_t* ol = out.labels.data();
#pragma omp parallel for schedule(static)
    for (int64_t q = 0; q < Q; ++q) {
        T best = votes[q * K];
        int32_t bi = 0;
        for (int64_t k = 1; k < K; ++k)
            if (votes[q * K + k] > best) {
                best = votes[q * K + k];
                bi = int32_t(k);
            }
        ol[q] = bi;
    }
    return out;
}

// ------------------------------------------------------------- CGCM -------
// Binary correspondence-map container: magic "CGCM", little-endian u32
// version (=1), u32 height, u32 width, then H*W*2 little-endian f32 values,
// row-major, (x, y) per pixel.

void write_cgcm(const std::string& path, const CoordinateMapT<float>& map);
CoordinateMapT<float> read_cgcm(const std::string& path);

}  // namespace coordgan::coords
