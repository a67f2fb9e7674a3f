#pragma once

// OpenMP-parallel compute kernels. Every kernel is deterministic independent
// of thread count: parallelism is always over output elements, and each
// output element is accumulated by exactly one thread in a fixed order.
// Serial reference twins for the hot kernels live in kernels_ref.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "coordgan/tensor.hpp"

namespace coordgan::kern {

// ---------------------------------------------------------------- GEMM ----

// C[M,N] = A[M,K] * B[K,N]  (or += when accumulate). K is blocked so the
// active B panel stays cache-resident while a thread walks its row range.
template <class T>
void gemm_nn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N, bool accumulate = false) {
    constexpr int64_t KB = 128;
#pragma omp parallel
    {
        if (!accumulate) {
#pragma omp for schedule(static)
            for (int64_t m = 0; m < M; ++m) std::fill(C + m * N, C + m * N + N, T(0));
        }
        for (int64_t k0 = 0; k0 < K; k0 += KB) {
            const int64_t k1 = std::min(K, k0 + KB);
#pragma omp for schedule(static)
            for (int64_t m = 0; m < M; ++m) {
                T* c = C + m * N;
                const T* a = A + m * K;
                for (int64_t k = k0; k < k1; ++k) {
                    const T av = a[k];
                    const T* b = B + k * N;
#pragma omp simd
                    for (int64_t n = 0; n < N; ++n) c[n] += av * b[n];
                }
            }
        }
    }
}

// C[M,N] = A[M,K] * B[N,K]^T
template <class T>
void gemm_nt(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N, bool accumulate = false) {
#pragma omp parallel for schedule(static)
    for (int64_t m = 0; m < M; ++m) {
        const T* a = A + m * K;
        T* c = C + m * N;
        for (int64_t n = 0; n < N; ++n) {
            const T* b = B + n * K;
            T s = 0;
#pragma omp simd reduction(+ : s)
            for (int64_t k = 0; k < K; ++k) s += a[k] * b[k];
            c[n] = accumulate ? c[n] + s : s;
        }
    }
}

// C[M,N] = A[K,M]^T * B[K,N]
template <class T>
void gemm_tn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N, bool accumulate = false) {
    constexpr int64_t KB = 128;
#pragma omp parallel
    {
        if (!accumulate) {
#pragma omp for schedule(static)
            for (int64_t m = 0; m < M; ++m) std::fill(C + m * N, C + m * N + N, T(0));
        }
        for (int64_t k0 = 0; k0 < K; k0 += KB) {
            const int64_t k1 = std::min(K, k0 + KB);
#pragma omp for schedule(static)
            for (int64_t m = 0; m < M; ++m) {
                T* c = C + m * N;
                for (int64_t k = k0; k < k1; ++k) {
                    const T av = A[k * M + m];
                    const T* b = B + k * N;
#pragma omp simd
                    for (int64_t n = 0; n < N; ++n) c[n] += av * b[n];
                }
            }
        }
    }
}

// --------------------------------------------------------------- conv -----

// im2col for stride-1 square kernels; col is [C*k*k, H*W].
template <class T>
void im2col(const T* x, T* col, int64_t C, int64_t H, int64_t W, int k, int pad) {
    const int64_t HW = H * W;
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t kk = 0; kk < int64_t(k) * k; ++kk) {
            const int kh = int(kk) / k, kw = int(kk) % k;
            T* dst = col + (c * k * k + kk) * HW;
            const T* src = x + c * HW;
            for (int64_t h = 0; h < H; ++h) {
                const int64_t sh = h + kh - pad;
                for (int64_t w = 0; w < W; ++w) {
                    const int64_t sw = w + kw - pad;
                    dst[h * W + w] = (sh >= 0 && sh < H && sw >= 0 && sw < W) ? src[sh * W + sw] : T(0);
                }
            }
        }
    }
}

// Adjoint of im2col: gathers every kernel tap that referenced a pixel.
template <class T>
void col2im(const T* col, T* x, int64_t C, int64_t H, int64_t W, int k, int pad) {
    const int64_t HW = H * W;
#pragma omp parallel for schedule(static)
    for (int64_t c = 0; c < C; ++c) {
        T* dst = x + c * HW;
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t w = 0; w < W; ++w) {
                T s = 0;
                for (int kh = 0; kh < k; ++kh) {
                    const int64_t oh = h - kh + pad;
                    if (oh < 0 || oh >= H) continue;
                    for (int kw = 0; kw < k; ++kw) {
                        const int64_t ow = w - kw + pad;
                        if (ow < 0 || ow >= W) continue;
                        s += col[(c * k * k + int64_t(kh) * k + kw) * HW + oh * W + ow];
                    }
                }
                dst[h * W + w] = s;
            }
        }
    }
}

// out[N,O,H,W] = conv(x[N,C,H,W], w[O,C,k,k]), stride 1, square pad.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, int pad) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t O = w.dim(0);
    const int k = int(w.dim(2));
    if (w.dim(1) != C) throw std::invalid_argument("conv2d: channel mismatch");
    TensorT<T> out({N, O, H, W});
    TensorT<T> col({C * k * k, H * W});
    for (int64_t n = 0; n < N; ++n) {
        im2col(x.data() + n * C * H * W, col.data(), C, H, W, k, pad);
        gemm_nn(w.data(), col.data(), out.data() + n * O * H * W, O, C * k * k, H * W);
    }
    return out;
}

// Gradient w.r.t. conv input: dx[N,C,H,W] from gy[N,O,H,W].
template <class T>
TensorT<T> conv2d_dx(const TensorT<T>& gy, const TensorT<T>& w, int pad) {
    const int64_t N = gy.dim(0), O = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
    const int64_t C = w.dim(1);
    const int k = int(w.dim(2));
    TensorT<T> dx({N, C, H, W});
    TensorT<T> col({C * k * k, H * W});
    for (int64_t n = 0; n < N; ++n) {
        gemm_tn(w.data(), gy.data() + n * O * H * W, col.data(), C * k * k, O, H * W);
        col2im(col.data(), dx.data() + n * C * H * W, C, H, W, k, pad);
    }
    return dx;
}

// Gradient w.r.t. conv weights: dw[O,C,k,k]; batch accumulated in order.
template <class T>
TensorT<T> conv2d_dw(const TensorT<T>& x, const TensorT<T>& gy, int k, int pad) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t O = gy.dim(1);
    TensorT<T> dw({O, C, int64_t(k), int64_t(k)});
    TensorT<T> col({C * k * k, H * W});
    for (int64_t n = 0; n < N; ++n) {
        im2col(x.data() + n * C * H * W, col.data(), C, H, W, k, pad);
        gemm_nt(gy.data() + n * O * H * W, col.data(), dw.data(), O, H * W, C * k * k,
                /*accumulate=*/n > 0);
    }
    return dw;
}

// --------------------------------------------------------- elementwise ----

template <class T, class F>
void map_unary(const T* x, T* y, int64_t n, F f) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (size_t i = 0; i < nd; ++i) {
        const int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        const int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {
// Row-major strides padded/zeroed for broadcasting against `out`.
inline void bcast_strides(const Shape& shape, const Shape& out, int64_t* strides) {
    const size_t nd = out.size(), off = nd - shape.size();
    int64_t s = 1;
    std::vector<int64_t> own(shape.size());
    for (size_t i = shape.size(); i-- > 0;) {
        own[i] = s;
        s *= shape[i];
    }
    for (size_t i = 0; i < nd; ++i) {
        if (i < off || shape[i - off] == 1)
            strides[i] = 0;
        else
            strides[i] = own[i - off];
    }
}
}  // namespace detail

template <class T, class F>
TensorT<T> zip_broadcast(const TensorT<T>& a, const TensorT<T>& b, F f) {
    if (a.shape() == b.shape()) {
        TensorT<T> out(a.shape());
        const T* pa = a.data();
        const T* pb = b.data();
        T* po = out.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < out.numel(); ++i) po[i] = f(pa[i], pb[i]);
        return out;
    }
    const Shape os = broadcast_shapes(a.shape(), b.shape());
    TensorT<T> out(os);
    const size_t nd = os.size();
    int64_t sa[8], sb[8];
    detail::bcast_strides(a.shape(), os, sa);
    detail::bcast_strides(b.shape(), os, sb);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t total = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < total; ++i) {
        int64_t rem = i, ia = 0, ib = 0;
        for (size_t d = nd; d-- > 0;) {
            const int64_t c = rem % os[d];
            rem /= os[d];
            ia += c * sa[d];
            ib += c * sb[d];
        }
        po[i] = f(pa[ia], pb[ib]);
    }
    return out;
}

// Sum `x` down to `target` shape (inverse of broadcasting). Each output
// element accumulates its own reduction serially, reduced indices ascending.
template <class T>
TensorT<T> reduce_sum_to(const TensorT<T>& x, const Shape& target) {
    if (x.shape() == target) return x;
    const Shape& xs = x.shape();
    const size_t nd = xs.size(), od = target.size();
    TensorT<T> out(target);
    std::vector<int64_t> xstr(nd);
    int64_t s = 1;
    for (size_t i = nd; i-- > 0;) {
        xstr[i] = s;
        s *= xs[i];
    }
    // Dims reduced away: x-only leading dims, and dims where target holds 1.
    std::vector<int64_t> red_dims, red_strides;
    for (size_t i = 0; i < nd; ++i) {
        const bool reduced = (i < nd - od) || (target[i - (nd - od)] == 1 && xs[i] > 1);
        if (reduced && xs[i] > 1) {
            red_dims.push_back(xs[i]);
            red_strides.push_back(xstr[i]);
        }
    }
    const int64_t on = out.numel();
    const T* px = x.data();
    T* po = out.data();
    const Shape ot = target;
#pragma omp parallel for schedule(static)
    for (int64_t oi = 0; oi < on; ++oi) {
        int64_t rem = oi, base = 0;
        for (size_t d = od; d-- > 0;) {
            const int64_t c = rem % ot[d];
            rem /= ot[d];
            if (ot[d] != 1) base += c * xstr[nd - od + d];
        }
        T acc = 0;
        const size_t nr = red_dims.size();
        std::array<int64_t, 8> idx{};
        bool running = true;
        while (running) {
            int64_t off = base;
            for (size_t r = 0; r < nr; ++r) off += idx[r] * red_strides[r];
            acc += px[off];
            running = false;
            size_t r = nr;
            while (r-- > 0) {
                if (++idx[r] < red_dims[r]) {
                    running = true;
                    break;
                }
                idx[r] = 0;
            }
        }
        po[oi] = acc;
    }
    return out;
}

template <class T>
T sum_all(const TensorT<T>& x) {
    // Serial: full reductions are cheap next to the GEMMs and must be
    // order-stable.
    T s = 0;
    const T* p = x.data();
    for (int64_t i = 0, n = x.numel(); i < n; ++i) s += p[i];
    return s;
}

// -------------------------------------------------------------- rowwise ---

template <class T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T m = xr[0];
        for (int64_t c = 1; c < cols; ++c) m = std::max(m, xr[c]);
        T z = 0;
        for (int64_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - m);
            z += yr[c];
        }
        const T inv = T(1) / z;
        for (int64_t c = 0; c < cols; ++c) yr[c] *= inv;
    }
}

// Per-row minimum with argmin; ties resolved to the smallest column index.
template <class T>
void reduce_min_rows(const T* x, T* vals, int64_t* args, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T best = xr[0];
        int64_t bi = 0;
        for (int64_t c = 1; c < cols; ++c)
            if (xr[c] < best) {
                best = xr[c];
                bi = c;
            }
        vals[r] = best;
        args[r] = bi;
    }
}

// D[q,p] = ||a_q - b_p||^2 for D-dimensional points.
template <class T>
void pairwise_sqdist(const T* a, const T* b, T* out, int64_t Q, int64_t P, int64_t D) {
#pragma omp parallel for schedule(static)
    for (int64_t q = 0; q < Q; ++q) {
        const T* aq = a + q * D;
        T* row = out + q * P;
        for (int64_t p = 0; p < P; ++p) {
            const T* bp = b + p * D;
            T s = 0;
            for (int64_t d = 0; d < D; ++d) {
                const T diff = aq[d] - bp[d];
                s += diff * diff;
            }
            row[p] = s;
        }
    }
}

// ---------------------------------------------------- fused affinity ------

// out[q] = sum_p softmax_p(-||ct_q - cs_p||^2 / tau) * v[p].
// Never materializes the Q x P matrix, so it scales past the point where an
// explicit affinity matrix would; results are identical to the explicit
// route (same per-row traversal order).
template <class T>
void affinity_warp(const T* ct, const T* cs, const T* v, T* out, int64_t Q, int64_t P, int64_t C,
                   T tau) {
#pragma omp parallel for schedule(static)
    for (int64_t q = 0; q < Q; ++q) {
        const T cx = ct[q * 2], cy = ct[q * 2 + 1];
        T m = -std::numeric_limits<T>::infinity();
        for (int64_t p = 0; p < P; ++p) {
            const T dx = cx - cs[p * 2], dy = cy - cs[p * 2 + 1];
            m = std::max(m, -(dx * dx + dy * dy) / tau);
        }
        T z = 0;
        T* o = out + q * C;
        std::fill(o, o + C, T(0));
        for (int64_t p = 0; p < P; ++p) {
            const T dx = cx - cs[p * 2], dy = cy - cs[p * 2 + 1];
            const T a = std::exp(-(dx * dx + dy * dy) / tau - m);
            z += a;
            const T* vp = v + p * C;
            for (int64_t c = 0; c < C; ++c) o[c] += a * vp[c];
        }
        const T inv = T(1) / z;
        for (int64_t c = 0; c < C; ++c) o[c] *= inv;
    }
}

// Backward of affinity_warp. Recomputes row softmax statistics in O(Q+P)
// memory; three passes, each parallel over the dimension it owns.
template <class T>
void affinity_warp_grad(const T* ct, const T* cs, const T* v, const T* out, const T* gout,
                        T* gct, T* gcs, T* gv, int64_t Q, int64_t P, int64_t C, T tau) {
    std::vector<T> rowmax(Q), rowz(Q), h(Q);
    // Pass A: row softmax stats and h_q = <gout_q, out_q>.
#pragma omp parallel for schedule(static)
    for (int64_t q = 0; q < Q; ++q) {
        const T cx = ct[q * 2], cy = ct[q * 2 + 1];
        T m = -std::numeric_limits<T>::infinity();
        for (int64_t p = 0; p < P; ++p) {
            const T dx = cx - cs[p * 2], dy = cy - cs[p * 2 + 1];
            m = std::max(m, -(dx * dx + dy * dy) / tau);
        }
        T z = 0;
        for (int64_t p = 0; p < P; ++p) {
            const T dx = cx - cs[p * 2], dy = cy - cs[p * 2 + 1];
            z += std::exp(-(dx * dx + dy * dy) / tau - m);
        }
        rowmax[q] = m;
        rowz[q] = z;
        T hq = 0;
        for (int64_t c = 0; c < C; ++c) hq += gout[q * C + c] * out[q * C + c];
        h[q] = hq;
    }
    // Pass B: gradient w.r.t. target coordinates (per row).
    if (gct) {
#pragma omp parallel for schedule(static)
        for (int64_t q = 0; q < Q; ++q) {
            const T cx = ct[q * 2], cy = ct[q * 2 + 1];
            T gx = 0, gy = 0;
            for (int64_t p = 0; p < P; ++p) {
                const T dx = cx - cs[p * 2], dy = cy - cs[p * 2 + 1];
                const T a = std::exp(-(dx * dx + dy * dy) / tau - rowmax[q]) / rowz[q];
                T gdot = 0;
                for (int64_t c = 0; c < C; ++c) gdot += gout[q * C + c] * v[p * C + c];
                const T ds = a * (gdot - h[q]);
                gx += ds * (T(-2) / tau) * dx;
                gy += ds * (T(-2) / tau) * dy;
            }
            gct[q * 2] = gx;
            gct[q * 2 + 1] = gy;
        }
    }
    // Pass C: gradients w.r.t. source coordinates and values (per column).
    if (gcs || gv) {
#pragma omp parallel for schedule(static)
        for (int64_t p = 0; p < P; ++p) {
            const T sx = cs[p * 2], sy = cs[p * 2 + 1];
            T gx = 0, gy = 0;
            T* gvp = gv ? gv + p * C : nullptr;
            if (gvp) std::fill(gvp, gvp + C, T(0));
            for (int64_t q = 0; q < Q; ++q) {
                const T dx = ct[q * 2] - sx, dy = ct[q * 2 + 1] - sy;
                const T a = std::exp(-(dx * dx + dy * dy) / tau - rowmax[q]) / rowz[q];
                T gdot = 0;
                for (int64_t c = 0; c < C; ++c) {
                    const T g = gout[q * C + c];
                    gdot += g * v[p * C + c];
                    if (gvp) gvp[c] += a * g;
                }
                const T ds = a * (gdot - h[q]);
                gx += ds * (T(2) / tau) * dx;
                gy += ds * (T(2) / tau) * dy;
            }
            if (gcs) {
                gcs[p * 2] = gx;
                gcs[p * 2 + 1] = gy;
            }
        }
    }
}

// ------------------------------------------------------------ spatial -----

template <class T>
TensorT<T> avgpool2(const TensorT<T>& x) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorT<T> out({N, C, H / 2, W / 2});
    const int64_t H2 = H / 2, W2 = W / 2;
#pragma omp parallel for schedule(static)
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = x.data() + nc * H * W;
        T* dst = out.data() + nc * H2 * W2;
        for (int64_t h = 0; h < H2; ++h)
            for (int64_t w = 0; w < W2; ++w)
                dst[h * W2 + w] = (src[2 * h * W + 2 * w] + src[2 * h * W + 2 * w + 1] +
                                   src[(2 * h + 1) * W + 2 * w] + src[(2 * h + 1) * W + 2 * w + 1]) *
                                  T(0.25);
    }
    return out;
}

template <class T>
TensorT<T> upsample2_nearest(const TensorT<T>& x) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorT<T> out({N, C, H * 2, W * 2});
#pragma omp parallel for schedule(static)
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = x.data() + nc * H * W;
        T* dst = out.data() + nc * 4 * H * W;
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w) {
                const T v = src[h * W + w];
                dst[(2 * h) * 2 * W + 2 * w] = v;
                dst[(2 * h) * 2 * W + 2 * w + 1] = v;
                dst[(2 * h + 1) * 2 * W + 2 * w] = v;
                dst[(2 * h + 1) * 2 * W + 2 * w + 1] = v;
            }
    }
    return out;
}

// Bilinear resize, half-pixel centers, edges clamped.
template <class T>
TensorT<T> resize_bilinear(const TensorT<T>& x, int64_t H2, int64_t W2) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorT<T> out({N, C, H2, W2});
#pragma omp parallel for schedule(static)
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = x.data() + nc * H * W;
        T* dst = out.data() + nc * H2 * W2;
        for (int64_t h = 0; h < H2; ++h) {
            const double sy = (double(h) + 0.5) * double(H) / double(H2) - 0.5;
            const int64_t y0 = std::clamp<int64_t>(int64_t(std::floor(sy)), 0, H - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
            const T fy = T(std::clamp(sy - double(y0), 0.0, 1.0));
            for (int64_t w = 0; w < W2; ++w) {
                const double sx = (double(w) + 0.5) * double(W) / double(W2) - 0.5;
                const int64_t x0 = std::clamp<int64_t>(int64_t(std::floor(sx)), 0, W - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
                const T fx = T(std::clamp(sx - double(x0), 0.0, 1.0));
                const T v00 = src[y0 * W + x0], v01 = src[y0 * W + x1];
                const T v10 = src[y1 * W + x0], v11 = src[y1 * W + x1];
                dst[h * W2 + w] =
                    v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) + v11 * fy * fx;
            }
        }
    }
    return out;
}

// Adjoint of resize_bilinear: scatters with the same weights. Planes are
// independent; the scatter within one plane runs serially.
template <class T>
TensorT<T> resize_bilinear_adjoint(const TensorT<T>& gy, int64_t H, int64_t W) {
    const int64_t N = gy.dim(0), C = gy.dim(1), H2 = gy.dim(2), W2 = gy.dim(3);
    TensorT<T> gx({N, C, H, W});
#pragma omp parallel for schedule(static)
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = gy.data() + nc * H2 * W2;
        T* dst = gx.data() + nc * H * W;
        for (int64_t h = 0; h < H2; ++h) {
            const double sy = (double(h) + 0.5) * double(H) / double(H2) - 0.5;
            const int64_t y0 = std::clamp<int64_t>(int64_t(std::floor(sy)), 0, H - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
            const T fy = T(std::clamp(sy - double(y0), 0.0, 1.0));
            for (int64_t w = 0; w < W2; ++w) {
                const double sx = (double(w) + 0.5) * double(W) / double(W2) - 0.5;
                const int64_t x0 = std::clamp<int64_t>(int64_t(std::floor(sx)), 0, W - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
                const T fx = T(std::clamp(sx - double(x0), 0.0, 1.0));
                const T g = src[h * W2 + w];
                dst[y0 * W + x0] += g * (1 - fy) * (1 - fx);
                dst[y0 * W + x1] += g * (1 - fy) * fx;
                dst[y1 * W + x0] += g * fy * (1 - fx);
                dst[y1 * W + x1] += g * fy * fx;
            }
        }
    }
    return gx;
}

// ----------------------------------------------------------- reorder ------

template <class T>
TensorT<T> permute(const TensorT<T>& x, const std::vector<int>& perm) {
    const Shape& xs = x.shape();
    const size_t nd = xs.size();
    Shape os(nd);
    for (size_t i = 0; i < nd; ++i) os[i] = xs[size_t(perm[i])];
    TensorT<T> out(os);
    std::vector<int64_t> xstr(nd), ostr_in_x(nd);
    int64_t s = 1;
    for (size_t i = nd; i-- > 0;) {
        xstr[i] = s;
        s *= xs[i];
    }
    for (size_t i = 0; i < nd; ++i) ostr_in_x[i] = xstr[size_t(perm[i])];
    const T* px = x.data();
    T* po = out.data();
    const int64_t total = out.numel();
#pragma omp parallel for schedule(static)
    for (int64_t oi = 0; oi < total; ++oi) {
        int64_t rem = oi, xi = 0;
        for (size_t d = nd; d-- > 0;) {
            xi += (rem % os[d]) * ostr_in_x[d];
            rem /= os[d];
        }
        po[oi] = px[xi];
    }
    return out;
}

// Concatenate along `axis`; shapes must agree elsewhere.
template <class T>
TensorT<T> concat_axis(const std::vector<TensorT<T>>& parts, int axis) {
    const Shape& s0 = parts[0].shape();
    Shape os = s0;
    int64_t cat = 0;
    for (const auto& p : parts) cat += p.dim(axis);
    os[size_t(axis)] = cat;
    TensorT<T> out(os);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[size_t(i)];
    for (size_t i = size_t(axis) + 1; i < s0.size(); ++i) inner *= s0[i];
    const int64_t orow = cat * inner;
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t prow = p.dim(axis) * inner;
        const T* src = p.data();
        T* dst = out.data();
#pragma omp parallel for schedule(static)
        for (int64_t o = 0; o < outer; ++o)
            std::copy(src + o * prow, src + (o + 1) * prow, dst + o * orow + off);
        off += prow;
    }
    return out;
}

template <class T>
TensorT<T> slice_axis(const TensorT<T>& x, int axis, int64_t start, int64_t len) {
    const Shape& xs = x.shape();
    Shape os = xs;
    os[size_t(axis)] = len;
    TensorT<T> out(os);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xs[size_t(i)];
    for (size_t i = size_t(axis) + 1; i < xs.size(); ++i) inner *= xs[i];
    const int64_t xrow = xs[size_t(axis)] * inner, orow = len * inner;
    const T* src = x.data();
    T* dst = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < outer; ++o)
        std::copy(src + o * xrow + start * inner, src + o * xrow + (start + len) * inner, dst + o * orow);
    return out;
}

// Adjoint of slice_axis: pastes grad back into a zero tensor of shape `full`.
template <class T>
TensorT<T> slice_axis_adjoint(const TensorT<T>& g, const Shape& full, int axis, int64_t start) {
    TensorT<T> out(full);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= full[size_t(i)];
    for (size_t i = size_t(axis) + 1; i < full.size(); ++i) inner *= full[i];
    const int64_t len = g.dim(axis);
    const int64_t orow = full[size_t(axis)] * inner, grow = len * inner;
    const T* src = g.data();
    T* dst = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < outer; ++o)
        std::copy(src + o * grow, src + (o + 1) * grow, dst + o * orow + start * inner);
    return out;
}

}  // namespace coordgan::kern
