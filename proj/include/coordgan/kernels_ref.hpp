#pragma once

// Serial reference implementations of the hot kernels. Written as the
// plainest possible loops; the parity tests in tests/test_kernels.cpp hold
// the OpenMP kernels against these, and bench/bench_kernels.cpp compares
// throughput.

#include <cmath>
#include <cstdint>
#include <limits>

#include "coordgan/tensor.hpp"

namespace coordgan::kern::ref {

template <class T>
void gemm_nn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        for (int64_t n = 0; n < N; ++n) C[m * N + n] = 0;
        for (int64_t k = 0; k < K; ++k) {
            const T av = A[m * K + k];
            for (int64_t n = 0; n < N; ++n) C[m * N + n] += av * B[k * N + n];
        }
    }
}

template <class T>
void gemm_nt(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m)
        for (int64_t n = 0; n < N; ++n) {
            T s = 0;
            for (int64_t k = 0; k < K; ++k) s += A[m * K + k] * B[n * K + k];
            C[m * N + n] = s;
        }
}

template <class T>
void gemm_tn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        for (int64_t n = 0; n < N; ++n) C[m * N + n] = 0;
        for (int64_t k = 0; k < K; ++k) {
            const T av = A[k * M + m];
            for (int64_t n = 0; n < N; ++n) C[m * N + n] += av * B[k * N + n];
        }
    }
}

// Direct 7-loop convolution; independent of the im2col+GEMM route.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, int pad) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t O = w.dim(0);
    const int k = int(w.dim(2));
    TensorT<T> out({N, O, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t wo = 0; wo < W; ++wo) {
                    T s = 0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                const int64_t sh = h + kh - pad, sw = wo + kw - pad;
                                if (sh < 0 || sh >= H || sw < 0 || sw >= W) continue;
                                s += x[((n * C + c) * H + sh) * W + sw] *
                                     w[((o * C + c) * k + kh) * k + kw];
                            }
                    out[((n * O + o) * H + h) * W + wo] = s;
                }
    return out;
}

template <class T>
void pairwise_sqdist(const T* a, const T* b, T* out, int64_t Q, int64_t P, int64_t D) {
    for (int64_t q = 0; q < Q; ++q)
        for (int64_t p = 0; p < P; ++p) {
            T s = 0;
            for (int64_t d = 0; d < D; ++d) {
                const T diff = a[q * D + d] - b[p * D + d];
                s += diff * diff;
            }
            out[q * P + p] = s;
        }
}

template <class T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        T m = x[r * cols];
        for (int64_t c = 1; c < cols; ++c) m = std::max(m, x[r * cols + c]);
        T z = 0;
        for (int64_t c = 0; c < cols; ++c) {
            y[r * cols + c] = std::exp(x[r * cols + c] - m);
            z += y[r * cols + c];
        }
        for (int64_t c = 0; c < cols; ++c) y[r * cols + c] /= z;
    }
}

// Explicit-matrix route: builds the full row-stochastic affinity, then
// multiplies. Doubles as the oracle for the fused kernel.
template <class T>
void affinity_warp(const T* ct, const T* cs, const T* v, T* out, int64_t Q, int64_t P, int64_t C,
                   T tau) {
    std::vector<T> dist(size_t(Q * P)), aff(size_t(Q * P));
    pairwise_sqdist(ct, cs, dist.data(), Q, P, 2);
    for (int64_t i = 0; i < Q * P; ++i) dist[size_t(i)] = -dist[size_t(i)] / tau;
    softmax_rows(dist.data(), aff.data(), Q, P);
    for (int64_t q = 0; q < Q; ++q)
        for (int64_t c = 0; c < C; ++c) {
            T s = 0;
            for (int64_t p = 0; p < P; ++p) s += aff[size_t(q * P + p)] * v[p * C + c];
            out[q * C + c] = s;
        }
}

template <class T>
void reduce_min_rows(const T* x, T* vals, int64_t* args, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        T best = x[r * cols];
        int64_t bi = 0;
        for (int64_t c = 1; c < cols; ++c)
            if (x[r * cols + c] < best) {
                best = x[r * cols + c];
                bi = c;
            }
        vals[r] = best;
        args[r] = bi;
    }
}

}  // namespace coordgan::kern::ref
