#pragma once

// Reverse-mode autodiff over TensorT. Eager: every op computes its value
// immediately through the kernels and records a VJP closure. VJPs are built
// from engine ops themselves (capturing only parent vars and plain tensors,
// never the op's own output), so gradients are ordinary graph nodes and can
// be differentiated again — the R1 penalty relies on that. The one exception
// is affinity_warp, whose VJP returns constants (first-order only).

#include <atomic>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "coordgan/kernels.hpp"
#include "coordgan/tensor.hpp"

namespace coordgan::ad {

template <class T>
struct NodeT;

template <class T>
class VarT {
public:
    VarT() = default;
    explicit VarT(std::shared_ptr<NodeT<T>> n) : n_(std::move(n)) {}

    static VarT leaf(TensorT<T> value, bool requires_grad = true);
    static VarT constant(TensorT<T> value) { return leaf(std::move(value), false); }

    bool defined() const { return n_ != nullptr; }
    const TensorT<T>& value() const { return n_->value; }
    TensorT<T>& mutable_value() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    const Shape& shape() const { return n_->value.shape(); }
    int64_t dim(int i) const { return n_->value.dim(i); }
    int64_t numel() const { return n_->value.numel(); }
    T item() const { return n_->value[0]; }
    NodeT<T>* node() const { return n_.get(); }

private:
    std::shared_ptr<NodeT<T>> n_;
};

template <class T>
struct NodeT {
    TensorT<T> value;
    std::vector<VarT<T>> parents;
    // Given the gradient flowing into this node, produce gradients for each
    // parent (undefined VarT for parents that do not require grad).
    std::function<std::vector<VarT<T>>(const VarT<T>&)> vjp;
    bool requires_grad = false;
    uint64_t id = 0;
};

namespace detail {
template <class T>
uint64_t next_id() {
    static std::atomic<uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

template <class T>
VarT<T> VarT<T>::leaf(TensorT<T> value, bool requires_grad) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->id = detail::next_id<T>();
    return VarT(std::move(n));
}

template <class T>
VarT<T> make_op(TensorT<T> value, std::vector<VarT<T>> parents,
                std::function<std::vector<VarT<T>>(const VarT<T>&)> vjp) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->vjp = std::move(vjp);
    }
    n->id = detail::next_id<T>();
    return VarT<T>(std::move(n));
}

// ------------------------------------------------------------ helpers -----

template <class T>
VarT<T> constant_like(const VarT<T>& v, T fill) {
    return VarT<T>::constant(TensorT<T>::full(v.shape(), fill));
}

template <class T>
VarT<T> stop_gradient(const VarT<T>& v) {
    return VarT<T>::constant(v.value());
}

// Declared up-front; VJPs below use them.
template <class T> VarT<T> add(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> sub(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> mul(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> div(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> scale(const VarT<T>& a, T s);
template <class T> VarT<T> sum_to(const VarT<T>& x, const Shape& target);
template <class T> VarT<T> broadcast_to(const VarT<T>& x, const Shape& target);
template <class T> VarT<T> matmul(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> matmul_nt(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> matmul_tn(const VarT<T>& a, const VarT<T>& b);
template <class T> VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, int pad);
template <class T> VarT<T> conv2d_dx(const VarT<T>& y, const VarT<T>& w, int pad);
template <class T> VarT<T> conv2d_dw(const VarT<T>& x, const VarT<T>& y, int k, int pad);

// ------------------------------------------------------- arithmetic -------

template <class T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
    TensorT<T> v = kern::zip_broadcast(a.value(), b.value(), [](T x, T y) { return x + y; });
    const Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(std::move(v), {a, b}, [sa, sb](const VarT<T>& g) {
        return std::vector<VarT<T>>{sum_to(g, sa), sum_to(g, sb)};
    });
}

template <class T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
    TensorT<T> v = kern::zip_broadcast(a.value(), b.value(), [](T x, T y) { return x - y; });
    const Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(std::move(v), {a, b}, [sa, sb](const VarT<T>& g) {
        return std::vector<VarT<T>>{sum_to(g, sa), scale(sum_to(g, sb), T(-1))};
    });
}

template <class T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
    TensorT<T> v = kern::zip_broadcast(a.value(), b.value(), [](T x, T y) { return x * y; });
    const Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(std::move(v), {a, b}, [a, b, sa, sb](const VarT<T>& g) {
        return std::vector<VarT<T>>{sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)};
    });
}

template <class T>
VarT<T> div(const VarT<T>& a, const VarT<T>& b) {
    TensorT<T> v = kern::zip_broadcast(a.value(), b.value(), [](T x, T y) { return x / y; });
    const Shape sa = a.shape(), sb = b.shape();
    return make_op<T>(std::move(v), {a, b}, [a, b, sa, sb](const VarT<T>& g) {
        VarT<T> ga = sum_to(div(g, b), sa);
        VarT<T> gb = sum_to(scale(mul(g, div(a, mul(b, b))), T(-1)), sb);
        return std::vector<VarT<T>>{ga, gb};
    });
}

template <class T>
VarT<T> scale(const VarT<T>& a, T s) {
    TensorT<T> v(a.shape());
    kern::map_unary(a.value().data(), v.data(), v.numel(), [s](T x) { return x * s; });
    return make_op<T>(std::move(v), {a},
                      [s](const VarT<T>& g) { return std::vector<VarT<T>>{scale(g, s)}; });
}

template <class T>
VarT<T> add_scalar(const VarT<T>& a, T s) {
    TensorT<T> v(a.shape());
    kern::map_unary(a.value().data(), v.data(), v.numel(), [s](T x) { return x + s; });
    return make_op<T>(std::move(v), {a},
                      [](const VarT<T>& g) { return std::vector<VarT<T>>{g}; });
}

template <class T>
VarT<T> neg(const VarT<T>& a) {
    return scale(a, T(-1));
}

// -------------------------------------------------------- unary maps ------

// Piecewise-linear activations carry a constant mask in their VJP; the mask
// has zero derivative almost everywhere, which is the correct second-order
// treatment.
template <class T>
VarT<T> leaky_relu(const VarT<T>& a, T slope) {
    TensorT<T> v(a.shape()), mask(a.shape());
    const T* x = a.value().data();
    T* pv = v.data();
    T* pm = mask.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < v.numel(); ++i) {
        const bool pos = x[i] > T(0);
        pv[i] = pos ? x[i] : slope * x[i];
        pm[i] = pos ? T(1) : slope;
    }
    VarT<T> cmask = VarT<T>::constant(std::move(mask));
    return make_op<T>(std::move(v), {a}, [cmask](const VarT<T>& g) {
        return std::vector<VarT<T>>{mul(g, cmask)};
    });
}

template <class T>
VarT<T> relu_mask_ge(const VarT<T>& a, T threshold) {
    // clamp-below-at-threshold; gradient passes where x > threshold
    TensorT<T> v(a.shape()), mask(a.shape());
    const T* x = a.value().data();
    T* pv = v.data();
    T* pm = mask.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < v.numel(); ++i) {
        const bool pass = x[i] > threshold;
        pv[i] = pass ? x[i] : threshold;
        pm[i] = pass ? T(1) : T(0);
    }
    VarT<T> cmask = VarT<T>::constant(std::move(mask));
    return make_op<T>(std::move(v), {a}, [cmask](const VarT<T>& g) {
        return std::vector<VarT<T>>{mul(g, cmask)};
    });
}

template <class T>
VarT<T> abs(const VarT<T>& a) {
    TensorT<T> v(a.shape()), sign(a.shape());
    const T* x = a.value().data();
    T* pv = v.data();
    T* ps = sign.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < v.numel(); ++i) {
        pv[i] = std::abs(x[i]);
        ps[i] = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
    }
    VarT<T> csign = VarT<T>::constant(std::move(sign));
    return make_op<T>(std::move(v), {a}, [csign](const VarT<T>& g) {
        return std::vector<VarT<T>>{mul(g, csign)};
    });
}

#define COORDGAN_UNARY(NAME, FWD, VJP_EXPR)                                             \
    template <class T>                                                                  \
    VarT<T> NAME(const VarT<T>& a) {                                                    \
        TensorT<T> v(a.shape());                                                        \
        kern::map_unary(a.value().data(), v.data(), v.numel(), [](T x) { return FWD; });\
        return make_op<T>(std::move(v), {a}, [a](const VarT<T>& g) {                    \
            return std::vector<VarT<T>>{VJP_EXPR};                                      \
        });                                                                             \
    }

COORDGAN_UNARY(exp, std::exp(x), mul(g, exp(a)))
COORDGAN_UNARY(log, std::log(x), div(g, a))
COORDGAN_UNARY(sin, std::sin(x), mul(g, cos(a)))
COORDGAN_UNARY(cos, std::cos(x), scale(mul(g, sin(a)), T(-1)))
COORDGAN_UNARY(tanh, std::tanh(x), mul(g, sub(constant_like(a, T(1)), mul(tanh(a), tanh(a)))))
COORDGAN_UNARY(sigmoid, T(1) / (T(1) + std::exp(-x)),
               mul(g, mul(sigmoid(a), sub(constant_like(a, T(1)), sigmoid(a)))))
#undef COORDGAN_UNARY

template <class T>
VarT<T> sqrt(const VarT<T>& a) {
    TensorT<T> v(a.shape());
    kern::map_unary(a.value().data(), v.data(), v.numel(), [](T x) { return std::sqrt(x); });
    return make_op<T>(std::move(v), {a}, [a](const VarT<T>& g) {
        return std::vector<VarT<T>>{div(scale(g, T(0.5)), sqrt(a))};
    });
}

template <class T>
VarT<T> square(const VarT<T>& a) {
    return mul(a, a);
}

// Numerically-stable softplus; derivative is the logistic function.
template <class T>
VarT<T> softplus(const VarT<T>& a) {
    TensorT<T> v(a.shape());
    kern::map_unary(a.value().data(), v.data(), v.numel(), [](T x) {
        return x > T(20) ? x : std::log1p(std::exp(std::min(x, T(20))));
    });
    return make_op<T>(std::move(v), {a}, [a](const VarT<T>& g) {
        return std::vector<VarT<T>>{mul(g, sigmoid(a))};
    });
}

// --------------------------------------------------- shape / reduce -------

template <class T>
VarT<T> reshape(const VarT<T>& a, Shape shape) {
    const Shape orig = a.shape();
    return make_op<T>(a.value().reshaped(std::move(shape)), {a}, [orig](const VarT<T>& g) {
        return std::vector<VarT<T>>{reshape(g, orig)};
    });
}

template <class T>
VarT<T> sum_to(const VarT<T>& x, const Shape& target) {
    if (x.shape() == target) return x;
    const Shape orig = x.shape();
    return make_op<T>(kern::reduce_sum_to(x.value(), target), {x}, [orig](const VarT<T>& g) {
        return std::vector<VarT<T>>{broadcast_to(g, orig)};
    });
}

template <class T>
VarT<T> broadcast_to(const VarT<T>& x, const Shape& target) {
    if (x.shape() == target) return x;
    TensorT<T> ones = TensorT<T>::full(target, T(1));
    TensorT<T> v = kern::zip_broadcast(ones, x.value(), [](T o, T y) { return o * y; });
    const Shape orig = x.shape();
    return make_op<T>(std::move(v), {x}, [orig](const VarT<T>& g) {
        return std::vector<VarT<T>>{sum_to(g, orig)};
    });
}

template <class T>
VarT<T> sum_all(const VarT<T>& x) {
    const Shape orig = x.shape();
    TensorT<T> v = TensorT<T>::scalar(kern::sum_all(x.value()));
    return make_op<T>(std::move(v), {x}, [orig](const VarT<T>& g) {
        return std::vector<VarT<T>>{broadcast_to(g, orig)};
    });
}

template <class T>
VarT<T> mean_all(const VarT<T>& x) {
    return scale(sum_all(x), T(1) / T(x.numel()));
}

template <class T>
VarT<T> permute(const VarT<T>& x, std::vector<int> perm) {
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[size_t(perm[i])] = int(i);
    return make_op<T>(kern::permute(x.value(), perm), {x}, [inv](const VarT<T>& g) {
        return std::vector<VarT<T>>{permute(g, inv)};
    });
}

template <class T>
VarT<T> transpose2d(const VarT<T>& x) {
    return permute(x, {1, 0});
}

template <class T>
VarT<T> slice(const VarT<T>& x, int axis, int64_t start, int64_t len);

template <class T>
VarT<T> slice_adjoint(const VarT<T>& g, const Shape& full, int axis, int64_t start) {
    return make_op<T>(kern::slice_axis_adjoint(g.value(), full, axis, start), {g},
                      [axis, start, len = g.dim(axis)](const VarT<T>& gg) {
                          return std::vector<VarT<T>>{slice(gg, axis, start, len)};
                      });
}

template <class T>
VarT<T> slice(const VarT<T>& x, int axis, int64_t start, int64_t len) {
    const Shape full = x.shape();
    return make_op<T>(kern::slice_axis(x.value(), axis, start, len), {x},
                      [full, axis, start](const VarT<T>& g) {
                          return std::vector<VarT<T>>{slice_adjoint(g, full, axis, start)};
                      });
}

template <class T>
VarT<T> concat(const std::vector<VarT<T>>& parts, int axis) {
    std::vector<TensorT<T>> vals;
    vals.reserve(parts.size());
    for (const auto& p : parts) vals.push_back(p.value());
    std::vector<int64_t> lens;
    for (const auto& p : parts) lens.push_back(p.dim(axis));
    return make_op<T>(kern::concat_axis(vals, axis), parts, [lens, axis](const VarT<T>& g) {
        std::vector<VarT<T>> out;
        int64_t off = 0;
        for (int64_t len : lens) {
            out.push_back(slice(g, axis, off, len));
            off += len;
        }
        return out;
    });
}

// --------------------------------------------------------- matmul ---------

template <class T>
VarT<T> matmul(const VarT<T>& a, const VarT<T>& b) {
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    TensorT<T> v({M, N});
    kern::gemm_nn(a.value().data(), b.value().data(), v.data(), M, K, N);
    return make_op<T>(std::move(v), {a, b}, [a, b](const VarT<T>& g) {
        return std::vector<VarT<T>>{matmul_nt(g, b), matmul_tn(a, g)};
    });
}

template <class T>
VarT<T> matmul_nt(const VarT<T>& a, const VarT<T>& b) {
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(0);
    TensorT<T> v({M, N});
    kern::gemm_nt(a.value().data(), b.value().data(), v.data(), M, K, N);
    return make_op<T>(std::move(v), {a, b}, [a, b](const VarT<T>& g) {
        return std::vector<VarT<T>>{matmul(g, b), matmul_tn(g, a)};
    });
}

template <class T>
VarT<T> matmul_tn(const VarT<T>& a, const VarT<T>& b) {
    const int64_t K = a.dim(0), M = a.dim(1), N = b.dim(1);
    TensorT<T> v({M, N});
    kern::gemm_tn(a.value().data(), b.value().data(), v.data(), M, K, N);
    return make_op<T>(std::move(v), {a, b}, [a, b](const VarT<T>& g) {
        return std::vector<VarT<T>>{matmul_nt(b, g), matmul(a, g)};
    });
}

// ----------------------------------------------------------- conv ---------

template <class T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, int pad) {
    const int k = int(w.dim(2));
    return make_op<T>(kern::conv2d(x.value(), w.value(), pad), {x, w},
                      [x, w, k, pad](const VarT<T>& g) {
                          return std::vector<VarT<T>>{conv2d_dx(g, w, pad), conv2d_dw(x, g, k, pad)};
                      });
}

template <class T>
VarT<T> conv2d_dx(const VarT<T>& y, const VarT<T>& w, int pad) {
    const int k = int(w.dim(2));
    return make_op<T>(kern::conv2d_dx(y.value(), w.value(), pad), {y, w},
                      [y, w, k, pad](const VarT<T>& g) {
                          return std::vector<VarT<T>>{conv2d(g, w, pad), conv2d_dw(g, y, k, pad)};
                      });
}

template <class T>
VarT<T> conv2d_dw(const VarT<T>& x, const VarT<T>& y, int k, int pad) {
    return make_op<T>(kern::conv2d_dw(x.value(), y.value(), k, pad), {x, y},
                      [x, y, k, pad](const VarT<T>& g) {
                          return std::vector<VarT<T>>{conv2d_dx(y, g, pad), conv2d(x, g, pad)};
                      });
}

// -------------------------------------------------------- rowwise ---------

template <class T>
VarT<T> softmax_rows(const VarT<T>& x) {
    const int64_t R = x.dim(0), C = x.dim(1);
    TensorT<T> v({R, C});
    kern::softmax_rows(x.value().data(), v.data(), R, C);
    return make_op<T>(std::move(v), {x}, [x](const VarT<T>& g) {
        VarT<T> y = softmax_rows(x);  // recomputed from the parent
        VarT<T> gy = mul(g, y);
        VarT<T> rs = sum_to(gy, Shape{gy.dim(0), 1});
        return std::vector<VarT<T>>{sub(gy, mul(y, broadcast_to(rs, y.shape())))};
    });
}

template <class T>
VarT<T> gather_rows(const VarT<T>& x, std::shared_ptr<std::vector<int64_t>> idx);

// rowvals[r] scattered into a zero [R,C] matrix at column idx[r].
template <class T>
VarT<T> scatter_rows(const VarT<T>& rowvals, std::shared_ptr<std::vector<int64_t>> idx, int64_t C) {
    const int64_t R = rowvals.numel();
    TensorT<T> v({R, C});
    const T* src = rowvals.value().data();
    T* dst = v.data();
    for (int64_t r = 0; r < R; ++r) dst[r * C + (*idx)[size_t(r)]] = src[r];
    return make_op<T>(std::move(v), {rowvals}, [idx](const VarT<T>& g) {
        return std::vector<VarT<T>>{gather_rows(g, idx)};
    });
}

template <class T>
VarT<T> gather_rows(const VarT<T>& x, std::shared_ptr<std::vector<int64_t>> idx) {
    const int64_t R = x.dim(0), C = x.dim(1);
    TensorT<T> v({R});
    const T* src = x.value().data();
    T* dst = v.data();
    for (int64_t r = 0; r < R; ++r) dst[r] = src[r * C + (*idx)[size_t(r)]];
    return make_op<T>(std::move(v), {x}, [idx, C](const VarT<T>& g) {
        return std::vector<VarT<T>>{scatter_rows(g, idx, C)};
    });
}

// Per-row minimum; gradient routes to the argmin entry (ties: smallest index).
template <class T>
VarT<T> reduce_min_rows(const VarT<T>& x) {
    const int64_t R = x.dim(0), C = x.dim(1);
    TensorT<T> v({R});
    auto idx = std::make_shared<std::vector<int64_t>>(size_t(R));
    kern::reduce_min_rows(x.value().data(), v.data(), idx->data(), R, C);
    return make_op<T>(std::move(v), {x}, [idx, C](const VarT<T>& g) {
        return std::vector<VarT<T>>{scatter_rows(g, idx, C)};
    });
}

// -------------------------------------------------------- spatial ---------

template <class T>
VarT<T> upsample2(const VarT<T>& x);

template <class T>
VarT<T> avgpool2(const VarT<T>& x) {
    return make_op<T>(kern::avgpool2(x.value()), {x}, [](const VarT<T>& g) {
        return std::vector<VarT<T>>{scale(upsample2(g), T(0.25))};
    });
}

template <class T>
VarT<T> upsample2(const VarT<T>& x) {
    return make_op<T>(kern::upsample2_nearest(x.value()), {x}, [](const VarT<T>& g) {
        return std::vector<VarT<T>>{scale(avgpool2(g), T(4))};
    });
}

template <class T>
VarT<T> resize_bilinear(const VarT<T>& x, int64_t H2, int64_t W2);

template <class T>
VarT<T> resize_bilinear_adjoint(const VarT<T>& g, int64_t H, int64_t W) {
    const int64_t H2 = g.dim(2), W2 = g.dim(3);
    return make_op<T>(kern::resize_bilinear_adjoint(g.value(), H, W), {g},
                      [H2, W2](const VarT<T>& gg) {
                          return std::vector<VarT<T>>{resize_bilinear(gg, H2, W2)};
                      });
}

template <class T>
VarT<T> resize_bilinear(const VarT<T>& x, int64_t H2, int64_t W2) {
    const int64_t H = x.dim(2), W = x.dim(3);
    return make_op<T>(kern::resize_bilinear(x.value(), H2, W2), {x},
                      [H, W](const VarT<T>& g) {
                          return std::vector<VarT<T>>{resize_bilinear_adjoint(g, H, W)};
                      });
}

// --------------------------------------------- fused affinity warp --------
// First-order only: the VJP returns constants computed by the fused kernel.

template <class T>
VarT<T> affinity_warp(const VarT<T>& ct, const VarT<T>& cs, const VarT<T>& v, T tau) {
    const int64_t Q = ct.dim(0), P = cs.dim(0), C = v.dim(1);
    TensorT<T> out({Q, C});
    kern::affinity_warp(ct.value().data(), cs.value().data(), v.value().data(), out.data(), Q, P,
                        C, tau);
    TensorT<T> saved_out = out;
    return make_op<T>(std::move(out), {ct, cs, v},
                      [ct, cs, v, saved_out, tau, Q, P, C](const VarT<T>& g) {
                          TensorT<T> gct({Q, 2}), gcs({P, 2}), gv({P, C});
                          kern::affinity_warp_grad(ct.value().data(), cs.value().data(),
                                                   v.value().data(), saved_out.data(),
                                                   g.value().data(), gct.data(), gcs.data(),
                                                   gv.data(), Q, P, C, tau);
                          return std::vector<VarT<T>>{VarT<T>::constant(std::move(gct)),
                                                      VarT<T>::constant(std::move(gcs)),
                                                      VarT<T>::constant(std::move(gv))};
                      });
}

// ------------------------------------------------------- backward ---------

template <class T>
struct Gradients {
    std::unordered_map<const NodeT<T>*, VarT<T>> map;

    bool has(const VarT<T>& v) const { return map.count(v.node()) > 0; }
    VarT<T> operator[](const VarT<T>& v) const {
        auto it = map.find(v.node());
        if (it == map.end())
            throw std::runtime_error("backward: no gradient recorded for requested var");
        return it->second;
    }
    // Gradient tensor, or zeros when the var is unreachable from the root.
    TensorT<T> tensor_or_zero(const VarT<T>& v) const {
        auto it = map.find(v.node());
        if (it == map.end()) return TensorT<T>::zeros(v.shape());
        return it->second.value();
    }
};

// Reverse-mode sweep from a scalar root. Gradients are graph nodes
// themselves and may be differentiated again.
template <class T>
Gradients<T> backward(const VarT<T>& root) {
    if (root.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    Gradients<T> grads;
    if (!root.requires_grad()) return grads;

    // Collect the reachable requires-grad subgraph.
    std::unordered_map<const NodeT<T>*, VarT<T>> nodes;
    std::vector<VarT<T>> stack{root};
    while (!stack.empty()) {
        VarT<T> v = stack.back();
        stack.pop_back();
        if (nodes.count(v.node())) continue;
        nodes.emplace(v.node(), v);
        for (const auto& p : v.node()->parents)
            if (p.requires_grad() && !nodes.count(p.node())) stack.push_back(p);
    }
    std::vector<VarT<T>> order;
    order.reserve(nodes.size());
    for (auto& kv : nodes) order.push_back(kv.second);
    std::sort(order.begin(), order.end(),
              [](const VarT<T>& a, const VarT<T>& b) { return a.node()->id > b.node()->id; });

    grads.map.emplace(root.node(), VarT<T>::constant(TensorT<T>::full(root.shape(), T(1))));
    for (const auto& v : order) {
        auto it = grads.map.find(v.node());
        if (it == grads.map.end()) continue;  // no gradient flowed here
        const NodeT<T>* n = v.node();
        if (!n->vjp) continue;  // leaf
        std::vector<VarT<T>> pg = n->vjp(it->second);
        for (size_t i = 0; i < n->parents.size(); ++i) {
            const VarT<T>& p = n->parents[i];
            if (!p.requires_grad() || !pg[i].defined()) continue;
            auto pit = grads.map.find(p.node());
            if (pit == grads.map.end())
                grads.map.emplace(p.node(), pg[i]);
            else
                pit->second = add(pit->second, pg[i]);
        }
    }
    return grads;
}

// ----------------------------------------------------- conveniences -------

template <class T>
VarT<T> mse(const VarT<T>& a, const VarT<T>& b) {
    return mean_all(square(sub(a, b)));
}

template <class T>
VarT<T> l1(const VarT<T>& a, const VarT<T>& b) {
    return mean_all(abs(sub(a, b)));
}

template <class T> VarT<T> operator+(const VarT<T>& a, const VarT<T>& b) { return add(a, b); }
template <class T> VarT<T> operator-(const VarT<T>& a, const VarT<T>& b) { return sub(a, b); }
template <class T> VarT<T> operator*(const VarT<T>& a, const VarT<T>& b) { return mul(a, b); }
template <class T> VarT<T> operator/(const VarT<T>& a, const VarT<T>& b) { return div(a, b); }
template <class T> VarT<T> operator*(const VarT<T>& a, T s) { return scale(a, s); }
template <class T> VarT<T> operator*(T s, const VarT<T>& a) { return scale(a, s); }

using Var = VarT<real>;

}  // namespace coordgan::ad
