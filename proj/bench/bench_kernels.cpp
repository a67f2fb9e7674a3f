// Kernel throughput: serial reference vs OpenMP implementation. Sizes mirror
// the shapes the training loop actually runs.

#include <chrono>
#include <cstdio>
#include <functional>

#include "coordgan/kernels.hpp"
#include "coordgan/kernels_ref.hpp"
#include "coordgan/rng.hpp"

using namespace coordgan;

namespace {

double time_best_ms(const std::function<void()>& fn, int reps = 5) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double flops, double serial_ms, double omp_ms) {
    std::printf("%-28s serial %8.2f ms (%6.2f GF/s)   omp %8.2f ms (%6.2f GF/s)   speedup %.2fx\n",
                name, serial_ms, flops / serial_ms / 1e6, omp_ms, flops / omp_ms / 1e6,
                serial_ms / omp_ms);
}

}  // namespace

int main() {
    Rng rng(42);

    // GEMM at modulated-conv shape: [32, 306] x [306, 1024]
    {
        const int64_t M = 32, K = 306, N = 1024;
        Tensor a = Tensor::randn({M, K}, rng), b = Tensor::randn({K, N}, rng), c({M, N});
        const double flops = 2.0 * M * K * N;
        double s = time_best_ms([&] { kern::ref::gemm_nn(a.data(), b.data(), c.data(), M, K, N); });
        double p = time_best_ms([&] { kern::gemm_nn(a.data(), b.data(), c.data(), M, K, N); });
        report("gemm_nn 32x306x1024", flops, s, p);
    }

    // Batched mapping-net shape: [8192, 66] x [66, 128]
    {
        const int64_t M = 8192, K = 66, N = 128;
        Tensor a = Tensor::randn({M, K}, rng), b = Tensor::randn({K, N}, rng), c({M, N});
        const double flops = 2.0 * M * K * N;
        double s = time_best_ms([&] { kern::ref::gemm_nn(a.data(), b.data(), c.data(), M, K, N); });
        double p = time_best_ms([&] { kern::gemm_nn(a.data(), b.data(), c.data(), M, K, N); });
        report("gemm_nn 8192x66x128", flops, s, p);
    }

    // conv3x3 at generator shape: [8,34,32,32] -> [8,32,32,32]
    {
        Tensor x = Tensor::randn({8, 34, 32, 32}, rng);
        Tensor w = Tensor::randn({32, 34, 3, 3}, rng);
        const double flops = 2.0 * 8 * 32 * 34 * 9 * 32 * 32;
        double s = time_best_ms([&] { kern::ref::conv2d(x, w, 1); });
        double p = time_best_ms([&] { kern::conv2d(x, w, 1); });
        report("conv3x3 8x34x32x32", flops, s, p);
    }

    // fused affinity warp at training shape: 1024 x 1024 pixels, 3 channels
    {
        Tensor ct = Tensor::rand_uniform({1024, 2}, rng, -1, 1);
        Tensor cs = Tensor::rand_uniform({1024, 2}, rng, -1, 1);
        Tensor v = Tensor::randn({1024, 3}, rng);
        Tensor out({1024, 3});
        const double flops = 10.0 * 1024 * 1024;
        double s = time_best_ms([&] {
            kern::ref::affinity_warp(ct.data(), cs.data(), v.data(), out.data(), 1024, 1024, 3, 0.01f);
        });
        double p = time_best_ms([&] {
            kern::affinity_warp(ct.data(), cs.data(), v.data(), out.data(), 1024, 1024, 3, 0.01f);
        });
        report("affinity_warp 1024x1024", flops, s, p);
    }

    // pairwise sqdist at chamfer shape
    {
        Tensor a = Tensor::rand_uniform({1024, 2}, rng, -1, 1);
        Tensor b = Tensor::rand_uniform({1024, 2}, rng, -1, 1);
        Tensor d({1024, 1024});
        const double flops = 6.0 * 1024 * 1024;
        double s = time_best_ms([&] { kern::ref::pairwise_sqdist(a.data(), b.data(), d.data(), 1024, 1024, 2); });
        double p = time_best_ms([&] { kern::pairwise_sqdist(a.data(), b.data(), d.data(), 1024, 1024, 2); });
        report("sqdist 1024x1024", flops, s, p);
    }

    // softmax rows at affinity shape
    {
        Tensor x = Tensor::randn({1024, 1024}, rng);
        Tensor y({1024, 1024});
        const double flops = 4.0 * 1024 * 1024;
        double s = time_best_ms([&] { kern::ref::softmax_rows(x.data(), y.data(), 1024, 1024); });
        double p = time_best_ms([&] { kern::softmax_rows(x.data(), y.data(), 1024, 1024); });
        report("softmax_rows 1024x1024", flops, s, p);
    }
    return 0;
}
