#include "kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace patcher::detail {

static int max_threads() {
    static int n = [] {
        if (const char* env = std::getenv("PATCHER_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return std::min(v, 64);
        }
        unsigned hw = std::thread::hardware_concurrency();
        return static_cast<int>(std::clamp(hw, 1u, 8u));
    }();
    return n;
}

static thread_local int parallel_depth = 0;

void parallel_for(int64_t n, int64_t cost_per_index, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    const int threads = max_threads();
    // Spawning threads costs ~100us; only split work that dwarfs that.
    // Nested regions run inline to avoid oversubscription.
    const int64_t total_cost = n * std::max<int64_t>(cost_per_index, 1);
    if (threads <= 1 || n < 2 || total_cost < 2'000'000 || parallel_depth > 0) {
        body(0, n);
        return;
    }
    const int workers = static_cast<int>(std::min<int64_t>(threads, n));
    const int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) {
        int64_t begin = t * chunk;
        int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] {
            ++parallel_depth;
            body(begin, end);
            --parallel_depth;
        });
    }
    ++parallel_depth;
    body(0, std::min<int64_t>(chunk, n));
    --parallel_depth;
    for (auto& th : pool) th.join();
}

void mm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    parallel_for(m, 2 * k * n, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            float* crow = c + i * n;
            if (!accumulate) zero_fill(crow, n);
            const float* arow = a + i * k;
            for (int64_t p = 0; p < k; ++p) {
                const float av = arow[p];
                if (av == 0.0f) continue;
                const float* brow = b + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

void mm_nt(const float* a, const float* b, float* c, int64_t m, int64_t n, int64_t k, bool accumulate) {
    parallel_for(m, 2 * k * n, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const float* arow = a + i * n;
            float* crow = c + i * k;
            for (int64_t p = 0; p < k; ++p) {
                const float* brow = b + p * n;
                float acc = 0.0f;
                for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
                if (accumulate) {
                    crow[p] += acc;
                } else {
                    crow[p] = acc;
                }
            }
        }
    });
}

void mm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    parallel_for(k, 2 * m * n, [=](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
            float* crow = c + p * n;
            if (!accumulate) zero_fill(crow, n);
            for (int64_t i = 0; i < m; ++i) {
                const float av = a[i * k + p];
                if (av == 0.0f) continue;
                const float* brow = b + i * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

}  // namespace patcher::detail
