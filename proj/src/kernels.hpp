#pragma once

#include <cstdint>
#include <cstring>
#include <functional>

namespace patcher::detail {

// Runs body(begin, end) over [0, n) split across threads. Work is only split
// across independent output elements and every element is produced by a
// single sequential loop, so results are bitwise identical for any thread
// count. `cost` is an estimate of per-index work used to decide whether
// threading is worth the spawn overhead.
void parallel_for(int64_t n, int64_t cost_per_index, const std::function<void(int64_t, int64_t)>& body);

// C [m,n] = or += A [m,k] * B [k,n], all row-major.
void mm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate);

// C [m,k] = or += A [m,n] * B^T where B is [k,n] row-major.
void mm_nt(const float* a, const float* b, float* c, int64_t m, int64_t n, int64_t k, bool accumulate);

// C [k,n] = or += A^T * B where A is [m,k], B is [m,n], row-major.
void mm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n, bool accumulate);

inline void zero_fill(float* p, int64_t n) { std::memset(p, 0, static_cast<size_t>(n) * sizeof(float)); }

}  // namespace patcher::detail
