#pragma once

#include <algorithm>
#include <cstdint>

#include "fpie/parallel.hpp"

namespace fpie {

namespace detail {

// 4-row panel times a 16-wide column slab, accumulators held in registers.
// K runs in ascending order, so sums are independent of blocking and threads.
template <int MR>
inline void gemm_micro(const float* a, int64_t lda, const float* b, int64_t ldb,
                       float* c, int64_t ldc, int64_t K, int64_t nw) {
    float acc[MR][16] = {};
    for (int64_t k = 0; k < K; ++k) {
        const float* brow = b + k * ldb;
        for (int r = 0; r < MR; ++r) {
            const float av = a[r * lda + k];
            for (int64_t j = 0; j < 16; ++j) acc[r][j] += av * brow[j];
        }
    }
    if (nw == 16) {
        for (int r = 0; r < MR; ++r)
            for (int64_t j = 0; j < 16; ++j) c[r * ldc + j] += acc[r][j];
    } else {
        for (int r = 0; r < MR; ++r)
            for (int64_t j = 0; j < nw; ++j) c[r * ldc + j] += acc[r][j];
    }
}

inline void gemm_block(const float* A, const float* B, float* C, int64_t M, int64_t N,
                       int64_t K, int64_t j0, int64_t j1) {
    constexpr int64_t MR = 4;
    for (int64_t j = j0; j < j1; j += 16) {
        const int64_t nw = std::min<int64_t>(16, j1 - j);
        int64_t i = 0;
        for (; i + MR <= M; i += MR)
            gemm_micro<MR>(A + i * K, K, B + j, N, C + i * N + j, N, K, nw);
        for (; i < M; ++i)
            gemm_micro<1>(A + i * K, K, B + j, N, C + i * N + j, N, K, nw);
    }
}

} // namespace detail

/// C (MxN) += A (MxK) * B (KxN), all row-major. Set accumulate=false to
/// overwrite C. Parallel over column slabs; deterministic for any thread
/// count (fixed K-order accumulation, disjoint C regions per chunk).
inline void sgemm(const float* A, const float* B, float* C, int64_t M, int64_t N, int64_t K,
                  bool accumulate = false) {
    if (!accumulate) std::fill(C, C + M * N, 0.0f);
    const int64_t slab = 256;
    parallel_for(0, N, slab, [&](int64_t j0, int64_t j1) {
        detail::gemm_block(A, B, C, M, N, K, j0, j1);
    });
}

} // namespace fpie
