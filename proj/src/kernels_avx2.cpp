#include "latformer/kernels.hpp"

// AVX2 backend. Compiled only when the toolchain supports -mavx2; selected at
// runtime only when the CPU reports AVX2. Multiplies and adds stay separate
// (no FMA) and reductions use the shared four-lane scheme, so every kernel is
// bitwise-equal to the scalar reference.

#if defined(LATFORMER_HAVE_AVX2)

#include <immintrin.h>

#include <cstring>

namespace latformer::kern {
namespace {

void v_matmul_nn(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            const __m256d vav = _mm256_set1_pd(av);
            const double* bt = b + t * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(ci + j);
                __m256d bv = _mm256_loadu_pd(bt + j);
                cv = _mm256_add_pd(cv, _mm256_mul_pd(vav, bv));
                _mm256_storeu_pd(ci + j, cv);
            }
            for (; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

double v_lane_dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_loadu_pd(a + i);
        const __m256d bv = _mm256_loadu_pd(b + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(av, bv));
    }
    alignas(32) double l[4];
    _mm256_store_pd(l, acc);
    double s = (l[0] + l[1]) + (l[2] + l[3]);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void v_matmul_nt(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = v_lane_dot(ai, b + j * k, k);
            ci[j] = accumulate ? ci[j] + d : d;
        }
    }
}

void v_matmul_tn(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t t = 0; t < k; ++t) {
        const double* at = a + t * m;
        const double* bt = b + t * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = at[i];
            const __m256d vav = _mm256_set1_pd(av);
            double* ci = c + i * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(ci + j);
                __m256d bv = _mm256_loadu_pd(bt + j);
                cv = _mm256_add_pd(cv, _mm256_mul_pd(vav, bv));
                _mm256_storeu_pd(ci + j, cv);
            }
            for (; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

template <typename ScalarOp>
void ew_loop(const double* a, const double* b, double* c, std::size_t n,
             __m256d (*vop)(__m256d, __m256d), ScalarOp sop) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = sop(a[i], b[i]);
}

__m256d vop_add(__m256d x, __m256d y) { return _mm256_add_pd(x, y); }
__m256d vop_sub(__m256d x, __m256d y) { return _mm256_sub_pd(x, y); }
__m256d vop_mul(__m256d x, __m256d y) { return _mm256_mul_pd(x, y); }

void v_add(const double* a, const double* b, double* c, std::size_t n) {
    ew_loop(a, b, c, n, vop_add, [](double x, double y) { return x + y; });
}
void v_sub(const double* a, const double* b, double* c, std::size_t n) {
    ew_loop(a, b, c, n, vop_sub, [](double x, double y) { return x - y; });
}
void v_mul(const double* a, const double* b, double* c, std::size_t n) {
    ew_loop(a, b, c, n, vop_mul, [](double x, double y) { return x * y; });
}

void v_axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void v_scale(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = alpha * x[i];
}

double v_dot(const double* a, const double* b, std::size_t n) {
    return v_lane_dot(a, b, n);
}

double v_sum(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    alignas(32) double l[4];
    _mm256_store_pd(l, acc);
    double s = (l[0] + l[1]) + (l[2] + l[3]);
    for (; i < n; ++i) s += a[i];
    return s;
}

// max(a,b) with ties keeping a: maxpd returns the second operand on equality.
void v_ew_max(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_max_pd(_mm256_loadu_pd(b + i), _mm256_loadu_pd(a + i)));
    for (; i < n; ++i) c[i] = b[i] > a[i] ? b[i] : a[i];
}

void v_min_inplace(double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(a + i, _mm256_min_pd(_mm256_loadu_pd(b + i), _mm256_loadu_pd(a + i)));
    for (; i < n; ++i) a[i] = b[i] < a[i] ? b[i] : a[i];
}

void v_relu(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

// Blend keeps the untouched gx bit pattern where x <= 0.
void v_relu_bwd_acc(const double* x, const double* g, double* gx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        const __m256d old = _mm256_loadu_pd(gx + i);
        const __m256d upd = _mm256_add_pd(old, _mm256_loadu_pd(g + i));
        _mm256_storeu_pd(gx + i, _mm256_blendv_pd(old, upd, mask));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) gx[i] += g[i];
}

void v_sqdist3(const double* xs, const double* ys, const double* zs, std::size_t n,
               double px, double py, double pz, double* out) {
    const __m256d vx = _mm256_set1_pd(px);
    const __m256d vy = _mm256_set1_pd(py);
    const __m256d vz = _mm256_set1_pd(pz);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vy);
        const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vz);
        const __m256d s = _mm256_add_pd(
            _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
            _mm256_mul_pd(dz, dz));
        _mm256_storeu_pd(out + i, s);
    }
    for (; i < n; ++i) {
        const double dx = xs[i] - px;
        const double dy = ys[i] - py;
        const double dz = zs[i] - pz;
        out[i] = (dx * dx + dy * dy) + dz * dz;
    }
}

} // namespace

const Kernels* avx2_kernels() {
    if (!avx2_available()) return nullptr;
    static const Kernels k = {
        "avx2",
        v_matmul_nn, v_matmul_nt, v_matmul_tn,
        v_add, v_sub, v_mul, v_axpy, v_scale,
        v_dot, v_sum, v_ew_max, v_min_inplace,
        v_relu, v_relu_bwd_acc, v_sqdist3,
    };
    return &k;
}

} // namespace latformer::kern

#else

namespace latformer::kern {
const Kernels* avx2_kernels() { return nullptr; }
} // namespace latformer::kern

#endif
