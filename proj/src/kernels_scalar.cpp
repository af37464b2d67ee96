#include "latformer/kernels.hpp"

#include <cstring>

// Reference backend. The loop orders and reduction lane scheme here define
// the numerical contract; the AVX2 backend reproduces them bit for bit.

namespace latformer::kern {
namespace {

void s_matmul_nn(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            const double* bt = b + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

double lane_dot(const double* a, const double* b, std::size_t n) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        l0 += a[i] * b[i];
        l1 += a[i + 1] * b[i + 1];
        l2 += a[i + 2] * b[i + 2];
        l3 += a[i + 3] * b[i + 3];
    }
    double s = (l0 + l1) + (l2 + l3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void s_matmul_nt(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = lane_dot(ai, b + j * k, k);
            ci[j] = accumulate ? ci[j] + d : d;
        }
    }
}

void s_matmul_tn(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t t = 0; t < k; ++t) {
        const double* at = a + t * m;
        const double* bt = b + t * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = at[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

void s_add(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void s_axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_scale(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

double s_dot(const double* a, const double* b, std::size_t n) {
    return lane_dot(a, b, n);
}

double s_sum(const double* a, std::size_t n) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        l0 += a[i];
        l1 += a[i + 1];
        l2 += a[i + 2];
        l3 += a[i + 3];
    }
    double s = (l0 + l1) + (l2 + l3);
    for (; i < n; ++i) s += a[i];
    return s;
}

void s_ew_max(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = b[i] > a[i] ? b[i] : a[i];
}

void s_min_inplace(double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) a[i] = b[i] < a[i] ? b[i] : a[i];
}

void s_relu(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_bwd_acc(const double* x, const double* g, double* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0) gx[i] += g[i];
}

void s_sqdist3(const double* xs, const double* ys, const double* zs, std::size_t n,
               double px, double py, double pz, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - px;
        const double dy = ys[i] - py;
        const double dz = zs[i] - pz;
        out[i] = (dx * dx + dy * dy) + dz * dz;
    }
}

} // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        "scalar",
        s_matmul_nn, s_matmul_nt, s_matmul_tn,
        s_add, s_sub, s_mul, s_axpy, s_scale,
        s_dot, s_sum, s_ew_max, s_min_inplace,
        s_relu, s_relu_bwd_acc, s_sqdist3,
    };
    return k;
}

} // namespace latformer::kern
