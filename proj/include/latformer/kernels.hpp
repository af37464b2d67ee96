#pragma once

#include <cstddef>

// Dense double-precision kernels behind the array engine. Two backends:
// a scalar reference and an AVX2 variant selected at runtime. Both produce
// bitwise-identical results: no FMA contraction, and every reduction uses
// the same fixed order (four interleaved lane accumulators over index
// i mod 4, combined as (l0+l1)+(l2+l3), then the tail in order).

namespace latformer::kern {

enum class Backend { scalar, avx2 };

struct Kernels {
    const char* name;

    // c (+)= a(m x k) * b(k x n), all row-major. accumulate=false zeroes c first.
    void (*matmul_nn)(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
    // c (+)= a(m x k) * b(n x k)^T, i.e. c[i][j] = dot(row a_i, row b_j).
    void (*matmul_nt)(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
    // c (+)= a(k x m)^T * b(k x n).
    void (*matmul_tn)(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);

    void (*add)(const double* a, const double* b, double* c, std::size_t n);
    void (*sub)(const double* a, const double* b, double* c, std::size_t n);
    void (*mul)(const double* a, const double* b, double* c, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
    void (*scale)(double alpha, const double* x, double* y, std::size_t n); // y = alpha*x
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    void (*ew_max)(const double* a, const double* b, double* c, std::size_t n); // ties keep a
    void (*min_inplace)(double* a, const double* b, std::size_t n);             // a = min(a,b)
    void (*relu)(const double* x, double* y, std::size_t n);
    void (*relu_bwd_acc)(const double* x, const double* g, double* gx, std::size_t n); // gx += g*[x>0]
    // out[i] = (xs[i]-px)^2 + (ys[i]-py)^2 + (zs[i]-pz)^2
    void (*sqdist3)(const double* xs, const double* ys, const double* zs, std::size_t n,
                    double px, double py, double pz, double* out);
};

const Kernels& scalar_kernels();
const Kernels* avx2_kernels();   // nullptr when unsupported on this machine
bool avx2_available();

const Kernels& active();
bool set_backend(Backend b);     // false if the backend is unavailable
Backend current_backend();

} // namespace latformer::kern
