#include "latformer/kernels.hpp"

#include <atomic>

namespace latformer::kern {

bool avx2_available() {
#if defined(LATFORMER_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    static const bool ok = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") != 0;
    }();
    return ok;
#else
    return false;
#endif
}

namespace {

std::atomic<const Kernels*>& slot() {
    static std::atomic<const Kernels*> s{nullptr};
    return s;
}

const Kernels* pick_default() {
    if (const Kernels* v = avx2_kernels()) return v;
    return &scalar_kernels();
}

} // namespace

const Kernels& active() {
    const Kernels* k = slot().load(std::memory_order_acquire);
    if (!k) {
        k = pick_default();
        slot().store(k, std::memory_order_release);
    }
    return *k;
}

bool set_backend(Backend b) {
    switch (b) {
    case Backend::scalar:
        slot().store(&scalar_kernels(), std::memory_order_release);
        return true;
    case Backend::avx2:
        if (const Kernels* v = avx2_kernels()) {
            slot().store(v, std::memory_order_release);
            return true;
        }
        return false;
    }
    return false;
}

Backend current_backend() {
    return &active() == &scalar_kernels() ? Backend::scalar : Backend::avx2;
}

} // namespace latformer::kern
