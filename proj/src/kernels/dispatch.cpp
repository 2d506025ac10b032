#include <cstdlib>
#include <string_view>

#include "capgen/kernels.hpp"

namespace capgen::kernels {

#if defined(CAPGEN_HAVE_AVX2)
const KernelTable& avx2_table_unchecked();
#endif

const KernelTable* avx2_table() {
#if defined(CAPGEN_HAVE_AVX2)
    static const bool supported = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    }();
    return supported ? &avx2_table_unchecked() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    static const KernelTable& table = []() -> const KernelTable& {
        if (const char* env = std::getenv("CAPGEN_SIMD"); env && std::string_view(env) == "off")
            return scalar_table();
        if (const KernelTable* simd = avx2_table()) return *simd;
        return scalar_table();
    }();
    return table;
}

}  // namespace capgen::kernels
