#include "durdecomp/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace durdecomp::kernels {

#if defined(DURDECOMP_HAVE_AVX2)
const Table& avx2_table_impl() noexcept;
#endif

namespace {

#if defined(DURDECOMP_HAVE_AVX2)
bool cpu_has_avx2() noexcept {
#if defined(__GNUC__) || defined(__clang__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}
#endif

const Table* initial_choice() noexcept {
    const char* env = std::getenv("DURDECOMP_ISA");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_table();
    if (const Table* t = avx2_table()) return t;
    return &scalar_table();
}

std::atomic<const Table*>& slot() noexcept {
    static std::atomic<const Table*> current{initial_choice()};
    return current;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

const Table* avx2_table() noexcept {
#if defined(DURDECOMP_HAVE_AVX2)
    static const bool ok = cpu_has_avx2();
    return ok ? &avx2_table_impl() : nullptr;
#else
    return nullptr;
#endif
}

const Table& active() noexcept { return *slot().load(std::memory_order_relaxed); }

Isa select(Isa isa) noexcept {
    const Table* t = &scalar_table();
    if (isa == Isa::avx2 && avx2_table() != nullptr) t = avx2_table();
    slot().store(t, std::memory_order_relaxed);
    return t->isa;
}

}  // namespace durdecomp::kernels
