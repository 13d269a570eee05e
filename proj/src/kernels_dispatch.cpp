#include "povmap/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace povmap::kernels {

const Ops *avx2_ops_table(); // defined in kernels_avx2.cpp

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

struct Selection {
    const Ops *ops;
    const char *name;
};

Selection select() {
    const Ops *avx2 = avx2_ops_table();
    const bool usable = avx2 != nullptr && cpu_has_avx2();
    const char *env = std::getenv("POVMAP_SIMD");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) {
        return {&scalar_ops(), "scalar"};
    }
    if (env != nullptr && std::strcmp(env, "avx2") == 0 && usable) {
        return {avx2, "avx2"};
    }
    if (env == nullptr || std::strcmp(env, "auto") == 0) {
        if (usable) {
            return {avx2, "avx2"};
        }
    }
    return {&scalar_ops(), "scalar"};
}

const Selection &selection() {
    static const Selection s = select();
    return s;
}

} // namespace

const Ops &ops() { return *selection().ops; }

const Ops *avx2_ops() {
    const Ops *avx2 = avx2_ops_table();
    return (avx2 != nullptr && cpu_has_avx2()) ? avx2 : nullptr;
}

const char *active_name() { return selection().name; }

} // namespace povmap::kernels
