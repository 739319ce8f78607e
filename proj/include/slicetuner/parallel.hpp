#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slicetuner {

// Runs body(i) for i in [0, count). With parallel = true and OpenMP enabled the
// iterations are spread over threads; the first exception thrown by any
// iteration is rethrown on the calling thread after the loop.
template <typename Body>
void parallel_for(std::size_t count, bool parallel, Body&& body) {
    if (!parallel || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
#ifdef _OPENMP
    std::exception_ptr first;
    std::mutex guard;
    const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < n; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(guard);
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
#else
    for (std::size_t i = 0; i < count; ++i) body(i);
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace slicetuner
