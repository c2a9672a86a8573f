#pragma once

#include <cstddef>
#include <exception>

namespace calib {

enum class Exec { Serial, Parallel };

// Index loop over [0, n). The parallel flavour runs under OpenMP and
// rethrows the first captured exception after the region ends, since an
// exception escaping an OpenMP region aborts the process. Work must only
// touch per-index state for the two flavours to agree.
template <class Fn>
void parallel_for(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::Parallel) {
    std::exception_ptr first_error = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long i = 0; i < static_cast<long>(n); ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
#ifdef _OPENMP
#pragma omp critical(calib_parallel_for_error)
#endif
        {
          if (!first_error) first_error = std::current_exception();
        }
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace calib
