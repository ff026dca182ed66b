#include "kldiff/runtime.hpp"

#include <cstdlib>  // defines __GLIBC__ on glibc systems

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace kldiff {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 25);  // glibc ignores values above 32 MiB
  mallopt(M_TRIM_THRESHOLD, 1 << 29);
#endif
}

}  // namespace kldiff
