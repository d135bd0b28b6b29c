#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace steprl {

// Graph tensors are allocated and freed by the thousand per update. With
// glibc defaults the larger ones go through mmap/munmap and the heap top is
// trimmed after every graph, which costs about as much time as the math.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace steprl
