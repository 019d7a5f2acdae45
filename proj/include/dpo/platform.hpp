#pragma once

#include <cstdlib>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dpo {

/// Keeps the 100-200 KiB activation buffers on the heap instead of fresh
/// mmap pages; glibc otherwise maps and unmaps them on every forward pass.
inline void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace dpo
