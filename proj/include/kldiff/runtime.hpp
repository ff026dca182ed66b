#pragma once

namespace kldiff {

/// Keeps freed network temporaries on the heap instead of returning them to
/// the OS after every batch. No-op outside glibc. Call once from main().
void tune_allocator();

}  // namespace kldiff
