#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace resdepth {

// 64-byte-aligned allocator for numeric buffers. Wide-vector kernels pick
// code paths based on pointer alignment; pinning every buffer to one
// alignment keeps floating-point results identical from run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <typename T>
using NumVec = std::vector<T, AlignedAllocator<T>>;

} // namespace resdepth
