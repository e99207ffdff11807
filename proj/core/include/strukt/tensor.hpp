#pragma once

#include <cstddef>
#include <new>
#include <vector>

#include "strukt/error.hpp"

namespace strukt {

// 64-byte-aligned storage. SIMD reductions split at the first aligned
// element, so fixing the base alignment makes every elementwise and
// reduction order a pure function of the tensor shape; results are then
// bit-identical across runs regardless of heap layout.
template <class T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
    friend bool operator!=(const AlignedAllocator&, const AlignedAllocator&) { return false; }
};

using AlignedDoubles = std::vector<double, AlignedAllocator<double>>;

// Dense row-major [rows x cols] of doubles. Training is 64-bit throughout so
// finite-difference checks are decisive.
struct Tensor {
    int rows = 0;
    int cols = 0;
    AlignedDoubles data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Tensor(int r, int c, const std::vector<double>& values)
        : rows(r), cols(c), data(values.begin(), values.end()) {
        if (data.size() != static_cast<std::size_t>(r) * c)
            throw ContractError("tensor: value count does not match shape");
    }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    bool allocated() const { return !data.empty() || size() == 0; }

    // Drops the buffer but keeps the shape (for post-backward accounting).
    void release() {
        data.clear();
        data.shrink_to_fit();
    }

    static Tensor scalar(double v) { return Tensor(1, 1, {v}); }
    static Tensor column(const std::vector<double>& v) {
        return Tensor(static_cast<int>(v.size()), 1, v);
    }
};

}  // namespace strukt
