#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "resdepth/aligned.hpp"

namespace resdepth {

// Dense NCHW tensor. Buffers are reused across iterations via ensure().
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    NumVec<T> data;

    std::size_t size() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t sample_stride() const { return static_cast<std::size_t>(c) * h * w; }

    void ensure(int n_, int c_, int h_, int w_) {
        n = n_;
        c = c_;
        h = h_;
        w = w_;
        if (data.size() != size()) data.resize(size());
    }

    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    T* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_stride(); }
    const T* sample(int i) const {
        return data.data() + static_cast<std::size_t>(i) * sample_stride();
    }

    T& at(int ni, int ci, int y, int x) {
        return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }
    T at(int ni, int ci, int y, int x) const {
        return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }
};

} // namespace resdepth
