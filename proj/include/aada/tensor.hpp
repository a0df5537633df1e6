#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <numeric>
#include <vector>

namespace aada {

/// 64-byte-aligned allocator. Keeping every numeric buffer on the same
/// alignment makes vectorized reduction order a function of indices alone,
/// never of the heap address, which is what the bitwise-determinism
/// guarantees rest on.
template <typename T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) {}

    T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }
    template <class U>
    bool operator==(const AlignedAlloc<U>&) const {
        return true;
    }
};

using AlignedDoubles = std::vector<double, AlignedAlloc<double>>;

/// Dense row-major tensor of doubles. Image batches use {B,C,H,W},
/// single rasters {C,H,W}, label maps {H,W} (stored in LabelMap below),
/// vectors {n} and scalars {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), 0.0);
    }
    Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), fill);
    }
    Tensor(std::vector<int> shape, const double* src) : shape_(std::move(shape)) {
        data_.assign(src, src + count(shape_));
    }

    static Tensor scalar(double v) { return Tensor({1}, v); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void reshape(std::vector<int> shape) {
        assert(count(shape) == size());
        shape_ = std::move(shape);
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<int> shape_;
    AlignedDoubles data_;
};

/// Integer label raster, {H,W}. Values in {0..l-1} or kIgnoreLabel.
struct LabelMap {
    int h = 0;
    int w = 0;
    std::vector<int> v;

    LabelMap() = default;
    LabelMap(int height, int width, int fill = 0)
        : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {}

    int& at(int i, int j) { return v[static_cast<size_t>(i) * w + j]; }
    int at(int i, int j) const { return v[static_cast<size_t>(i) * w + j]; }
    bool empty() const { return v.empty(); }
    int64_t size() const { return static_cast<int64_t>(v.size()); }
};

inline constexpr int kIgnoreLabel = 255;

}  // namespace aada
