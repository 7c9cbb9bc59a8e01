#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace relight {

// Dense row-major tensor of doubles, rank 1..4, last axis contiguous.
// Conventions used throughout:
//   image maps   (H, W, C)
//   token views  (T, C) with T = H*W, memory-compatible with (H, W, C)
//   conv kernels (kh, kw, Cin, Cout)
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data);
    static Tensor scalar(double value) { return full({1}, value); }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }

    double& at(int i, int j) { return v_[static_cast<std::size_t>(i) * d_[1] + j]; }
    double at(int i, int j) const { return v_[static_cast<std::size_t>(i) * d_[1] + j]; }
    double& at(int i, int j, int k) {
        return v_[(static_cast<std::size_t>(i) * d_[1] + j) * d_[2] + k];
    }
    double at(int i, int j, int k) const {
        return v_[(static_cast<std::size_t>(i) * d_[1] + j) * d_[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return v_[((static_cast<std::size_t>(i) * d_[1] + j) * d_[2] + k) * d_[3] + l];
    }
    double at(int i, int j, int k, int l) const {
        return v_[((static_cast<std::size_t>(i) * d_[1] + j) * d_[2] + k) * d_[3] + l];
    }

    // Reinterprets the buffer under a new shape of equal element count.
    Tensor reshaped(std::vector<int> shape) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double min() const;
    double max() const;
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::array<int, 4> d_{1, 1, 1, 1};  // padded dims for fast indexing
    std::vector<double> v_;

    void set_shape(std::vector<int> shape);
};

// Elementwise helpers on plain tensors (gradient-free paths).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
double mean_abs_diff(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
double mean_sq_diff(const Tensor& a, const Tensor& b);

// (H,W,C) -> (H,W,1) reductions over the channel axis.
Tensor channel_max(const Tensor& x);
Tensor channel_mean(const Tensor& x);

// 2x downsampling of an (H,W,1) map; H and W must be even.
Tensor pool_avg2x2(const Tensor& x);
Tensor pool_max2x2(const Tensor& x);

Tensor clamp01(const Tensor& x);

// Extends an (H,W,C) tensor on the bottom/right with replicated border rows
// and columns until both spatial dims are multiples of m.
Tensor pad_replicate_to_multiple(const Tensor& x, int m);
// Top-left (h,w) spatial crop of an (H,W,C) tensor.
Tensor crop_topleft(const Tensor& x, int h, int w);

}  // namespace relight
