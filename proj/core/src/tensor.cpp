#include "relight/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace relight {

void Tensor::set_shape(std::vector<int> shape) {
    if (shape.empty() || shape.size() > 4)
        throw std::invalid_argument("tensor rank must be 1..4");
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
        n *= static_cast<std::size_t>(d);
    }
    shape_ = std::move(shape);
    d_ = {1, 1, 1, 1};
    for (std::size_t i = 0; i < shape_.size(); ++i) d_[i] = shape_[i];
    v_.assign(n, 0.0);
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    t.set_shape(std::move(shape));
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.v_.begin(), t.v_.end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
    Tensor t;
    t.set_shape(std::move(shape));
    if (data.size() != t.v_.size())
        throw std::invalid_argument("tensor data size does not match shape " + t.shape_str());
    t.v_ = std::move(data);
    return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    Tensor t;
    t.set_shape(std::move(shape));
    if (t.v_.size() != v_.size())
        throw std::invalid_argument("reshape changes element count");
    t.v_ = v_;
    return t;
}

bool Tensor::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

double Tensor::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double x : v_) m = std::min(m, x);
    return m;
}

double Tensor::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v_) m = std::max(m, x);
    return m;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return out;
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mean_abs_diff");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double mean_sq_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mean_sq_diff");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

Tensor channel_max(const Tensor& x) {
    if (x.rank() != 3) throw std::invalid_argument("channel_max expects (H,W,C)");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out = Tensor::zeros({h, w, 1});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double m = x.at(i, j, 0);
            for (int k = 1; k < c; ++k) m = std::max(m, x.at(i, j, k));
            out.at(i, j, 0) = m;
        }
    return out;
}

Tensor channel_mean(const Tensor& x) {
    if (x.rank() != 3) throw std::invalid_argument("channel_mean expects (H,W,C)");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out = Tensor::zeros({h, w, 1});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double s = 0.0;
            for (int k = 0; k < c; ++k) s += x.at(i, j, k);
            out.at(i, j, 0) = s / c;
        }
    return out;
}

Tensor pool_avg2x2(const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) % 2 || x.dim(1) % 2)
        throw std::invalid_argument("pool_avg2x2 expects (H,W,C) with even H,W");
    const int h = x.dim(0) / 2, w = x.dim(1) / 2, c = x.dim(2);
    Tensor out = Tensor::zeros({h, w, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k)
                out.at(i, j, k) = 0.25 * (x.at(2 * i, 2 * j, k) + x.at(2 * i, 2 * j + 1, k) +
                                          x.at(2 * i + 1, 2 * j, k) + x.at(2 * i + 1, 2 * j + 1, k));
    return out;
}

Tensor pool_max2x2(const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) % 2 || x.dim(1) % 2)
        throw std::invalid_argument("pool_max2x2 expects (H,W,C) with even H,W");
    const int h = x.dim(0) / 2, w = x.dim(1) / 2, c = x.dim(2);
    Tensor out = Tensor::zeros({h, w, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k)
                out.at(i, j, k) =
                    std::max(std::max(x.at(2 * i, 2 * j, k), x.at(2 * i, 2 * j + 1, k)),
                             std::max(x.at(2 * i + 1, 2 * j, k), x.at(2 * i + 1, 2 * j + 1, k)));
    return out;
}

Tensor clamp01(const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    return out;
}

Tensor pad_replicate_to_multiple(const Tensor& x, int m) {
    if (x.rank() != 3) throw std::invalid_argument("pad_replicate_to_multiple expects (H,W,C)");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const int ph = (m - h % m) % m, pw = (m - w % m) % m;
    if (ph == 0 && pw == 0) return x;
    Tensor out = Tensor::zeros({h + ph, w + pw, c});
    for (int i = 0; i < h + ph; ++i) {
        const int si = std::min(i, h - 1);
        for (int j = 0; j < w + pw; ++j) {
            const int sj = std::min(j, w - 1);
            for (int k = 0; k < c; ++k) out.at(i, j, k) = x.at(si, sj, k);
        }
    }
    return out;
}

Tensor crop_topleft(const Tensor& x, int h, int w) {
    if (x.rank() != 3 || h > x.dim(0) || w > x.dim(1))
        throw std::invalid_argument("crop_topleft out of range");
    if (h == x.dim(0) && w == x.dim(1)) return x;
    const int c = x.dim(2);
    Tensor out = Tensor::zeros({h, w, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) out.at(i, j, k) = x.at(i, j, k);
    return out;
}

}  // namespace relight
