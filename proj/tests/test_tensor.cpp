#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "relight/tensor.hpp"
#include "test_util.hpp"

using relight::Tensor;

TEST_CASE("tensor construction and indexing") {
    Tensor t = Tensor::zeros({2, 3, 4});
    CHECK(t.rank() == 3);
    CHECK(t.size() == 24);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(2) == 4);
    t.at(1, 2, 3) = 7.5;
    CHECK(t[t.size() - 1] == doctest::Approx(7.5));

    Tensor f = Tensor::full({3}, -2.0);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == -2.0);

    Tensor d = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(d.at(0, 1) == 2.0);
    CHECK(d.at(1, 0) == 3.0);

    CHECK(Tensor::scalar(0.25).size() == 1);
    CHECK(Tensor::scalar(0.25)[0] == 0.25);
}

TEST_CASE("tensor row-major layout matches manual offsets") {
    Tensor t = Tensor::zeros({2, 3, 2, 2});
    t.at(1, 2, 1, 0) = 9.0;
    const std::size_t off = ((1 * 3 + 2) * 2 + 1) * 2 + 0;
    CHECK(t[off] == 9.0);
}

TEST_CASE("reshaped reinterprets the same buffer") {
    Tensor t = Tensor::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
    Tensor r = t.reshaped({3, 2});
    CHECK(r.at(2, 1) == 5.0);
    CHECK(r.at(0, 1) == 1.0);
    CHECK_THROWS_AS((void)t.reshaped({4, 2}), std::invalid_argument);
}

TEST_CASE("elementwise arithmetic and diff metrics") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 2}, {4, 3, 2, 1});
    CHECK(relight::add(a, b).at(0, 0) == 5.0);
    CHECK(relight::sub(a, b).at(1, 1) == 3.0);
    CHECK(relight::mul(a, b).at(0, 1) == 6.0);
    CHECK(relight::scale(a, 0.5).at(1, 0) == 1.5);

    CHECK(relight::max_abs_diff(a, b) == doctest::Approx(3.0));
    CHECK(relight::mean_abs_diff(a, b) == doctest::Approx((3 + 1 + 1 + 3) / 4.0));
    CHECK(relight::mean_sq_diff(a, b) == doctest::Approx((9 + 1 + 1 + 9) / 4.0));
    CHECK(relight::mean_sq_diff(a, a) == 0.0);
}

TEST_CASE("channel reductions") {
    // 1x2 image, 3 channels.
    Tensor x = Tensor::from_data({1, 2, 3}, {0.1, 0.5, 0.3, 1.0, 0.2, 0.6});
    Tensor mx = relight::channel_max(x);
    Tensor mn = relight::channel_mean(x);
    REQUIRE(mx.shape() == std::vector<int>{1, 2, 1});
    CHECK(mx.at(0, 0, 0) == doctest::Approx(0.5));
    CHECK(mx.at(0, 1, 0) == doctest::Approx(1.0));
    CHECK(mn.at(0, 0, 0) == doctest::Approx(0.3));
    CHECK(mn.at(0, 1, 0) == doctest::Approx(0.6));
}

TEST_CASE("2x2 pooling") {
    Tensor x = Tensor::from_data({2, 4, 1}, {1, 2, 5, 6,  //
                                             3, 4, 7, 8});
    Tensor avg = relight::pool_avg2x2(x);
    Tensor mx = relight::pool_max2x2(x);
    REQUIRE(avg.shape() == std::vector<int>{1, 2, 1});
    CHECK(avg.at(0, 0, 0) == doctest::Approx(2.5));
    CHECK(avg.at(0, 1, 0) == doctest::Approx(6.5));
    CHECK(mx.at(0, 0, 0) == doctest::Approx(4.0));
    CHECK(mx.at(0, 1, 0) == doctest::Approx(8.0));

    Tensor odd = Tensor::zeros({3, 4, 1});
    CHECK_THROWS_AS((void)relight::pool_avg2x2(odd), std::invalid_argument);
}

TEST_CASE("clamp01 and finiteness") {
    Tensor x = Tensor::from_data({4}, {-0.5, 0.25, 1.5, 1.0});
    Tensor c = relight::clamp01(x);
    CHECK(c[0] == 0.0);
    CHECK(c[1] == 0.25);
    CHECK(c[2] == 1.0);
    CHECK(c[3] == 1.0);

    CHECK(x.all_finite());
    x[2] = std::nan("");
    CHECK_FALSE(x.all_finite());
    x[2] = INFINITY;
    CHECK_FALSE(x.all_finite());

    Tensor y = Tensor::from_data({3}, {2.0, -1.0, 0.5});
    CHECK(y.min() == -1.0);
    CHECK(y.max() == 2.0);
}

TEST_CASE("pad_replicate_to_multiple extends bottom/right with border values") {
    Tensor x = Tensor::from_data({3, 3, 1}, {1, 2, 3,  //
                                             4, 5, 6,  //
                                             7, 8, 9});
    Tensor p = relight::pad_replicate_to_multiple(x, 4);
    REQUIRE(p.shape() == std::vector<int>{4, 4, 1});
    // Interior preserved.
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(p.at(i, j, 0) == x.at(i, j, 0));
    // Replicated edges and corner.
    CHECK(p.at(0, 3, 0) == 3.0);
    CHECK(p.at(3, 0, 0) == 7.0);
    CHECK(p.at(3, 3, 0) == 9.0);

    // Already aligned: unchanged shape and contents.
    Tensor a = Tensor::zeros({4, 8, 2});
    Tensor pa = relight::pad_replicate_to_multiple(a, 4);
    CHECK(pa.shape() == a.shape());
}

TEST_CASE("crop_topleft inverts alignment padding") {
    relight::Rng rng(11);
    Tensor x = testutil::random_tensor({5, 7, 3}, rng);
    Tensor p = relight::pad_replicate_to_multiple(x, 4);
    REQUIRE(p.shape() == std::vector<int>{8, 8, 3});
    Tensor back = relight::crop_topleft(p, 5, 7);
    CHECK(relight::max_abs_diff(back, x) == 0.0);
}

TEST_CASE("shape_str formats for error messages") {
    CHECK(Tensor::zeros({2, 3, 4}).shape_str() == "(2x3x4)");
}
