#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "relight/autograd.hpp"
#include "relight/rng.hpp"
#include "relight/tensor.hpp"
#include "test_util.hpp"

namespace ag = relight::ag;
using relight::Rng;
using relight::Tensor;

namespace {

// Builds a scalar from arbitrary-shaped output by probing with a fixed
// random tensor: tests the full Jacobian action, not just the row sums.
ag::Var scalarize(ag::Tape& tape, ag::Var y, const Tensor& probe) {
    return ag::sum_all(ag::mul(y, tape.constant(probe)));
}

using ForwardFn = std::function<ag::Var(ag::Tape&, std::vector<ag::Var>&)>;

// Central-difference gradient check. Returns the max relative error over all
// input elements; rel denominator max(1, |analytic|, |numeric|).
double gradcheck(const ForwardFn& f, std::vector<Tensor> inputs, double h = 1e-4) {
    std::vector<Tensor> analytic;
    {
        ag::Tape tape;
        std::vector<ag::Var> vars;
        vars.reserve(inputs.size());
        for (const Tensor& t : inputs) vars.push_back(tape.input(t));
        ag::Var y = f(tape, vars);
        REQUIRE(y.val().size() == 1);
        tape.backward(y);
        for (const ag::Var& v : vars) analytic.push_back(v.grad());
    }

    auto eval = [&](const std::vector<Tensor>& ins) {
        ag::Tape tape;
        std::vector<ag::Var> vars;
        for (const Tensor& t : ins) vars.push_back(tape.input(t));
        return f(tape, vars).val()[0];
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[i][j] += h;
            minus[i][j] -= h;
            const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
            const double an = analytic[i][j];
            const double rel =
                std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

constexpr double kTol = 1e-3;

}  // namespace

TEST_CASE("gradcheck elementwise ops") {
    Rng rng(101);
    Tensor a = testutil::random_tensor({2, 3, 2}, rng, 0.2, 1.0);
    Tensor b = testutil::random_tensor({2, 3, 2}, rng, 0.2, 1.0);
    Tensor probe = testutil::random_tensor({2, 3, 2}, rng);
    Tensor s = testutil::random_tensor({1}, rng, 0.5, 1.5);

    auto unary = [&](auto op) {
        return gradcheck(
            [&, op](ag::Tape& t, std::vector<ag::Var>& v) { return scalarize(t, op(v[0]), probe); },
            {a});
    };

    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::add(v[0], v[1]), probe);
          },
                    {a, b}) < kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::sub(v[0], v[1]), probe);
          },
                    {a, b}) < kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::mul(v[0], v[1]), probe);
          },
                    {a, b}) < kTol);
    CHECK(unary([](ag::Var x) { return ag::neg(x); }) < kTol);
    CHECK(unary([](ag::Var x) { return ag::scale(x, -2.5); }) < kTol);
    CHECK(unary([](ag::Var x) { return ag::add_const(x, 3.0); }) < kTol);
    CHECK(unary([](ag::Var x) { return ag::exp_of(x); }) < kTol);
    CHECK(unary([](ag::Var x) { return ag::gelu(x); }) < kTol);
    // abs at points bounded away from the kink.
    CHECK(unary([](ag::Var x) { return ag::abs_of(x); }) < kTol);

    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::mul_scalar(v[0], v[1]), probe);
          },
                    {a, s}) < kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::recip(v[0]), Tensor::scalar(1.7));
          },
                    {s}) < kTol);
}

TEST_CASE("clamp01 passes gradient only inside the active range") {
    // Elements strictly inside (0,1) pass gradient 1; clipped ones pass 0.
    Tensor x = Tensor::from_data({4}, {-0.5, 0.25, 0.75, 1.5});
    ag::Tape tape;
    ag::Var xv = tape.input(x);
    ag::Var y = ag::sum_all(ag::clamp01(xv));
    tape.backward(y);
    CHECK(xv.grad()[0] == 0.0);
    CHECK(xv.grad()[1] == 1.0);
    CHECK(xv.grad()[2] == 1.0);
    CHECK(xv.grad()[3] == 0.0);

    CHECK(ag::clamp01(tape.constant(x)).val()[0] == 0.0);
}

TEST_CASE("gradcheck reductions and broadcasts") {
    Rng rng(102);
    Tensor a = testutil::random_tensor({3, 2, 4}, rng, -1.0, 1.0);
    Tensor m = testutil::random_tensor({3, 2, 1}, rng, 0.3, 1.0);
    Tensor probe3 = testutil::random_tensor({3, 2, 4}, rng);
    Tensor probe1 = testutil::random_tensor({3, 2, 1}, rng);

    CHECK(gradcheck([](ag::Tape&, std::vector<ag::Var>& v) { return ag::mean_all(v[0]); }, {a}) <
          kTol);
    CHECK(gradcheck([](ag::Tape&, std::vector<ag::Var>& v) { return ag::sum_all(v[0]); }, {a}) <
          kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::channel_mean(v[0]), probe1);
          },
                    {a}) < kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::channel_bcast_mul(v[0], v[1]), probe3);
          },
                    {a, m}) < kTol);

    // Value oracle for the broadcast.
    ag::Tape tape;
    Tensor got = ag::channel_bcast_mul(tape.constant(a), tape.constant(m)).val();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 4; ++k)
                CHECK(got.at(i, j, k) == doctest::Approx(a.at(i, j, k) * m.at(i, j, 0)));
}

TEST_CASE("concat_c and slice_c are layout inverses with clean gradients") {
    Rng rng(103);
    Tensor a = testutil::random_tensor({2, 2, 3}, rng);
    Tensor b = testutil::random_tensor({2, 2, 2}, rng);
    Tensor probe = testutil::random_tensor({2, 2, 5}, rng);

    ag::Tape tape;
    ag::Var cat = ag::concat_c(tape.input(a), tape.input(b));
    REQUIRE(cat.val().shape() == std::vector<int>{2, 2, 5});
    CHECK(relight::max_abs_diff(ag::slice_c(cat, 0, 3).val(), a) == 0.0);
    CHECK(relight::max_abs_diff(ag::slice_c(cat, 3, 2).val(), b) == 0.0);

    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::concat_c(v[0], v[1]), probe);
          },
                    {a, b}) < kTol);
    Tensor probe2 = testutil::random_tensor({2, 2, 2}, rng);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::slice_c(v[0], 1, 2), probe2);
          },
                    {testutil::random_tensor({2, 2, 4}, rng)}) < kTol);
}

TEST_CASE("tokens round-trips the buffer") {
    Rng rng(104);
    Tensor a = testutil::random_tensor({3, 4, 5}, rng);
    ag::Tape tape;
    ag::Var tk = ag::tokens(tape.constant(a));
    REQUIRE(tk.val().shape() == std::vector<int>{12, 5});
    CHECK(tk.val().at(7, 2) == a.at(1, 3, 2));  // token 7 = pixel (1,3)
    ag::Var back = ag::map_from_tokens(tk, 3, 4);
    CHECK(relight::max_abs_diff(back.val(), a) == 0.0);
}

TEST_CASE("fwd_diff forward values and gradient") {
    Tensor x = Tensor::from_data({2, 3, 1}, {1, 2, 4,  //
                                             0, 5, 9});
    ag::Tape tape;
    Tensor dh = ag::fwd_diff(tape.constant(x), 1).val();
    CHECK(dh.at(0, 0, 0) == 1.0);
    CHECK(dh.at(0, 1, 0) == 2.0);
    CHECK(dh.at(0, 2, 0) == 0.0);  // replicate border: final column zero
    CHECK(dh.at(1, 0, 0) == 5.0);
    CHECK(dh.at(1, 2, 0) == 0.0);
    Tensor dv = ag::fwd_diff(tape.constant(x), 0).val();
    CHECK(dv.at(0, 0, 0) == -1.0);
    CHECK(dv.at(0, 2, 0) == 5.0);
    CHECK(dv.at(1, 1, 0) == 0.0);  // final row zero

    Rng rng(105);
    Tensor a = testutil::random_tensor({3, 4, 2}, rng);
    Tensor probe = testutil::random_tensor({3, 4, 2}, rng);
    for (int axis : {0, 1}) {
        CHECK(gradcheck([&, axis](ag::Tape& t, std::vector<ag::Var>& v) {
                  return scalarize(t, ag::fwd_diff(v[0], axis), probe);
              },
                        {a}) < kTol);
    }
}

TEST_CASE("matmul matches naive loops in all transpose modes") {
    Rng rng(106);
    const int m = 3, k = 4, n = 2;
    Tensor A = testutil::random_tensor({m, k}, rng);
    Tensor B = testutil::random_tensor({k, n}, rng);
    Tensor At = Tensor::zeros({k, m});
    Tensor Bt = Tensor::zeros({n, k});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) At.at(j, i) = A.at(i, j);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) Bt.at(j, i) = B.at(i, j);

    Tensor want = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p) want.at(i, j) += A.at(i, p) * B.at(p, j);

    ag::Tape tape;
    CHECK(relight::max_abs_diff(ag::matmul(tape.constant(A), tape.constant(B)).val(), want) <
          1e-12);
    CHECK(relight::max_abs_diff(
              ag::matmul(tape.constant(At), tape.constant(B), true, false).val(), want) < 1e-12);
    CHECK(relight::max_abs_diff(
              ag::matmul(tape.constant(A), tape.constant(Bt), false, true).val(), want) < 1e-12);
    CHECK(relight::max_abs_diff(
              ag::matmul(tape.constant(At), tape.constant(Bt), true, true).val(), want) < 1e-12);

    Tensor probe = testutil::random_tensor({m, n}, rng);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::matmul(v[0], v[1]), probe);
          },
                    {A, B}) < kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::matmul(v[0], v[1], true, false), probe);
          },
                    {At, B}) < kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::matmul(v[0], v[1], false, true), probe);
          },
                    {A, Bt}) < kTol);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::matmul(v[0], v[1], true, true), probe);
          },
                    {At, Bt}) < kTol);
}

TEST_CASE("softmax_rows is row-stochastic with correct gradient") {
    Rng rng(107);
    Tensor a = testutil::random_tensor({3, 5}, rng, -2.0, 2.0);
    ag::Tape tape;
    Tensor y = ag::softmax_rows(tape.constant(a)).val();
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 5; ++j) {
            CHECK(y.at(i, j) > 0.0);
            row += y.at(i, j);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Shift invariance per row.
    Tensor shifted = a;
    for (int j = 0; j < 5; ++j) shifted.at(1, j) += 10.0;
    Tensor y2 = ag::softmax_rows(tape.constant(shifted)).val();
    for (int j = 0; j < 5; ++j) CHECK(y2.at(1, j) == doctest::Approx(y.at(1, j)).epsilon(1e-10));

    Tensor probe = testutil::random_tensor({3, 5}, rng);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::softmax_rows(v[0]), probe);
          },
                    {a}) < kTol);
}

TEST_CASE("unit_columns normalizes channels over tokens") {
    Rng rng(108);
    Tensor a = testutil::random_tensor({6, 3}, rng, 0.1, 2.0);
    ag::Tape tape;
    Tensor y = ag::unit_columns(tape.constant(a)).val();
    for (int c = 0; c < 3; ++c) {
        double norm = 0.0;
        for (int t = 0; t < 6; ++t) norm += y.at(t, c) * y.at(t, c);
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-10));
    }

    Tensor probe = testutil::random_tensor({6, 3}, rng);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::unit_columns(v[0]), probe);
          },
                    {a}) < kTol);
}

namespace {

Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
    const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    Tensor out = Tensor::zeros({ho, wo, cout});
    for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j)
            for (int co = 0; co < cout; ++co) {
                double acc = b ? (*b)[static_cast<std::size_t>(co)] : 0.0;
                for (int ki = 0; ki < kh; ++ki)
                    for (int kj = 0; kj < kw; ++kj) {
                        const int ii = i * stride + ki - pad;
                        const int jj = j * stride + kj - pad;
                        if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
                        for (int ci = 0; ci < cin; ++ci)
                            acc += x.at(ii, jj, ci) * w.at(ki, kj, ci, co);
                    }
                out.at(i, j, co) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("conv2d matches a naive loop and gradchecks") {
    Rng rng(109);
    struct Case {
        int h, w, cin, cout, k, stride, pad;
    };
    for (const Case& c : {Case{5, 6, 2, 3, 3, 1, 1}, Case{6, 6, 3, 2, 4, 2, 1},
                          Case{4, 5, 1, 2, 1, 1, 0}}) {
        Tensor x = testutil::random_tensor({c.h, c.w, c.cin}, rng);
        Tensor w = testutil::random_tensor({c.k, c.k, c.cin, c.cout}, rng, -0.5, 0.5);
        Tensor b = testutil::random_tensor({c.cout}, rng, -0.1, 0.1);
        Tensor want = conv2d_naive(x, w, &b, c.stride, c.pad);

        ag::Tape tape;
        Tensor got = ag::conv2d(tape.constant(x), tape.constant(w), tape.constant(b), c.stride,
                                c.pad)
                         .val();
        REQUIRE(got.shape() == want.shape());
        CHECK(relight::max_abs_diff(got, want) < 1e-12);

        Tensor probe = testutil::random_tensor(want.shape(), rng);
        CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
                  return scalarize(
                      t, ag::conv2d(v[0], v[1], v[2], c.stride, c.pad), probe);
              },
                        {x, w, b}) < kTol);
    }

    // Bias-free form.
    ag::Tape tape;
    Tensor x = testutil::random_tensor({3, 3, 2}, rng);
    Tensor w = testutil::random_tensor({3, 3, 2, 2}, rng);
    Tensor no_bias = conv2d_naive(x, w, nullptr, 1, 1);
    CHECK(relight::max_abs_diff(
              ag::conv2d(tape.constant(x), tape.constant(w), ag::Var{}, 1, 1).val(), no_bias) <
          1e-12);
}

TEST_CASE("conv2d_transpose upsamples and gradchecks") {
    Rng rng(110);
    // 1x1 input, 2x2 kernel, stride 2: output is x scaled by the kernel.
    Tensor x1 = Tensor::from_data({1, 1, 1}, {2.0});
    Tensor w1 = Tensor::from_data({2, 2, 1, 1}, {1, 2, 3, 4});
    ag::Tape tape;
    Tensor up = ag::conv2d_transpose(tape.constant(x1), tape.constant(w1), ag::Var{}, 2).val();
    REQUIRE(up.shape() == std::vector<int>{2, 2, 1});
    CHECK(up.at(0, 0, 0) == 2.0);
    CHECK(up.at(0, 1, 0) == 4.0);
    CHECK(up.at(1, 0, 0) == 6.0);
    CHECK(up.at(1, 1, 0) == 8.0);

    Tensor x = testutil::random_tensor({3, 4, 2}, rng);
    Tensor w = testutil::random_tensor({2, 2, 2, 3}, rng, -0.5, 0.5);
    Tensor b = testutil::random_tensor({3}, rng, -0.1, 0.1);
    ag::Var y = ag::conv2d_transpose(tape.constant(x), tape.constant(w), tape.constant(b), 2);
    REQUIRE(y.val().shape() == std::vector<int>{6, 8, 3});

    Tensor probe = testutil::random_tensor({6, 8, 3}, rng);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::conv2d_transpose(v[0], v[1], v[2], 2), probe);
          },
                    {x, w, b}) < kTol);
}

TEST_CASE("dwconv3x3 is per-channel and gradchecks") {
    Rng rng(111);
    Tensor x = testutil::random_tensor({4, 5, 3}, rng);
    Tensor w = testutil::random_tensor({3, 3, 3}, rng, -0.5, 0.5);
    Tensor b = testutil::random_tensor({3}, rng, -0.1, 0.1);

    // Naive per-channel loop with zero padding 1.
    Tensor want = Tensor::zeros({4, 5, 3});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j)
            for (int c = 0; c < 3; ++c) {
                double acc = b[static_cast<std::size_t>(c)];
                for (int ki = 0; ki < 3; ++ki)
                    for (int kj = 0; kj < 3; ++kj) {
                        const int ii = i + ki - 1, jj = j + kj - 1;
                        if (ii < 0 || ii >= 4 || jj < 0 || jj >= 5) continue;
                        acc += x.at(ii, jj, c) * w.at(ki, kj, c);
                    }
                want.at(i, j, c) = acc;
            }

    ag::Tape tape;
    Tensor got = ag::dwconv3x3(tape.constant(x), tape.constant(w), tape.constant(b)).val();
    CHECK(relight::max_abs_diff(got, want) < 1e-12);

    Tensor probe = testutil::random_tensor({4, 5, 3}, rng);
    CHECK(gradcheck([&](ag::Tape& t, std::vector<ag::Var>& v) {
              return scalarize(t, ag::dwconv3x3(v[0], v[1], v[2]), probe);
          },
                    {x, w, b}) < kTol);
}

TEST_CASE("params accumulate gradients across reuse") {
    ag::Param p(Tensor::from_data({2}, {1.5, -0.5}));
    Tensor x = Tensor::from_data({2}, {2.0, 3.0});
    ag::Tape tape;
    ag::Var pv = tape.param(p);
    ag::Var xv = tape.input(x);
    // y = sum(p*x) + sum(p*p): dy/dp = x + 2p.
    ag::Var y = ag::add(ag::sum_all(ag::mul(pv, xv)), ag::sum_all(ag::mul(pv, pv)));
    tape.backward(y);
    CHECK(p.grad[0] == doctest::Approx(2.0 + 3.0));
    CHECK(p.grad[1] == doctest::Approx(3.0 - 1.0));
    CHECK(relight::max_abs_diff(xv.grad(), p.value) == 0.0);

    p.zero_grad();
    CHECK(p.grad[0] == 0.0);
}

TEST_CASE("FreezeScope turns params into constants but keeps the graph alive") {
    ag::Param p(Tensor::from_data({2}, {2.0, 4.0}));
    Tensor x = Tensor::from_data({2}, {1.0, -1.0});

    ag::Tape tape;
    ag::Var xv = tape.input(x);
    ag::Var y;
    {
        ag::FreezeScope freeze(tape);
        CHECK_FALSE(tape.grad_enabled());
        ag::Var pv = tape.param(p);
        y = ag::sum_all(ag::mul(pv, xv));
    }
    CHECK(tape.grad_enabled());
    // Downstream of the scope, gradients still flow to the input...
    tape.backward(y);
    CHECK(relight::max_abs_diff(xv.grad(), p.value) == 0.0);
    // ...but the frozen parameter receives none.
    CHECK(p.grad[0] == 0.0);
    CHECK(p.grad[1] == 0.0);
}

TEST_CASE("grad-disabled tape computes identical forward values") {
    Rng rng(112);
    Tensor x = testutil::random_tensor({3, 3, 2}, rng);
    Tensor w = testutil::random_tensor({3, 3, 2, 2}, rng);
    ag::Param pw(w);

    ag::Tape train;
    Tensor y_train = ag::conv2d(train.input(x), train.param(pw), ag::Var{}, 1, 1).val();

    ag::Tape infer(false);
    CHECK_FALSE(infer.grad_enabled());
    Tensor y_infer = ag::conv2d(infer.input(x), infer.param(pw), ag::Var{}, 1, 1).val();

    CHECK(relight::max_abs_diff(y_train, y_infer) == 0.0);
}
