#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "ref_math.hpp"
#include "tsg/tensor.hpp"

using namespace tsg;

namespace {

Tensor t2(std::vector<float> v, int r, int c) { return Tensor::from({r, c}, std::move(v)); }

}  // namespace

TEST_CASE("matmul examples") {
    // identity case
    Tensor a = t2({1, 0, 0, 1}, 2, 2);
    Tensor b = t2({1, 2, 3, 4}, 2, 2);
    Tensor out = matmul(a, b);
    CHECK(out.values()[0] == 1.0f);
    CHECK(out.values()[1] == 2.0f);
    CHECK(out.values()[2] == 3.0f);
    CHECK(out.values()[3] == 4.0f);

    // zero case
    Tensor z = matmul(b, t2({0, 0, 0, 0}, 2, 2));
    for (float v : z.values()) CHECK(v == 0.0f);

    // hand-evaluated dot products
    Tensor col = matmul(b, t2({5, 6}, 2, 1));
    CHECK(col.at({0, 0}) == doctest::Approx(17.0f));
    CHECK(col.at({1, 0}) == doctest::Approx(39.0f));

    CHECK_THROWS_AS(matmul(b, t2({1, 2, 3}, 3, 1)), DimensionError);
    try {
        matmul(b, t2({1, 2, 3}, 3, 1));
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x2]") != std::string::npos);
        CHECK(msg.find("[3x1]") != std::string::npos);
    }
}

TEST_CASE("softmax examples and properties") {
    Tensor s = softmax(Tensor::from({2}, {0.0f, 0.0f}), 0);
    CHECK(s.values()[0] == doctest::Approx(0.5f));
    CHECK(s.values()[1] == doctest::Approx(0.5f));

    Tensor s2 = softmax(Tensor::from({2}, {std::log(2.0f), 0.0f}), 0);
    CHECK(s2.values()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(s2.values()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    Tensor one = softmax(Tensor::from({1}, {3.7f}), 0);
    CHECK(one.values()[0] == doctest::Approx(1.0f));

    CHECK_THROWS_AS(softmax(Tensor::from({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}), 0), NumericError);

    // column-stochastic along the normalized axis, strictly positive
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int r = 2 + rng.uniform_int(4), c = 2 + rng.uniform_int(4);
        std::vector<float> vals(static_cast<size_t>(r) * c);
        for (float& v : vals) v = static_cast<float>(rng.uniform(-5.0, 5.0));
        Tensor m = Tensor::from({r, c}, vals);
        Tensor sm = softmax(m, 0);
        for (int j = 0; j < c; ++j) {
            double sum = 0.0;
            for (int i = 0; i < r; ++i) {
                CHECK(sm.at({i, j}) > 0.0f);
                sum += sm.at({i, j});
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("fully_connected examples") {
    Tensor i2 = t2({1, 0, 0, 1}, 2, 2);
    Tensor out = fully_connected(Tensor::from({2}, {1, 1}), i2, Tensor::from({2}, {0, 0}));
    CHECK(out.values()[0] == doctest::Approx(1.0f));
    CHECK(out.values()[1] == doctest::Approx(1.0f));

    Tensor out2 = fully_connected(Tensor::from({2}, {2, 3}), i2, Tensor::from({2}, {1, 1}));
    CHECK(out2.values()[0] == doctest::Approx(3.0f));
    CHECK(out2.values()[1] == doctest::Approx(4.0f));

    Tensor out3 = fully_connected(Tensor::from({2}, {1, 2}), t2({1, 2, 3, 4}, 2, 2), Tensor::from({2}, {0, 0}));
    CHECK(out3.values()[0] == doctest::Approx(7.0f));
    CHECK(out3.values()[1] == doctest::Approx(10.0f));

    CHECK_THROWS_AS(fully_connected(Tensor::from({3}, {1, 2, 3}), i2, Tensor::from({2}, {0, 0})), DimensionError);
}

TEST_CASE("conv1x1 examples and matmul-route equivalence") {
    Rng rng(11);
    std::vector<float> img(2 * 5 * 6);
    for (float& v : img) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor x = Tensor::from({2, 5, 6}, img);

    Tensor ident = conv1x1(x, t2({1, 0, 0, 1}, 2, 2));
    for (int64_t i = 0; i < x.size(); ++i) CHECK(ident.values()[i] == x.values()[i]);

    Tensor zero = conv1x1(x, t2({0, 0, 0, 0}, 2, 2));
    for (float v : zero.values()) CHECK(v == 0.0f);

    // per-pixel sum with a 2->1 weight of ones
    std::vector<float> vals(2 * 5 * 6, 0.0f);
    vals[3 * 6 + 4] = 3.0f;              // channel 0, pixel (3,4)
    vals[5 * 6 + 3 * 6 + 4] = 4.0f;      // channel 1, same pixel
    Tensor x2 = Tensor::from({2, 5, 6}, vals);
    Tensor summed = conv1x1(x2, t2({1, 1}, 1, 2));
    CHECK(summed.at({0, 3, 4}) == doctest::Approx(7.0f));

    // dual route: direct kernel vs matmul over the flattened spatial axis
    for (int trial = 0; trial < 10; ++trial) {
        const int ci = 1 + rng.uniform_int(4), co = 1 + rng.uniform_int(4);
        const int h = 2 + rng.uniform_int(3), w = 2 + rng.uniform_int(3);
        std::vector<float> xv(static_cast<size_t>(ci) * h * w), wv(static_cast<size_t>(co) * ci);
        for (float& v : xv) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        for (float& v : wv) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        Tensor xc = Tensor::from({ci, h, w}, xv);
        Tensor wc = Tensor::from({co, ci}, wv);
        Tensor direct = conv1x1(xc, wc);
        Tensor via_mm = reshape(matmul(wc, reshape(xc, {ci, h * w})), {co, h, w});
        for (int64_t i = 0; i < direct.size(); ++i) {
            CHECK(direct.values()[i] == doctest::Approx(via_mm.values()[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("elementwise suite examples") {
    CHECK(sigmoid(Tensor::scalar(0.0f)).item() == doctest::Approx(0.5f));

    Tensor joined = concat({Tensor({48}, 1.0f), Tensor({48}, 2.0f)}, 0);
    CHECK(joined.size() == 96);

    Tensor up = upsample_nearest(Tensor::from({1, 2, 2}, {1, 2, 3, 4}), 2);
    CHECK(up.shape() == Shape{1, 4, 4});
    CHECK(up.at({0, 0, 0}) == 1.0f);
    CHECK(up.at({0, 0, 1}) == 1.0f);
    CHECK(up.at({0, 1, 1}) == 1.0f);
    CHECK(up.at({0, 0, 2}) == 2.0f);
    CHECK(up.at({0, 3, 3}) == 4.0f);

    // log clamp keeps non-positive inputs finite
    Tensor lg = log(Tensor::from({3}, {0.0f, -1.0f, 1.0f}));
    CHECK(std::isfinite(lg.values()[0]));
    CHECK(std::isfinite(lg.values()[1]));
    CHECK(lg.values()[2] == doctest::Approx(0.0f));
}

TEST_CASE("conv_down4x4 zero input gives zero output with zero bias") {
    Tensor x(Shape{3, 8, 8}, 0.0f);
    Tensor w(Shape{5, 3, 4, 4}, 0.3f);
    Tensor b(Shape{5}, 0.0f);
    Tensor out = conv_down4x4(x, w, b);
    CHECK(out.shape() == Shape{5, 4, 4});
    for (float v : out.values()) CHECK(v == 0.0f);
    CHECK_THROWS_AS(conv_down4x4(Tensor(Shape{3, 7, 8}), w, b), DimensionError);
}

TEST_CASE("backward basics") {
    // root = sum(W x) with x fixed: dL/dW[i][j] = x[j]
    Tensor w = Tensor::from({2, 2}, {0.5f, -1.0f, 2.0f, 0.25f}, true);
    Tensor x = Tensor::from({2, 1}, {3.0f, 4.0f});
    {
        Tape tape;
        Tensor loss = sum_all(matmul(w, x));
        tape.backward(loss);
    }
    CHECK(w.grad()[0] == doctest::Approx(3.0f));
    CHECK(w.grad()[1] == doctest::Approx(4.0f));
    CHECK(w.grad()[2] == doctest::Approx(3.0f));
    CHECK(w.grad()[3] == doctest::Approx(4.0f));

    // constant root: parameters keep zero grads
    Tensor p = Tensor::from({2}, {1.0f, 2.0f}, true);
    {
        Tape tape;
        Tensor loss = sum_all(Tensor::from({2}, {5.0f, 6.0f}));
        tape.backward(loss);
    }
    CHECK(p.grad().empty());

    // non-scalar root is a usage error
    {
        Tape tape;
        Tensor y = mul_scalar(p, 2.0f);
        CHECK_THROWS_AS(tape.backward(y), UsageError);
    }
}

TEST_CASE("pearson of a vector with itself is stationary") {
    Rng rng(23);
    std::vector<float> vals(8);
    for (float& v : vals) v = static_cast<float>(rng.uniform(-1.5, 1.5));
    Tensor h = Tensor::from({8}, vals, true);
    {
        Tape tape;
        Tensor rho = pearson(h, h);
        CHECK(rho.item() == doctest::Approx(1.0f).epsilon(1e-6));
        tape.backward(rho);
    }
    for (float g : h.grad()) CHECK(std::abs(g) < 1e-4f);

    // finite differences confirm stationarity
    refm::dvec hd(vals.begin(), vals.end());
    auto f = [](const refm::dvec& x) { return refm::pearson(x, x); };
    for (double g : refm::finite_diff(f, hd)) CHECK(std::abs(g) < 1e-6);
}

TEST_CASE("shared subexpression accumulates like a duplicated subgraph") {
    std::vector<float> vals = {0.3f, -0.7f, 1.2f};
    Tensor a = Tensor::from({3}, {0.9f, -1.1f, 0.4f});
    Tensor b = Tensor::from({3}, {-0.2f, 0.8f, 1.5f});

    Tensor x_shared = Tensor::from({3}, vals, true);
    {
        Tape tape;
        Tensor s = sigmoid(x_shared);  // used twice
        Tensor loss = add(sum_all(mul(s, a)), sum_all(mul(s, b)));
        tape.backward(loss);
    }

    Tensor x_dup = Tensor::from({3}, vals, true);
    {
        Tape tape;
        Tensor s1 = sigmoid(x_dup);
        Tensor s2 = sigmoid(x_dup);  // duplicated subgraph
        Tensor loss = add(sum_all(mul(s1, a)), sum_all(mul(s2, b)));
        tape.backward(loss);
    }

    for (int i = 0; i < 3; ++i) CHECK(x_shared.grad()[i] == doctest::Approx(x_dup.grad()[i]).epsilon(1e-7));
}

TEST_CASE("detached tensors stop gradient flow") {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
    {
        Tape tape;
        Tensor y = mul_scalar(x, 3.0f).detach();
        Tensor loss = sum_all(mul(y, y));
        tape.backward(loss);
    }
    CHECK(x.grad().empty());
}

TEST_CASE("per-op finite difference sweep") {
    const auto reports = gradcheck::run_all_op_checks(1234, 10);
    CHECK(reports.size() >= 30);
    for (const auto& r : reports) {
        INFO(r.op, " max_rel_err=", r.max_rel_err);
        CHECK(r.max_rel_err < 1e-5);
    }
}
