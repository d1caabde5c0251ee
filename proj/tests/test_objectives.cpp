#include <cmath>

#include "doctest.h"
#include "tsg/objectives.hpp"

using namespace tsg;

namespace {

ScoreSet uniform_scores(float v) {
    return ScoreSet{Tensor::scalar(v), Tensor::scalar(v), Tensor::scalar(v), Tensor::scalar(v)};
}

Tensor vec(std::vector<float> v) {
    const int n = static_cast<int>(v.size());
    return Tensor::from({n}, std::move(v));
}

}  // namespace

TEST_CASE("generator loss unit values") {
    const double ln2 = std::log(2.0);

    std::vector<ScoreSet> half = {uniform_scores(0.5f)};
    CHECK(generator_loss(half).item() == doctest::Approx(4.0 * ln2).epsilon(1e-6));

    // two stages sum
    Tensor two_stage = add(generator_loss(half), generator_loss(half));
    CHECK(two_stage.item() == doctest::Approx(8.0 * ln2).epsilon(1e-6));

    std::vector<ScoreSet> perfect = {uniform_scores(1.0f)};
    CHECK(generator_loss(perfect).item() == doctest::Approx(0.0).epsilon(1e-7));

    // batch averaging
    std::vector<ScoreSet> pair = {uniform_scores(0.5f), uniform_scores(0.5f)};
    CHECK(generator_loss(pair).item() == doctest::Approx(4.0 * ln2).epsilon(1e-6));
}

TEST_CASE("discriminator loss unit values") {
    const double ln2 = std::log(2.0);

    std::vector<ScoreSet> real_perfect = {uniform_scores(1.0f)};
    std::vector<ScoreSet> fake_perfect = {uniform_scores(0.0f)};
    // log is clamped at 1e-12, so log(1-0) and log(1) are exact
    CHECK(discriminator_loss(real_perfect, fake_perfect).item() == doctest::Approx(0.0).epsilon(1e-7));

    std::vector<ScoreSet> half = {uniform_scores(0.5f)};
    CHECK(discriminator_loss(half, half).item() == doctest::Approx(8.0 * ln2).epsilon(1e-6));

    // identical real/fake score sets: confusion optimum at 8 ln 2
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const float v = static_cast<float>(rng.uniform(0.05, 0.95));
        std::vector<ScoreSet> same = {uniform_scores(v)};
        CHECK(discriminator_loss(same, same).item() >= doctest::Approx(8.0 * ln2).epsilon(1e-6));
    }
}

TEST_CASE("loss monotonicity in the scores") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const float base = static_cast<float>(rng.uniform(0.2, 0.7));
        const float bump = static_cast<float>(rng.uniform(0.01, 0.2));
        std::vector<ScoreSet> fake = {uniform_scores(base)};
        std::vector<ScoreSet> fake_up = {uniform_scores(base + bump)};
        CHECK(generator_loss(fake_up).item() < generator_loss(fake).item());

        std::vector<ScoreSet> real = {uniform_scores(base)};
        std::vector<ScoreSet> real_up = {uniform_scores(base + bump)};
        CHECK(discriminator_loss(real_up, fake).item() < discriminator_loss(real, fake).item());
    }
}

TEST_CASE("style loss: perfect, affine, hand-computed") {
    Tensor h = vec({1, 2, 3, 4});
    std::vector<Tensor> hs = {h};

    std::vector<Tensor> same = {vec({1, 2, 3, 4})};
    CHECK(style_loss(hs, same).item() == doctest::Approx(-1.0).epsilon(1e-6));

    std::vector<Tensor> affine = {vec({2.5f * 1 + 3, 2.5f * 2 + 3, 2.5f * 3 + 3, 2.5f * 4 + 3})};
    CHECK(style_loss(hs, affine).item() == doctest::Approx(-1.0).epsilon(1e-6));

    // rho([1,2,3,4],[1,3,2,4]) = 0.8
    std::vector<Tensor> swapped = {vec({1, 3, 2, 4})};
    CHECK(style_loss(hs, swapped).item() == doctest::Approx(-0.8).epsilon(1e-6));

    // zero variance guards to zero correlation
    std::vector<Tensor> flat = {vec({2, 2, 2, 2})};
    CHECK(style_loss(hs, flat).item() == doctest::Approx(0.0).epsilon(1e-6));

    // bounded in [-1, 1]
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> a(6), b(6);
        for (float& x : a) x = static_cast<float>(rng.uniform(-3.0, 3.0));
        for (float& x : b) x = static_cast<float>(rng.uniform(-3.0, 3.0));
        std::vector<Tensor> ha = {vec(std::vector<float>(a))};
        std::vector<Tensor> hb = {vec(std::vector<float>(b))};
        const double v = style_loss(ha, hb).item();
        CHECK(v >= -1.0 - 1e-6);
        CHECK(v <= 1.0 + 1e-6);
    }
}

TEST_CASE("total loss assembly") {
    Tensor adv = Tensor::scalar(2.0f);
    std::vector<Tensor> style = {Tensor::scalar(-1.5f)};

    CHECK(total_loss(adv, style, 0.0f).item() == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(total_loss(adv, style, 0.1f).item() == doctest::Approx(1.85).epsilon(1e-6));

    std::vector<Tensor> two = {Tensor::scalar(-1.0f), Tensor::scalar(0.5f)};
    CHECK(total_loss(adv, two, 0.1f).item() == doctest::Approx(2.0 - 0.1 + 0.05).epsilon(1e-6));
}

TEST_CASE("SL metric: zero, closed form, homogeneity, symmetry") {
    std::vector<float> s(48, 0.25f);
    CHECK(metric_sl(s, s) == 0.0);

    // 0.25 and 1.25 are exactly representable, so the difference is exactly 1
    std::vector<float> s_plus(48, 1.25f);
    CHECK(std::abs(metric_sl(s, s_plus) - std::sqrt(48.0) / 48.0) < 1e-9);

    Rng rng(13);
    std::vector<float> a(10), b(10), b2(10);
    for (size_t i = 0; i < 10; ++i) {
        a[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
        b[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
        b2[i] = a[i] + 3.0f * (b[i] - a[i]);  // difference scaled by 3
    }
    CHECK(metric_sl(a, b) == doctest::Approx(metric_sl(b, a)).epsilon(1e-12));
    CHECK(metric_sl(a, b2) == doctest::Approx(3.0 * metric_sl(a, b)).epsilon(1e-5));

    std::vector<float> short_vec(5, 0.0f);
    CHECK_THROWS_AS(metric_sl(s, short_vec), DimensionError);

    // triangle inequality (the 1/C scaling is common to all three terms)
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<float> x(12), y(12), z(12);
        for (size_t i = 0; i < 12; ++i) {
            x[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
            y[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
            z[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
        }
        CHECK(metric_sl(x, z) <= metric_sl(x, y) + metric_sl(y, z) + 1e-12);
    }
}

TEST_CASE("PSNR: cap, 20 dB, 0 dB") {
    Tensor img(Shape{3, 4, 4}, 0.5f);
    CHECK(metric_psnr(img, img, 1.0) == kPsnrCap);

    // mse 0.01 -> 20 dB at peak 1
    Tensor shifted = add_scalar(img, 0.1f);
    CHECK(metric_psnr(img, shifted, 1.0) == doctest::Approx(20.0).epsilon(1e-5));

    Tensor far = add_scalar(img, 1.0f);
    CHECK(metric_psnr(img, far, 1.0) == doctest::Approx(0.0).epsilon(1e-5));

    CHECK_THROWS_AS(metric_psnr(img, Tensor(Shape{3, 2, 2}, 0.0f), 1.0), DimensionError);
    CHECK_THROWS_AS(metric_psnr(img, img, 0.0), UsageError);
}

TEST_CASE("style loss gradients flow to the generated side only when attached") {
    // detached inputs yield a value but no gradient anywhere
    Tensor h_gt = vec({0.5f, -1.0f, 2.0f, 0.0f});
    Tensor h_gen = vec({0.4f, -0.8f, 1.5f, 0.2f});
    h_gen.set_requires_grad(true);
    {
        Tape tape;
        std::vector<Tensor> a = {h_gt}, b = {h_gen};
        Tensor loss = style_loss(a, b);
        tape.backward(loss);
    }
    double norm = 0.0;
    for (float g : h_gen.grad()) norm += std::abs(g);
    CHECK(norm > 0.0);
    CHECK(h_gt.grad().empty());
}
