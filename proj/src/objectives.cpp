#include "tsg/objectives.hpp"

#include <cmath>

namespace tsg {

namespace {

Tensor batch_mean(std::vector<Tensor> terms) {
    Tensor acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return mul_scalar(acc, 1.0f / static_cast<float>(terms.size()));
}

}  // namespace

Tensor generator_loss(std::span<const ScoreSet> fake) {
    if (fake.empty()) throw UsageError("generator_loss: empty batch");
    std::vector<Tensor> terms;
    terms.reserve(fake.size());
    for (const ScoreSet& s : fake) {
        Tensor sum = add(add(log(s.s_s), log(s.s_i)), add(log(s.s_cs), log(s.s_ci)));
        terms.push_back(neg(sum));
    }
    return batch_mean(std::move(terms));
}

Tensor discriminator_loss(std::span<const ScoreSet> real, std::span<const ScoreSet> fake) {
    if (real.empty() || real.size() != fake.size()) {
        throw UsageError("discriminator_loss: real/fake batch sizes differ");
    }
    const Tensor one = Tensor::scalar(1.0f);
    std::vector<Tensor> terms;
    terms.reserve(real.size());
    for (size_t i = 0; i < real.size(); ++i) {
        const ScoreSet& r = real[i];
        const ScoreSet& f = fake[i];
        Tensor real_sum = add(add(log(r.s_s), log(r.s_i)), add(log(r.s_cs), log(r.s_ci)));
        Tensor fake_sum = add(add(log(sub(one, f.s_s)), log(sub(one, f.s_i))),
                              add(log(sub(one, f.s_cs)), log(sub(one, f.s_ci))));
        terms.push_back(neg(add(real_sum, fake_sum)));
    }
    return batch_mean(std::move(terms));
}

Tensor style_loss(std::span<const Tensor> h_real, std::span<const Tensor> h_gen) {
    if (h_real.empty() || h_real.size() != h_gen.size()) {
        throw UsageError("style_loss: batch sizes differ");
    }
    std::vector<Tensor> terms;
    terms.reserve(h_real.size());
    for (size_t i = 0; i < h_real.size(); ++i) terms.push_back(neg(pearson(h_real[i], h_gen[i])));
    return batch_mean(std::move(terms));
}

Tensor total_loss(const Tensor& adversarial, std::span<const Tensor> style_terms, float lambda) {
    Tensor out = adversarial;
    for (const Tensor& s : style_terms) out = add(out, mul_scalar(s, lambda));
    return out;
}

double metric_sl(std::span<const float> target, std::span<const float> generated) {
    if (target.size() != generated.size() || target.empty()) {
        throw DimensionError("metric_sl: style vectors of lengths " + std::to_string(target.size()) + " and " +
                             std::to_string(generated.size()));
    }
    double sq = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        const double d = static_cast<double>(generated[i]) - target[i];
        sq += d * d;
    }
    return std::sqrt(sq) / static_cast<double>(target.size());
}

double metric_psnr(const Tensor& a, const Tensor& b, double peak) {
    if (a.shape() != b.shape()) {
        throw DimensionError("metric_psnr: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    if (peak <= 0.0) throw UsageError("metric_psnr: peak must be positive");
    double mse = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.values()[i]) - b.values()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

}  // namespace tsg
