#include "tsg/codec.hpp"

#include <cmath>
#include <cstring>
#include <vector>

#include "tsg/rng.hpp"

namespace tsg {

namespace {

// Gram-Schmidt in double precision over a seeded normal matrix. The seed
// fully determines the result, so two codecs with the same config are
// byte-identical.
std::vector<float> orthogonal_matrix(int n, uint64_t seed) {
    Rng rng = Rng::stream(seed, "codec.mixing");
    std::vector<double> m(static_cast<size_t>(n) * n);
    for (double& v : m) v = rng.normal();
    for (int i = 0; i < n; ++i) {
        double* row = &m[static_cast<size_t>(i) * n];
        for (int j = 0; j < i; ++j) {
            const double* prev = &m[static_cast<size_t>(j) * n];
            double dot = 0.0;
            for (int k = 0; k < n; ++k) dot += row[k] * prev[k];
            for (int k = 0; k < n; ++k) row[k] -= dot * prev[k];
        }
        double norm = 0.0;
        for (int k = 0; k < n; ++k) norm += row[k] * row[k];
        norm = std::sqrt(norm);
        for (int k = 0; k < n; ++k) row[k] /= norm;
    }
    std::vector<float> out(m.size());
    for (size_t i = 0; i < m.size(); ++i) out[i] = static_cast<float>(m[i]);
    return out;
}

}  // namespace

ImageCodec::ImageCodec(CodecConfig config) : config_(config) {
    if (config_.squeeze < 1) throw ConfigError("codec: squeeze factor must be >= 1");
    const int c = config_.channels();
    mixing_ = Tensor::from({c, c}, orthogonal_matrix(c, config_.mixing_seed));
    std::vector<float> t(static_cast<size_t>(c) * c);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) t[static_cast<size_t>(j) * c + i] = mixing_.values()[static_cast<size_t>(i) * c + j];
    unmixing_ = Tensor::from({c, c}, std::move(t));
}

Tensor ImageCodec::encode(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("codec encode: expected [3,H,W], got " + shape_str(image.shape()));
    }
    if (image.dim(1) % config_.squeeze != 0 || image.dim(2) % config_.squeeze != 0) {
        throw ConfigError("codec encode: extents " + shape_str(image.shape()) + " not divisible by squeeze " +
                          std::to_string(config_.squeeze));
    }
    return conv1x1(space_to_depth(image, config_.squeeze), mixing_);
}

Tensor ImageCodec::decode(const Tensor& feature) const {
    if (feature.rank() != 3 || feature.dim(0) != config_.channels()) {
        throw DimensionError("codec decode: expected " + std::to_string(config_.channels()) + " channels, got " +
                             shape_str(feature.shape()));
    }
    return depth_to_space(conv1x1(feature, unmixing_), config_.squeeze);
}

uint64_t ImageCodec::weight_digest() const {
    // FNV-1a over the raw float bytes plus the config
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix_bytes = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    mix_bytes(mixing_.data(), sizeof(float) * static_cast<size_t>(mixing_.size()));
    mix_bytes(&config_.squeeze, sizeof(config_.squeeze));
    mix_bytes(&config_.mixing_seed, sizeof(config_.mixing_seed));
    return h;
}

StylePair style_extract(const Tensor& feature) {
    if (feature.rank() != 3) throw DimensionError("style_extract: expected [C,h,w], got " + shape_str(feature.shape()));
    const int c = feature.dim(0);
    const int pixels = feature.dim(1) * feature.dim(2);
    Tensor flat = reshape(feature, {c, pixels});
    Tensor mu = row_mean(flat);
    Tensor centered = add_colvec(flat, neg(mu));
    Tensor var = row_mean(mul(centered, centered));
    Tensor sigma = sqrt(add_scalar(var, 1e-5f));
    return StylePair{mu, sigma};
}

Tensor adain_merge(const Tensor& content, const StylePair& style) {
    if (content.rank() != 3) throw DimensionError("adain_merge: expected [C,h,w], got " + shape_str(content.shape()));
    const int c = content.dim(0);
    if (style.channels() != c || style.sigma.dim(0) != c) {
        throw DimensionError("adain_merge: " + std::to_string(c) + " content channels vs style " +
                             std::to_string(style.channels()));
    }
    const int pixels = content.dim(1) * content.dim(2);
    Tensor flat = reshape(content, {c, pixels});
    Tensor mu = row_mean(flat);
    Tensor centered = add_colvec(flat, neg(mu));
    Tensor var = row_mean(mul(centered, centered));
    Tensor inv_std = div(Tensor(Shape{c}, 1.0f), sqrt(add_scalar(var, 1e-5f)));
    Tensor normed = mul_colvec(centered, inv_std);
    Tensor merged = add_colvec(mul_colvec(normed, style.sigma), style.mu);
    return reshape(merged, {c, content.dim(1), content.dim(2)});
}

}  // namespace tsg
