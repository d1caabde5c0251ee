#pragma once

#include <cstdint>

#include "tsg/tensor.hpp"

namespace tsg {

// Per-channel style statistics: mu is the spatial mean, sigma the spatial
// std (population variance + 1e-5 floor). Both are graph tensors so the
// generator's outputs can carry gradients through them.
struct StylePair {
    Tensor mu;
    Tensor sigma;
    int channels() const { return mu.dim(0); }
};

struct CodecConfig {
    int squeeze = 4;
    uint64_t mixing_seed = 2024;
    int channels() const { return 3 * squeeze * squeeze; }
};

// Exactly-invertible image <-> feature map: space-to-depth by the squeeze
// factor followed by a fixed seeded orthogonal 1x1 channel mixing. Frozen --
// the mixing matrix is not a Parameter and never sees the optimizer.
class ImageCodec {
  public:
    explicit ImageCodec(CodecConfig config);

    Tensor encode(const Tensor& image) const;    // [3,H,W] -> [C,H/s,W/s]
    Tensor decode(const Tensor& feature) const;  // inverse of encode

    const CodecConfig& config() const { return config_; }
    const Tensor& mixing() const { return mixing_; }
    // Stable digest of the frozen weights, for the byte-identity invariant.
    uint64_t weight_digest() const;

  private:
    CodecConfig config_;
    Tensor mixing_;    // [C,C] orthogonal
    Tensor unmixing_;  // transpose
};

StylePair style_extract(const Tensor& feature);
Tensor adain_merge(const Tensor& content, const StylePair& style);

}  // namespace tsg
