#pragma once

#include <memory>

#include "tsg/codec.hpp"
#include "tsg/discriminator.hpp"
#include "tsg/generator.hpp"
#include "tsg/preset.hpp"
#include "tsg/text.hpp"

namespace tsg {

struct GeneratedStage {
    StylePair style;
    Tensor feature;  // adain_merge(v, style)
    Tensor image;    // decode(feature)
};

struct Generation {
    Tensor v;             // content feature of the input image (constant)
    StylePair gt_style;   // ground-truth style of the input image (constant)
    TextFeatures text;
    ConditionedVector cond;
    GeneratedStage stage0;
    GeneratedStage stage1;  // only populated when stages == 2
    int stages = 2;
};

// The whole system: frozen codec, text encoder (theta_T), conditioning
// augmentation + style generator (theta_G), and one discriminator set per
// stage (theta_D1, theta_D2). Parameter init derives from named streams of
// the master seed; the codec mixing seed is independent of it, playing the
// role of a fixed pretrained encoder.
class Model {
  public:
    Model(const Preset& preset, uint64_t seed, int vocab_size, uint64_t codec_seed = 2024);

    // codec encode -> style extract -> text encode -> condition -> SG0 ->
    // [MSS -> SG1] -> adain + decode per stage. stages is 1 or 2.
    Generation full_generate(const std::vector<int>& tokens, int t_actual, const Tensor& image, const Tensor& z,
                             const Tensor& ca_noise, int stages = 2) const;

    const Preset& preset() const { return preset_; }
    const ImageCodec& codec() const { return codec_; }
    TextEncoder& text_encoder() { return *text_; }
    const TextEncoder& text_encoder() const { return *text_; }
    CondAugment& cond_augment() { return *cond_; }
    StyleGenerator& generator() { return *gen_; }
    StageDiscriminator& discriminator(int stage) { return *disc_[static_cast<size_t>(stage)]; }

    ParamStore& theta_t() { return theta_t_; }
    ParamStore& theta_g() { return theta_g_; }
    ParamStore& theta_d(int stage) { return theta_d_[static_cast<size_t>(stage)]; }

    int vocab_size() const { return vocab_size_; }

  private:
    Preset preset_;
    int vocab_size_;
    ImageCodec codec_;
    ParamStore theta_t_, theta_g_;
    ParamStore theta_d_[2];
    std::unique_ptr<TextEncoder> text_;
    std::unique_ptr<CondAugment> cond_;
    std::unique_ptr<StyleGenerator> gen_;
    std::unique_ptr<StageDiscriminator> disc_[2];
};

}  // namespace tsg
