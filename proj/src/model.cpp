#include "tsg/model.hpp"

namespace tsg {

Model::Model(const Preset& preset, uint64_t seed, int vocab_size, uint64_t codec_seed)
    : preset_(preset), vocab_size_(vocab_size), codec_(CodecConfig{preset.squeeze, codec_seed}) {
    preset_.validate();
    Rng t_init = Rng::stream(seed, "init.theta_t");
    Rng g_init = Rng::stream(seed, "init.theta_g");
    Rng d1_init = Rng::stream(seed, "init.theta_d1");
    Rng d2_init = Rng::stream(seed, "init.theta_d2");

    text_ = std::make_unique<TextEncoder>(theta_t_, "t.enc", vocab_size, preset_.text_dim, t_init);
    // conditioning augmentation trains with the generator's loss and rate
    cond_ = std::make_unique<CondAugment>(theta_g_, "g.ca", preset_.text_dim, preset_.cond_dim, g_init);
    gen_ = std::make_unique<StyleGenerator>(theta_g_, "g", preset_, g_init);
    disc_[0] = std::make_unique<StageDiscriminator>(theta_d_[0], "d1", preset_, d1_init);
    disc_[1] = std::make_unique<StageDiscriminator>(theta_d_[1], "d2", preset_, d2_init);
}

Generation Model::full_generate(const std::vector<int>& tokens, int t_actual, const Tensor& image, const Tensor& z,
                                const Tensor& ca_noise, int stages) const {
    if (stages < 1 || stages > 2) throw UsageError("full_generate: stages must be 1 or 2");
    Generation g;
    g.stages = stages;

    // frozen codec path: image and mixing are constants, so nothing here
    // lands on the tape
    g.v = codec_.encode(image);
    g.gt_style = style_extract(g.v);

    g.text = text_->encode(tokens, t_actual);
    g.cond = cond_->forward(g.text.e_bar, ca_noise);

    g.stage0.style = gen_->sg0_forward(z, g.cond.e_c);
    g.stage0.feature = adain_merge(g.v, g.stage0.style);
    g.stage0.image = codec_.decode(g.stage0.feature);

    if (stages == 2) {
        Tensor o = gen_->mss_forward(g.text.e, g.text.t_actual, g.v, g.stage0.style);
        g.stage1.style = gen_->sg1_forward(g.stage0.style, o);
        g.stage1.feature = adain_merge(g.v, g.stage1.style);
        g.stage1.image = codec_.decode(g.stage1.feature);
    }
    return g;
}

}  // namespace tsg
