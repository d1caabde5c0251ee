#include "tsg/discriminator.hpp"

namespace tsg {

StageDiscriminator::StageDiscriminator(ParamStore& store, const std::string& prefix, const Preset& preset, Rng& init)
    : preset_(preset) {
    auto fc = [&](const std::string& name, int in, int out) {
        Fc f;
        f.w = &store.add(prefix + "." + name + ".w", init_fc(init, in, out));
        f.b = &store.add(prefix + "." + name + ".b", Tensor(Shape{out}, 0.0f));
        return f;
    };

    // image trunk: stride-2 blocks from the training resolution down to 4x4
    int side = preset.resolution;
    int c = 3;
    int next = preset.d_image_base;
    int idx = 0;
    while (side > 4) {
        image_stack_.push_back(ConvBlock{
            &store.add(prefix + ".img." + std::to_string(idx) + ".w", init_conv4x4(init, c, next)),
            &store.add(prefix + ".img." + std::to_string(idx) + ".b", Tensor(Shape{next}, 0.0f))});
        c = next;
        next = std::min(next * 2, preset.d_image_cap);
        side /= 2;
        ++idx;
    }
    trunk_channels_ = c;

    image_head_ = fc("img_head", trunk_channels_ * 16, 1);
    join_conv_ = &store.add(prefix + ".join.w", init_conv1x1(init, trunk_channels_ + preset.text_dim, trunk_channels_));
    image_cond_head_ = fc("img_cond_head", trunk_channels_ * 16, 1);

    const int sh = preset.d_style_hidden;
    style_fc1_ = fc("style_fc1", preset.style_dim(), sh);
    style_fc2_ = fc("style_fc2", sh, sh);
    style_head_ = fc("style_head", sh, 1);
    style_join_ = fc("style_join", sh + preset.text_dim, sh);
    style_cond_head_ = fc("style_cond_head", sh, 1);
}

Tensor StageDiscriminator::image_trunk(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != preset_.resolution ||
        image.dim(2) != preset_.resolution) {
        throw DimensionError("discriminator: image " + shape_str(image.shape()) + " vs training resolution " +
                             std::to_string(preset_.resolution));
    }
    Tensor cur = image;
    for (const ConvBlock& blk : image_stack_) cur = leaky_relu(conv_down4x4(cur, blk.w->value, blk.b->value), 0.2f);
    return cur;
}

Tensor StageDiscriminator::style_trunk(const StylePair& style) const {
    if (style.channels() != preset_.channels()) {
        throw DimensionError("discriminator: style of " + std::to_string(style.channels()) + " channels, expected " +
                             std::to_string(preset_.channels()));
    }
    Tensor h = concat({style.mu, style.sigma}, 0);
    h = leaky_relu(fully_connected(h, style_fc1_.w->value, style_fc1_.b->value), 0.2f);
    return leaky_relu(fully_connected(h, style_fc2_.w->value, style_fc2_.b->value), 0.2f);
}

Tensor StageDiscriminator::score_image(const Tensor& trunk_feature) const {
    Tensor flat = reshape(trunk_feature, {trunk_channels_ * 16});
    return sigmoid(fully_connected(flat, image_head_.w->value, image_head_.b->value));
}

Tensor StageDiscriminator::score_image_cond(const Tensor& trunk_feature, const Tensor& e_bar) const {
    if (e_bar.rank() != 1 || e_bar.dim(0) != preset_.text_dim) {
        throw DimensionError("discriminator: e_bar " + shape_str(e_bar.shape()));
    }
    // broadcast the sentence feature over the 4x4 map, concat on channels,
    // join with a 1x1 conv
    Tensor e_map = reshape(upsample_nearest(reshape(e_bar, {preset_.text_dim, 1, 1}), 4),
                           {preset_.text_dim, 4, 4});
    Tensor joined = concat({trunk_feature, e_map}, 0);
    Tensor mixed = leaky_relu(conv1x1(joined, join_conv_->value), 0.2f);
    Tensor flat = reshape(mixed, {trunk_channels_ * 16});
    return sigmoid(fully_connected(flat, image_cond_head_.w->value, image_cond_head_.b->value));
}

Tensor StageDiscriminator::score_style(const Tensor& style_feature) const {
    return sigmoid(fully_connected(style_feature, style_head_.w->value, style_head_.b->value));
}

Tensor StageDiscriminator::score_style_cond(const Tensor& style_feature, const Tensor& e_bar) const {
    if (e_bar.rank() != 1 || e_bar.dim(0) != preset_.text_dim) {
        throw DimensionError("discriminator: e_bar " + shape_str(e_bar.shape()));
    }
    Tensor joined = concat({style_feature, e_bar}, 0);
    Tensor mixed = leaky_relu(fully_connected(joined, style_join_.w->value, style_join_.b->value), 0.2f);
    return sigmoid(fully_connected(mixed, style_cond_head_.w->value, style_cond_head_.b->value));
}

ScoreSet StageDiscriminator::score_all(const Tensor& image, const StylePair& style, const Tensor& e_bar) const {
    Tensor img_feat = image_trunk(image);
    Tensor sty_feat = style_trunk(style);
    ScoreSet s;
    s.s_i = score_image(img_feat);
    s.s_ci = score_image_cond(img_feat, e_bar);
    s.s_s = score_style(sty_feat);
    s.s_cs = score_style_cond(sty_feat, e_bar);
    return s;
}

}  // namespace tsg
