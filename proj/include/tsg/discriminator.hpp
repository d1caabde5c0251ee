#pragma once

#include <vector>

#include "tsg/codec.hpp"
#include "tsg/params.hpp"
#include "tsg/preset.hpp"
#include "tsg/tensor.hpp"

namespace tsg {

// The four branch scores for one stage; scalars in (0,1) kept as graph
// tensors so losses can backpropagate.
struct ScoreSet {
    Tensor s_i;   // image realism
    Tensor s_s;   // style realism
    Tensor s_ci;  // image-text consistency
    Tensor s_cs;  // style-text consistency
};

// One stage's discriminator set. D^i/D^ci share the conv trunk over the
// image; D^s/D^cs share the FC trunk over concat(mu, sigma); the four heads
// are separate.
class StageDiscriminator {
  public:
    StageDiscriminator(ParamStore& store, const std::string& prefix, const Preset& preset, Rng& init);

    Tensor image_trunk(const Tensor& image) const;      // [3,R,R] -> [Ct,4,4]
    Tensor style_trunk(const StylePair& style) const;   // -> [hidden]

    Tensor score_image(const Tensor& trunk_feature) const;
    Tensor score_image_cond(const Tensor& trunk_feature, const Tensor& e_bar) const;
    Tensor score_style(const Tensor& style_feature) const;
    Tensor score_style_cond(const Tensor& style_feature, const Tensor& e_bar) const;

    ScoreSet score_all(const Tensor& image, const StylePair& style, const Tensor& e_bar) const;

    int trunk_channels() const { return trunk_channels_; }

  private:
    struct Fc {
        Parameter* w;
        Parameter* b;
    };
    struct ConvBlock {
        Parameter* w;
        Parameter* b;
    };

    Preset preset_;
    int trunk_channels_ = 0;
    std::vector<ConvBlock> image_stack_;
    Fc image_head_;         // flatten -> 1
    Parameter* join_conv_;  // [Ct, Ct+D] 1x1 join of trunk map and broadcast e_bar
    Fc image_cond_head_;    // flatten -> 1
    Fc style_fc1_, style_fc2_;
    Fc style_head_;       // hidden -> 1
    Fc style_join_;       // hidden+D -> hidden
    Fc style_cond_head_;  // hidden -> 1
};

}  // namespace tsg
