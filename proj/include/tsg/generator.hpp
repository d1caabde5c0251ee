#pragma once

#include <vector>

#include "tsg/codec.hpp"
#include "tsg/params.hpp"
#include "tsg/preset.hpp"
#include "tsg/tensor.hpp"

namespace tsg {

// Two-stage style generation: SG0 maps (z, e_c) to a coarse style, the
// multi-modality style synthesis block fuses word features with the stage-1
// image feature through cross- and self-attention, and SG1 refines the style
// from (mu0, sigma0, o).
class StyleGenerator {
  public:
    StyleGenerator(ParamStore& store, const std::string& prefix, const Preset& preset, Rng& init);

    StylePair sg0_forward(const Tensor& z, const Tensor& e_c) const;

    // v_ca [C1,H1,W1] + word features e [D,T] -> word-context map [C1, H1*W1].
    // Pad columns are masked out of the softmax; an all-pad caption falls back
    // to uniform attention and flags a warning.
    Tensor cross_attention(const Tensor& v_ca, const Tensor& e, int t_actual) const;

    // v_sa [C2,H2,W2] -> self-attention map [C2, H2*W2].
    Tensor self_attention(const Tensor& v_sa) const;

    // o = FC(mean-pool(phi_c + project(upsample(phi_s)))), length 2C.
    Tensor mss_forward(const Tensor& e, int t_actual, const Tensor& v, const StylePair& style0) const;

    StylePair sg1_forward(const StylePair& style0, const Tensor& o) const;

    // Strided-conv pyramids; exposed so shape conformance can be probed.
    Tensor downsample_to_ca(const Tensor& v0) const;
    Tensor downsample_to_sa(const Tensor& v_ca) const;

    static int all_pad_fallbacks();

  private:
    struct Fc {
        Parameter* w;
        Parameter* b;
    };
    struct ConvBlock {
        Parameter* w;
        Parameter* b;
    };

    Tensor run_stack(const std::vector<ConvBlock>& stack, const Tensor& x) const;
    Tensor sg_stack(const Fc& fc1, const Fc& fc2, const Fc& fc3, const Tensor& input) const;
    static StylePair split_style(const Tensor& raw);

    Preset preset_;
    Fc sg0_fc1_, sg0_fc2_, sg0_fc3_;
    Fc sg1_fc1_, sg1_fc2_, sg1_fc3_;
    std::vector<ConvBlock> ca_stack_, sa_stack_;
    Parameter* chi0_;      // [C1,C1] on v_ca
    Parameter* chi1_;      // [C1,D] on e
    Parameter* chi2_;      // [C2,C2] query
    Parameter* chi3_;      // [C2,C2] key
    Parameter* eps_proj_;  // [C1,C2] channel projection after upsample
    Fc fuse_;              // [C1 -> 2C]
};

// One strided 4x4 conv block (stride 2, pad 1) followed by leaky-ReLU(0.2).
Tensor downsample_block(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace tsg
