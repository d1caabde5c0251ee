#pragma once

#include <string>
#include <vector>

#include "tsg/common.hpp"

namespace tsg {

// Dimension preset for the whole system. "paper" carries the published
// sizes; "desk" is the reduced verification scale; "tiny" exists for
// end-to-end gradient checks.
struct Preset {
    std::string name;
    int resolution = 64;   // training image side
    int squeeze = 4;       // codec space-to-depth factor
    int text_dim = 64;     // D
    int text_len = 12;     // T
    int cond_dim = 100;    // z and conditioned-vector length
    int ca_mu_c1 = 64, ca_h1 = 8, ca_w1 = 8;      // cross-attention feature v_ca
    int sa_c2 = 128, sa_h2 = 4, sa_w2 = 4;        // self-attention feature v_sa
    std::vector<int> sg_hidden = {128, 64};       // widths of the two hidden FC layers in SG0/SG1
    int d_image_base = 16;                        // first conv width of the image trunk
    int d_image_cap = 256;                        // channel cap while doubling
    int d_style_hidden = 64;                      // style trunk width
    int vocab_cap = 8192;

    int channels() const { return 3 * squeeze * squeeze; }      // C
    int feat_side() const { return resolution / squeeze; }
    int style_dim() const { return 2 * channels(); }            // |concat(mu, sigma)| = 2C
    int gru_hidden() const { return text_dim / 2; }

    void validate() const;
};

Preset paper_preset();
Preset desk_preset();
Preset tiny_preset();
Preset preset_by_name(const std::string& name);

}  // namespace tsg
