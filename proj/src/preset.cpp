#include "tsg/preset.hpp"

namespace tsg {

namespace {

bool pow2_ratio(int from, int to) {
    if (from < to || to <= 0) return false;
    while (from > to) {
        if (from % 2 != 0) return false;
        from /= 2;
    }
    return true;
}

}  // namespace

void Preset::validate() const {
    if (resolution % squeeze != 0) {
        throw ConfigError("preset " + name + ": resolution " + std::to_string(resolution) + " not divisible by squeeze " +
                          std::to_string(squeeze));
    }
    if (text_dim % 2 != 0) throw ConfigError("preset " + name + ": text_dim must be even");
    if (!pow2_ratio(feat_side(), ca_h1) || ca_h1 != ca_w1) {
        throw ConfigError("preset " + name + ": v_ca spatial size unreachable by stride-2 blocks");
    }
    if (!pow2_ratio(ca_h1, sa_h2) || sa_h2 != sa_w2) {
        throw ConfigError("preset " + name + ": v_sa spatial size unreachable from v_ca");
    }
    if (!pow2_ratio(resolution, 4) || resolution < 8) {
        throw ConfigError("preset " + name + ": image trunk cannot reach 4x4");
    }
    if (sg_hidden.size() != 2) throw ConfigError("preset " + name + ": SG stacks use exactly two hidden widths");
}

Preset paper_preset() {
    Preset p;
    p.name = "paper";
    p.resolution = 256;
    p.squeeze = 4;  // C = 48, feature 64x64
    p.text_dim = 256;
    p.text_len = 18;
    p.cond_dim = 100;
    p.ca_mu_c1 = 128;
    p.ca_h1 = p.ca_w1 = 16;
    p.sa_c2 = 256;
    p.sa_h2 = p.sa_w2 = 8;
    p.sg_hidden = {256, 128};
    p.d_image_base = 64;
    p.d_image_cap = 256;
    p.d_style_hidden = 256;
    p.validate();
    return p;
}

Preset desk_preset() {
    Preset p;
    p.name = "desk";
    p.resolution = 64;
    p.squeeze = 4;  // C = 48, feature 16x16
    p.text_dim = 64;
    p.text_len = 12;
    p.cond_dim = 100;
    p.ca_mu_c1 = 64;
    p.ca_h1 = p.ca_w1 = 8;
    p.sa_c2 = 128;
    p.sa_h2 = p.sa_w2 = 4;
    p.sg_hidden = {128, 64};
    p.d_image_base = 16;
    p.d_image_cap = 256;
    p.d_style_hidden = 64;
    p.validate();
    return p;
}

Preset tiny_preset() {
    Preset p;
    p.name = "tiny";
    p.resolution = 8;
    p.squeeze = 2;  // C = 12, feature 4x4
    p.text_dim = 16;
    p.text_len = 4;
    p.cond_dim = 8;
    p.ca_mu_c1 = 16;
    p.ca_h1 = p.ca_w1 = 2;
    p.sa_c2 = 24;
    p.sa_h2 = p.sa_w2 = 1;
    p.sg_hidden = {16, 16};
    p.d_image_base = 8;
    p.d_image_cap = 32;
    p.d_style_hidden = 16;
    p.validate();
    return p;
}

Preset preset_by_name(const std::string& name) {
    if (name == "paper") return paper_preset();
    if (name == "desk") return desk_preset();
    if (name == "tiny") return tiny_preset();
    throw ConfigError("unknown preset: " + name);
}

}  // namespace tsg
