#include "tsg/generator.hpp"

#include <atomic>
#include <iostream>

namespace tsg {

namespace {

std::atomic<int> g_all_pad_fallbacks{0};

// channel schedule for a stride-2 pyramid from (c_in, side) to (c_out, target):
// intermediate blocks double the channels, the last block lands on c_out
std::vector<std::pair<int, int>> pyramid_plan(int c_in, int side, int c_out, int target) {
    std::vector<std::pair<int, int>> plan;
    int c = c_in;
    while (side > target) {
        side /= 2;
        const int next = side == target ? c_out : std::min(c * 2, c_out);
        plan.emplace_back(c, next);
        c = next;
    }
    return plan;
}

}  // namespace

Tensor downsample_block(const Tensor& x, const Tensor& w, const Tensor& b) {
    return leaky_relu(conv_down4x4(x, w, b), 0.2f);
}

StyleGenerator::StyleGenerator(ParamStore& store, const std::string& prefix, const Preset& preset, Rng& init)
    : preset_(preset) {
    const int c = preset.channels();
    const int two_c = preset.style_dim();
    const int h0 = preset.sg_hidden[0], h1 = preset.sg_hidden[1];

    auto fc = [&](const std::string& name, int in, int out) {
        Fc f;
        f.w = &store.add(prefix + "." + name + ".w", init_fc(init, in, out));
        f.b = &store.add(prefix + "." + name + ".b", Tensor(Shape{out}, 0.0f));
        return f;
    };

    sg0_fc1_ = fc("sg0.fc1", 2 * preset.cond_dim, h0);
    sg0_fc2_ = fc("sg0.fc2", h0, h1);
    sg0_fc3_ = fc("sg0.fc3", h1, two_c);
    sg1_fc1_ = fc("sg1.fc1", 2 * two_c, h0);
    sg1_fc2_ = fc("sg1.fc2", h0, h1);
    sg1_fc3_ = fc("sg1.fc3", h1, two_c);

    auto conv_stack = [&](const std::string& name, int c_in, int side, int c_out, int target) {
        std::vector<ConvBlock> stack;
        int idx = 0;
        for (const auto& [in, out] : pyramid_plan(c_in, side, c_out, target)) {
            ConvBlock blk;
            blk.w = &store.add(prefix + "." + name + "." + std::to_string(idx) + ".w", init_conv4x4(init, in, out));
            blk.b = &store.add(prefix + "." + name + "." + std::to_string(idx) + ".b", Tensor(Shape{out}, 0.0f));
            stack.push_back(blk);
            ++idx;
        }
        return stack;
    };

    ca_stack_ = conv_stack("mss.ca", c, preset.feat_side(), preset.ca_mu_c1, preset.ca_h1);
    sa_stack_ = conv_stack("mss.sa", preset.ca_mu_c1, preset.ca_h1, preset.sa_c2, preset.sa_h2);

    chi0_ = &store.add(prefix + ".mss.chi0.w", init_conv1x1(init, preset.ca_mu_c1, preset.ca_mu_c1));
    chi1_ = &store.add(prefix + ".mss.chi1.w", init_conv1x1(init, preset.text_dim, preset.ca_mu_c1));
    chi2_ = &store.add(prefix + ".mss.chi2.w", init_conv1x1(init, preset.sa_c2, preset.sa_c2));
    chi3_ = &store.add(prefix + ".mss.chi3.w", init_conv1x1(init, preset.sa_c2, preset.sa_c2));
    eps_proj_ = &store.add(prefix + ".mss.eps_proj.w", init_conv1x1(init, preset.sa_c2, preset.ca_mu_c1));
    fuse_ = fc("mss.fuse", preset.ca_mu_c1, two_c);
}

int StyleGenerator::all_pad_fallbacks() { return g_all_pad_fallbacks.load(); }

Tensor StyleGenerator::run_stack(const std::vector<ConvBlock>& stack, const Tensor& x) const {
    Tensor cur = x;
    for (const ConvBlock& blk : stack) cur = downsample_block(cur, blk.w->value, blk.b->value);
    return cur;
}

Tensor StyleGenerator::downsample_to_ca(const Tensor& v0) const { return run_stack(ca_stack_, v0); }
Tensor StyleGenerator::downsample_to_sa(const Tensor& v_ca) const { return run_stack(sa_stack_, v_ca); }

Tensor StyleGenerator::sg_stack(const Fc& fc1, const Fc& fc2, const Fc& fc3, const Tensor& input) const {
    Tensor h = leaky_relu(fully_connected(input, fc1.w->value, fc1.b->value), 0.2f);
    h = leaky_relu(fully_connected(h, fc2.w->value, fc2.b->value), 0.2f);
    return fully_connected(h, fc3.w->value, fc3.b->value);
}

StylePair StyleGenerator::split_style(const Tensor& raw) {
    const int c = raw.dim(0) / 2;
    return StylePair{slice(raw, 0, 0, c), softplus(slice(raw, 0, c, c))};
}

StylePair StyleGenerator::sg0_forward(const Tensor& z, const Tensor& e_c) const {
    if (z.rank() != 1 || z.dim(0) != preset_.cond_dim || e_c.rank() != 1 || e_c.dim(0) != preset_.cond_dim) {
        throw DimensionError("sg0: z " + shape_str(z.shape()) + " and e_c " + shape_str(e_c.shape()) +
                             " must both have length " + std::to_string(preset_.cond_dim));
    }
    return split_style(sg_stack(sg0_fc1_, sg0_fc2_, sg0_fc3_, concat({z, e_c}, 0)));
}

Tensor StyleGenerator::cross_attention(const Tensor& v_ca, const Tensor& e, int t_actual) const {
    const int c1 = preset_.ca_mu_c1;
    const int pixels = preset_.ca_h1 * preset_.ca_w1;
    if (v_ca.rank() != 3 || v_ca.dim(0) != c1) {
        throw DimensionError("cross_attention: v_ca " + shape_str(v_ca.shape()));
    }
    if (e.rank() != 2 || e.dim(0) != preset_.text_dim) {
        throw DimensionError("cross_attention: e " + shape_str(e.shape()));
    }
    const int t_len = e.dim(1);

    Tensor v_c = reshape(conv1x1(v_ca, chi0_->value), {c1, pixels});
    Tensor e_ctx = matmul(chi1_->value, e);  // [C1,T]
    Tensor sim = matmul(transpose(e_ctx), v_c);  // [T, pixels]

    if (t_actual <= 0) {
        g_all_pad_fallbacks.fetch_add(1);
        std::cerr << "[tsg] warning: all-pad caption in cross-attention, using uniform attention\n";
        // zero word columns give equal logits, so the softmax below is uniform
    } else if (t_actual < t_len) {
        // -1e30 swamps any finite logit; masked rows get exactly zero weight
        std::vector<float> mask(static_cast<size_t>(t_len), 0.0f);
        for (int t = t_actual; t < t_len; ++t) mask[static_cast<size_t>(t)] = -1e30f;
        sim = add_colvec(sim, Tensor::from({t_len}, std::move(mask)));
    }
    Tensor attn = softmax(sim, 0);  // per sub-region, over words
    return matmul(e_ctx, attn);     // [C1, pixels]
}

Tensor StyleGenerator::self_attention(const Tensor& v_sa) const {
    const int c2 = preset_.sa_c2;
    const int pixels = preset_.sa_h2 * preset_.sa_w2;
    if (v_sa.rank() != 3 || v_sa.dim(0) != c2) {
        throw DimensionError("self_attention: v_sa " + shape_str(v_sa.shape()));
    }
    Tensor v_q = reshape(conv1x1(v_sa, chi2_->value), {c2, pixels});
    Tensor v_k = reshape(conv1x1(v_sa, chi3_->value), {c2, pixels});
    Tensor sim = matmul(transpose(v_q), v_k);  // [pixels, pixels]
    Tensor attn = softmax(sim, 0);             // per key column, over query rows
    return matmul(v_q, attn);                  // [C2, pixels]
}

Tensor StyleGenerator::mss_forward(const Tensor& e, int t_actual, const Tensor& v, const StylePair& style0) const {
    Tensor v0 = adain_merge(v, style0);
    Tensor v_ca = downsample_to_ca(v0);
    Tensor v_sa = downsample_to_sa(v_ca);

    Tensor phi_c = cross_attention(v_ca, e, t_actual);
    Tensor phi_s = self_attention(v_sa);

    const int factor = preset_.ca_h1 / preset_.sa_h2;
    Tensor phi_s_map = reshape(phi_s, {preset_.sa_c2, preset_.sa_h2, preset_.sa_w2});
    if (factor > 1) phi_s_map = upsample_nearest(phi_s_map, factor);
    Tensor phi_s_proj = reshape(conv1x1(phi_s_map, eps_proj_->value), {preset_.ca_mu_c1, preset_.ca_h1 * preset_.ca_w1});

    Tensor fused = add(phi_c, phi_s_proj);
    Tensor pooled = row_mean(fused);  // global average over sub-regions
    return fully_connected(pooled, fuse_.w->value, fuse_.b->value);
}

StylePair StyleGenerator::sg1_forward(const StylePair& style0, const Tensor& o) const {
    const int two_c = preset_.style_dim();
    if (o.rank() != 1 || o.dim(0) != two_c) {
        throw DimensionError("sg1: o " + shape_str(o.shape()) + " must have length " + std::to_string(two_c));
    }
    Tensor input = concat({style0.mu, style0.sigma, o}, 0);  // length 4C
    return split_style(sg_stack(sg1_fc1_, sg1_fc2_, sg1_fc3_, input));
}

}  // namespace tsg
