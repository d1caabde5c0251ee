#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsg/params.hpp"
#include "tsg/preset.hpp"
#include "tsg/tensor.hpp"

namespace tsg {

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    std::vector<std::string> id_to_token;  // [0]="<pad>", [1]="<unk>"
    std::unordered_map<std::string, int> token_to_id;

    static Vocabulary build(const std::vector<std::string>& captions, size_t cap = 8192);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    int lookup(const std::string& token) const;
    int size() const { return static_cast<int>(id_to_token.size()); }
};

std::vector<std::string> split_words(const std::string& caption);

struct TokenizedCaption {
    std::vector<int> ids;  // padded/truncated to T
    int t_actual = 0;      // number of real (non-pad) positions
};

TokenizedCaption tokenize(const std::string& caption, const Vocabulary& vocab, int t);

struct TextFeatures {
    Tensor e;      // [D,T] word features; columns >= t_actual are zero
    Tensor e_bar;  // [D] sentence feature
    int t_actual = 0;
};

// Embedding lookup followed by a single-layer bidirectional GRU. Column t of
// e concatenates the two directions' hidden states at t; e_bar concatenates
// the forward state at t_actual-1 with the backward state at 0.
class TextEncoder {
  public:
    TextEncoder(ParamStore& store, const std::string& prefix, int vocab_size, int dim, Rng& init);

    TextFeatures encode(const std::vector<int>& tokens, int t_actual) const;

    int dim() const { return dim_; }

  private:
    struct GruDir {
        Parameter* w_x;   // [D, 3H] input weights for r,z,n
        Parameter* u_rz;  // [H, 2H] recurrent weights for r,z
        Parameter* u_n;   // [H, H] recurrent weights for candidate
        Parameter* bias;  // [3H]
    };

    Tensor cell(const GruDir& dir, const Tensor& x, const Tensor& h) const;

    int dim_;
    int hidden_;
    Parameter* embedding_;  // [V, D]
    GruDir fwd_, bwd_;
};

struct ConditionedVector {
    Tensor e_c;        // [cond_dim]
    Tensor ca_mu;      // [cond_dim]
    Tensor ca_logvar;  // [cond_dim]
};

// Conditioning augmentation: one FC producing (mu, logvar), then the
// reparameterized sample mu + exp(logvar/2) * noise.
class CondAugment {
  public:
    CondAugment(ParamStore& store, const std::string& prefix, int text_dim, int cond_dim, Rng& init);

    ConditionedVector forward(const Tensor& e_bar, const Tensor& noise) const;

    int cond_dim() const { return cond_dim_; }

  private:
    int cond_dim_;
    Parameter* w_;
    Parameter* b_;
};

}  // namespace tsg
