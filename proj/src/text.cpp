#include "tsg/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace tsg {

std::vector<std::string> split_words(const std::string& caption) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : caption) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, size_t cap) {
    // count, then keep the most frequent tokens; ties break alphabetically so
    // the vocabulary is independent of caption order
    std::map<std::string, int64_t> counts;
    for (const auto& caption : captions) {
        for (auto& w : split_words(caption)) counts[w] += 1;
    }
    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    Vocabulary v;
    v.id_to_token = {"<pad>", "<unk>"};
    for (const auto& [token, count] : ranked) {
        if (v.id_to_token.size() >= cap) break;
        v.id_to_token.push_back(token);
    }
    for (size_t i = 0; i < v.id_to_token.size(); ++i) v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary " + path.string());
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.id_to_token.push_back(line);
    }
    if (v.id_to_token.size() < 2 || v.id_to_token[0] != "<pad>" || v.id_to_token[1] != "<unk>") {
        throw DataError("vocabulary " + path.string() + " missing reserved <pad>/<unk> entries");
    }
    for (size_t i = 0; i < v.id_to_token.size(); ++i) v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
    return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write vocabulary " + path.string());
    for (const auto& token : id_to_token) out << token << "\n";
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

TokenizedCaption tokenize(const std::string& caption, const Vocabulary& vocab, int t) {
    TokenizedCaption out;
    out.ids.assign(static_cast<size_t>(t), Vocabulary::kPad);
    const auto words = split_words(caption);
    for (size_t i = 0; i < words.size() && i < static_cast<size_t>(t); ++i) {
        out.ids[i] = vocab.lookup(words[i]);
        out.t_actual = static_cast<int>(i) + 1;
    }
    return out;
}

TextEncoder::TextEncoder(ParamStore& store, const std::string& prefix, int vocab_size, int dim, Rng& init)
    : dim_(dim), hidden_(dim / 2) {
    if (dim % 2 != 0) throw ConfigError("text encoder: dim must be even");
    embedding_ = &store.add(prefix + ".embedding", init_embedding(init, vocab_size, dim));
    auto make_dir = [&](const std::string& name) {
        GruDir d;
        d.w_x = &store.add(prefix + "." + name + ".w_x", init_gate(init, dim, 3 * hidden_));
        d.u_rz = &store.add(prefix + "." + name + ".u_rz", init_gate(init, hidden_, 2 * hidden_));
        d.u_n = &store.add(prefix + "." + name + ".u_n", init_gate(init, hidden_, hidden_));
        d.bias = &store.add(prefix + "." + name + ".bias", Tensor(Shape{3 * hidden_}, 0.0f));
        return d;
    };
    fwd_ = make_dir("fwd");
    bwd_ = make_dir("bwd");
}

Tensor TextEncoder::cell(const GruDir& dir, const Tensor& x, const Tensor& h) const {
    // r = sig(Wr x + Ur h + br), z = sig(Wz x + Uz h + bz)
    // n = tanh(Wn x + Un (r*h) + bn), h' = (1-z)*h + z*n
    Tensor gates_x = add(fully_connected(x, dir.w_x->value, dir.bias->value),
                         concat({fully_connected(h, dir.u_rz->value, Tensor(Shape{2 * hidden_}, 0.0f)),
                                 Tensor(Shape{hidden_}, 0.0f)},
                                0));
    Tensor r = sigmoid(slice(gates_x, 0, 0, hidden_));
    Tensor z = sigmoid(slice(gates_x, 0, hidden_, hidden_));
    Tensor n_in = add(slice(gates_x, 0, 2 * hidden_, hidden_),
                      fully_connected(mul(r, h), dir.u_n->value, Tensor(Shape{hidden_}, 0.0f)));
    Tensor n = tanh(n_in);
    return add(mul(sub(Tensor(Shape{hidden_}, 1.0f), z), h), mul(z, n));
}

TextFeatures TextEncoder::encode(const std::vector<int>& tokens, int t_actual) const {
    const int t_len = static_cast<int>(tokens.size());
    if (t_actual < 0 || t_actual > t_len) throw UsageError("text encoder: t_actual out of range");

    std::vector<Tensor> embeds;
    embeds.reserve(static_cast<size_t>(t_actual));
    for (int t = 0; t < t_actual; ++t) embeds.push_back(embedding_row(embedding_->value, tokens[static_cast<size_t>(t)]));

    const Tensor h0(Shape{hidden_}, 0.0f);
    std::vector<Tensor> h_fwd(static_cast<size_t>(t_actual)), h_bwd(static_cast<size_t>(t_actual));
    Tensor h = h0;
    for (int t = 0; t < t_actual; ++t) {
        h = cell(fwd_, embeds[static_cast<size_t>(t)], h);
        h_fwd[static_cast<size_t>(t)] = h;
    }
    h = h0;
    for (int t = t_actual - 1; t >= 0; --t) {
        h = cell(bwd_, embeds[static_cast<size_t>(t)], h);
        h_bwd[static_cast<size_t>(t)] = h;
    }

    // masked (pad) columns stay exactly zero so they cannot leak into
    // attention or the sentence feature
    std::vector<Tensor> cols;
    cols.reserve(static_cast<size_t>(t_len));
    const Tensor zero_col(Shape{dim_, 1}, 0.0f);
    for (int t = 0; t < t_len; ++t) {
        if (t < t_actual) {
            cols.push_back(reshape(concat({h_fwd[static_cast<size_t>(t)], h_bwd[static_cast<size_t>(t)]}, 0), {dim_, 1}));
        } else {
            cols.push_back(zero_col);
        }
    }

    TextFeatures out;
    out.e = concat(cols, 1);
    out.e_bar = t_actual > 0 ? concat({h_fwd[static_cast<size_t>(t_actual - 1)], h_bwd[0]}, 0)
                             : Tensor(Shape{dim_}, 0.0f);
    out.t_actual = t_actual;
    return out;
}

CondAugment::CondAugment(ParamStore& store, const std::string& prefix, int text_dim, int cond_dim, Rng& init)
    : cond_dim_(cond_dim) {
    w_ = &store.add(prefix + ".w", init_fc(init, text_dim, 2 * cond_dim));
    b_ = &store.add(prefix + ".b", Tensor(Shape{2 * cond_dim}, 0.0f));
}

ConditionedVector CondAugment::forward(const Tensor& e_bar, const Tensor& noise) const {
    if (noise.rank() != 1 || noise.dim(0) != cond_dim_) {
        throw DimensionError("cond augment: noise " + shape_str(noise.shape()) + " vs cond_dim " +
                             std::to_string(cond_dim_));
    }
    Tensor both = fully_connected(e_bar, w_->value, b_->value);
    ConditionedVector out;
    out.ca_mu = slice(both, 0, 0, cond_dim_);
    out.ca_logvar = slice(both, 0, cond_dim_, cond_dim_);
    out.e_c = add(out.ca_mu, mul(exp(mul_scalar(out.ca_logvar, 0.5f)), noise));
    return out;
}

}  // namespace tsg
