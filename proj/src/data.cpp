#include "tsg/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "tsg/image_io.hpp"

namespace tsg {

namespace {

using nlohmann::json;

const char* kTextures[3] = {"stripes", "checker", "blobs"};

struct Palette {
    const char* name;
    const char* mood;
    float a[3];
    float b[3];
};

// Both palette colors keep the same channel ordering so the palette word
// deterministically predicts the argmax channel mean.
const Palette kPalettes[8] = {
    {"golden", "warm", {1.00f, 0.84f, 0.10f}, {0.80f, 0.55f, 0.05f}},
    {"crimson", "fierce", {0.86f, 0.08f, 0.12f}, {0.55f, 0.05f, 0.08f}},
    {"emerald", "calm", {0.10f, 0.85f, 0.35f}, {0.05f, 0.50f, 0.25f}},
    {"azure", "serene", {0.10f, 0.45f, 1.00f}, {0.05f, 0.30f, 0.65f}},
    {"violet", "moody", {0.55f, 0.15f, 0.90f}, {0.35f, 0.10f, 0.60f}},
    {"ivory", "gentle", {0.98f, 0.96f, 0.88f}, {0.85f, 0.82f, 0.72f}},
    {"slate", "somber", {0.40f, 0.46f, 0.55f}, {0.20f, 0.25f, 0.32f}},
    {"rose", "bright", {1.00f, 0.60f, 0.75f}, {0.90f, 0.35f, 0.55f}},
};

float sample_bilinear(const float* plane, int h, int w, float y, float x) {
    const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, w - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float fx = std::clamp(x - static_cast<float>(x0), 0.0f, 1.0f);
    const float fy = std::clamp(y - static_cast<float>(y0), 0.0f, 1.0f);
    const float top = plane[y0 * w + x0] * (1.0f - fx) + plane[y0 * w + x1] * fx;
    const float bot = plane[y1 * w + x0] * (1.0f - fx) + plane[y1 * w + x1] * fx;
    return top * (1.0f - fy) + bot * fy;
}

Tensor crop(const Tensor& src, int top, int left, int side) {
    const int h = src.dim(1), w = src.dim(2);
    Tensor out(Shape{3, side, side});
    for (int c = 0; c < 3; ++c) {
        const float* plane = src.data() + static_cast<size_t>(c) * h * w;
        float* dst = out.data() + static_cast<size_t>(c) * side * side;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) dst[y * side + x] = plane[(top + y) * w + (left + x)];
    }
    return out;
}

}  // namespace

Tensor hflip_image(const Tensor& src) {
    const int h = src.dim(1), w = src.dim(2);
    Tensor out(src.shape());
    for (int c = 0; c < 3; ++c) {
        const float* plane = src.data() + static_cast<size_t>(c) * h * w;
        float* dst = out.data() + static_cast<size_t>(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) dst[y * w + x] = plane[y * w + (w - 1 - x)];
    }
    return out;
}

int count_valid_chars(const std::string& caption) {
    int n = 0;
    for (char c : caption) {
        if (std::isalnum(static_cast<unsigned char>(c))) ++n;
    }
    return n;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    Manifest m;
    m.dir = path.parent_path();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.contains("image_path") || !rec.contains("caption")) {
            throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                            ": missing image_path or caption");
        }
        ManifestRecord r{rec["image_path"].get<std::string>(), rec["caption"].get<std::string>()};
        if (count_valid_chars(r.caption) < 5) {
            m.dropped_captions += 1;
            continue;
        }
        if (!std::filesystem::exists(m.dir / r.image_path)) {
            std::cerr << "[tsg] warning: missing image " << (m.dir / r.image_path).string() << ", skipping\n";
            m.skipped_missing += 1;
            continue;
        }
        m.records.push_back(std::move(r));
    }
    return m;
}

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
    const int h = src.dim(1), w = src.dim(2);
    if (h == out_h && w == out_w) return src;
    Tensor out(Shape{3, out_h, out_w});
    const float sy = static_cast<float>(h) / static_cast<float>(out_h);
    const float sx = static_cast<float>(w) / static_cast<float>(out_w);
    for (int c = 0; c < 3; ++c) {
        const float* plane = src.data() + static_cast<size_t>(c) * h * w;
        float* dst = out.data() + static_cast<size_t>(c) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
            for (int x = 0; x < out_w; ++x) {
                const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
                dst[y * out_w + x] = sample_bilinear(plane, h, w, fy, fx);
            }
        }
    }
    return out;
}

Tensor augment_image(const Tensor& src, Rng& rng, int target) {
    Tensor base = src;
    if (src.dim(1) < target || src.dim(2) < target) {
        std::cerr << "[tsg] warning: source " << shape_str(src.shape()) << " smaller than target " << target
                  << ", upscaling before crop\n";
        const int side = std::max(target, std::max(src.dim(1), src.dim(2)));
        base = resize_bilinear(src, side, side);
    }
    const int h = base.dim(1), w = base.dim(2);
    const int short_side = std::min(h, w);
    // crop area in [87.5%, 100%] of the square short-side area
    const double area_scale = rng.uniform(0.875, 1.0);
    const int side = std::max(1, std::min(short_side, static_cast<int>(std::lround(short_side * std::sqrt(area_scale)))));
    const int top = rng.uniform_int(h - side + 1);
    const int left = rng.uniform_int(w - side + 1);
    Tensor cropped = crop(base, top, left, side);
    if (rng.bernoulli(0.5)) cropped = hflip_image(cropped);
    return resize_bilinear(cropped, target, target);
}

Tensor center_fit(const Tensor& src, int target) {
    const int h = src.dim(1), w = src.dim(2);
    const int side = std::min(h, w);
    Tensor cropped = crop(src, (h - side) / 2, (w - side) / 2, side);
    return resize_bilinear(cropped, target, target);
}

ToyCorpusSummary synth_toy_corpus(const std::filesystem::path& out_dir, int n, uint64_t seed, int image_size) {
    if (n < 1) throw UsageError("toy corpus: need at least one sample");
    std::filesystem::create_directories(out_dir);
    const auto manifest_path = out_dir / "manifest.jsonl";
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + manifest_path.string());

    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::stream(seed, "toy", static_cast<uint64_t>(i));
        const Palette& pal = kPalettes[rng.uniform_int(8)];
        const int texture = rng.uniform_int(3);

        Tensor img(Shape{3, image_size, image_size});
        float* data = img.data();
        const size_t plane = static_cast<size_t>(image_size) * image_size;

        auto paint = [&](int y, int x, bool first) {
            const float* color = first ? pal.a : pal.b;
            for (int c = 0; c < 3; ++c) data[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * image_size + x] = color[c];
        };

        if (texture == 0) {  // stripes
            const int width = 4 + rng.uniform_int(9);
            const int dir = rng.uniform_int(3);  // horizontal, vertical, diagonal
            for (int y = 0; y < image_size; ++y)
                for (int x = 0; x < image_size; ++x) {
                    const int t = dir == 0 ? y : dir == 1 ? x : x + y;
                    paint(y, x, (t / width) % 2 == 0);
                }
        } else if (texture == 1) {  // checker
            const int cell = 6 + rng.uniform_int(11);
            for (int y = 0; y < image_size; ++y)
                for (int x = 0; x < image_size; ++x) paint(y, x, ((y / cell) + (x / cell)) % 2 == 0);
        } else {  // blobs
            const int k = 3 + rng.uniform_int(4);
            std::vector<float> cx(static_cast<size_t>(k)), cy(static_cast<size_t>(k)), rad(static_cast<size_t>(k));
            for (int j = 0; j < k; ++j) {
                cx[static_cast<size_t>(j)] = static_cast<float>(rng.uniform(0.0, image_size));
                cy[static_cast<size_t>(j)] = static_cast<float>(rng.uniform(0.0, image_size));
                rad[static_cast<size_t>(j)] = static_cast<float>(rng.uniform(image_size * 0.12, image_size * 0.3));
            }
            for (int y = 0; y < image_size; ++y)
                for (int x = 0; x < image_size; ++x) {
                    float field = 0.0f;
                    for (int j = 0; j < k; ++j) {
                        const float dx = (static_cast<float>(x) - cx[static_cast<size_t>(j)]) / rad[static_cast<size_t>(j)];
                        const float dy = (static_cast<float>(y) - cy[static_cast<size_t>(j)]) / rad[static_cast<size_t>(j)];
                        field += std::exp(-(dx * dx + dy * dy));
                    }
                    paint(y, x, field > 0.55f);
                }
        }

        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d.png", i);
        save_png(out_dir / name, img);

        const std::string caption =
            std::string("a ") + pal.mood + " scene of " + pal.name + " " + kTextures[texture];
        nlohmann::json rec;
        rec["image_path"] = name;
        rec["caption"] = caption;
        manifest << rec.dump() << "\n";
    }
    return ToyCorpusSummary{n, manifest_path};
}

LoadedDataset::LoadedDataset(const Manifest& manifest) {
    if (manifest.records.empty()) throw UsageError("dataset: manifest has no usable records");
    for (const auto& rec : manifest.records) {
        images_.push_back(load_png(manifest.dir / rec.image_path));
        captions_.push_back(rec.caption);
        ids_.push_back(rec.image_path);
    }
}

BatchStream::BatchStream(const LoadedDataset& data, const Vocabulary& vocab, int text_len, int batch, uint64_t seed,
                         int target_resolution, bool train_mode)
    : data_(data), vocab_(vocab), text_len_(text_len), batch_(batch), seed_(seed), target_(target_resolution),
      train_mode_(train_mode) {
    if (batch_ < 1 || static_cast<size_t>(batch_) > data_.size()) {
        throw UsageError("batch stream: batch size " + std::to_string(batch_) + " vs dataset of " +
                         std::to_string(data_.size()));
    }
    reshuffle();
}

void BatchStream::reshuffle() {
    order_.resize(data_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    Rng rng = Rng::stream(seed_, "shuffle", static_cast<uint64_t>(state_.epoch));
    for (int i = static_cast<int>(order_.size()) - 1; i > 0; --i) {
        std::swap(order_[static_cast<size_t>(i)], order_[static_cast<size_t>(rng.uniform_int(i + 1))]);
    }
}

void BatchStream::restore(const State& s) {
    state_ = s;
    reshuffle();
}

std::vector<SamplePair> BatchStream::next() {
    if (state_.cursor + batch_ > static_cast<int>(data_.size())) {  // drop last partial batch
        state_.epoch += 1;
        state_.cursor = 0;
        reshuffle();
    }
    Rng aug_rng = Rng::stream(seed_, "augment", static_cast<uint64_t>(state_.global_batch));
    std::vector<SamplePair> out;
    out.reserve(static_cast<size_t>(batch_));
    for (int i = 0; i < batch_; ++i) {
        const int idx = order_[static_cast<size_t>(state_.cursor + i)];
        SamplePair s;
        s.dataset_index = idx;
        s.image = train_mode_ ? augment_image(data_.image(static_cast<size_t>(idx)), aug_rng, target_)
                              : center_fit(data_.image(static_cast<size_t>(idx)), target_);
        TokenizedCaption tc = tokenize(data_.caption(static_cast<size_t>(idx)), vocab_, text_len_);
        s.tokens = std::move(tc.ids);
        s.t_actual = tc.t_actual;
        out.push_back(std::move(s));
    }
    state_.cursor += batch_;
    state_.global_batch += 1;
    return out;
}

}  // namespace tsg
