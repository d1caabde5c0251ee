#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsg/rng.hpp"
#include "tsg/tensor.hpp"
#include "tsg/text.hpp"

namespace tsg {

struct ManifestRecord {
    std::string image_path;  // relative to the manifest directory
    std::string caption;
};

struct Manifest {
    std::filesystem::path dir;
    std::vector<ManifestRecord> records;
    int dropped_captions = 0;  // failed the >=5 valid characters rule
    int skipped_missing = 0;   // image file absent
};

// JSON-lines manifest: one object per line with keys image_path and caption.
Manifest load_manifest(const std::filesystem::path& path);

int count_valid_chars(const std::string& caption);

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);
Tensor hflip_image(const Tensor& src);

// Training augmentation: random crop of 87.5%-100% area, horizontal flip
// with p=0.5, bilinear resize to target x target. A source smaller than the
// target is upscaled first (with a warning).
Tensor augment_image(const Tensor& src, Rng& rng, int target);

// Deterministic validation path: center square crop + resize.
Tensor center_fit(const Tensor& src, int target);

// Procedural two-color texture corpus whose captions predict the style
// statistics (palette word <-> channel means, texture word <-> structure).
struct ToyCorpusSummary {
    int count = 0;
    std::filesystem::path manifest_path;
};
ToyCorpusSummary synth_toy_corpus(const std::filesystem::path& out_dir, int n, uint64_t seed, int image_size = 80);

// Decoded images + captions held in memory (desk-scale datasets).
class LoadedDataset {
  public:
    explicit LoadedDataset(const Manifest& manifest);

    size_t size() const { return images_.size(); }
    const Tensor& image(size_t i) const { return images_[i]; }
    const std::string& caption(size_t i) const { return captions_[i]; }
    const std::string& id(size_t i) const { return ids_[i]; }
    std::vector<std::string> all_captions() const { return captions_; }

  private:
    std::vector<Tensor> images_;
    std::vector<std::string> captions_;
    std::vector<std::string> ids_;
};

struct SamplePair {
    Tensor image;  // [3,R,R] in [0,1]
    std::vector<int> tokens;
    int t_actual = 0;
    int dataset_index = 0;
};

// Epoch-shuffled endless batch stream; the last partial batch of each epoch
// is dropped. Order is a pure function of (seed, epoch), and augmentation
// noise is a pure function of (seed, global batch index), so restoring the
// three counters resumes the stream exactly.
class BatchStream {
  public:
    struct State {
        int64_t epoch = 0;
        int cursor = 0;
        int64_t global_batch = 0;
    };

    BatchStream(const LoadedDataset& data, const Vocabulary& vocab, int text_len, int batch, uint64_t seed,
                int target_resolution, bool train_mode);

    std::vector<SamplePair> next();

    State state() const { return state_; }
    void restore(const State& s);

  private:
    void reshuffle();

    const LoadedDataset& data_;
    const Vocabulary& vocab_;
    int text_len_;
    int batch_;
    uint64_t seed_;
    int target_;
    bool train_mode_;
    State state_;
    std::vector<int> order_;
};

}  // namespace tsg
