#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>

#include "tsg/config.hpp"
#include "tsg/data.hpp"
#include "tsg/model.hpp"
#include "tsg/objectives.hpp"

namespace tsg {

struct StepReport {
    int64_t step = 0;
    double l_g = 0.0;  // adversarial generator loss summed over stages
    double l_d = 0.0;  // adversarial discriminator loss summed over the stage phases
    double l_s0 = 0.0, l_s1 = 0.0;  // G-phase style losses per stage
    double l_g_total = 0.0, l_d_total = 0.0;
    std::array<double, 2> d_phase_style{0.0, 0.0};
    // branch means per stage: [s_i, s_s, s_ci, s_cs]
    std::array<std::array<double, 4>, 2> real_mean{}, fake_mean{};
    bool has_eval = false;
    double sl_eval = 0.0, psnr_eval = 0.0;
};

struct EvalResult {
    double sl_mean = 0.0;
    double psnr_mean = 0.0;
    double rho_mean = 0.0;  // pearson(h, h_final) over the evaluated pairs
    int count = 0;
};

// Round-trips a full training state: parameter/optimizer blobs in a binary
// file with a trailing CRC32, everything else in a JSON sidecar.
void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& config,
                     const Vocabulary& vocab, int64_t step, const BatchStream::State& stream_state);

struct LoadedCheckpoint {
    TrainConfig config;
    Vocabulary vocab;
    std::unique_ptr<Model> model;
    int64_t step = 0;
    BatchStream::State stream_state;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Deterministic metric pass: per sample, generation noise comes from
// index-keyed eval streams, SL compares the final concat(mu, sigma) against
// the ground truth, and PSNR compares the final image against the
// style-perfect reconstruction decode(adain(v, gt_style)).
EvalResult evaluate_model(Model& model, const Vocabulary& vocab, const LoadedDataset& data, uint64_t seed,
                          bool two_stage);

// Owns one training run: the model, the shuffled batch stream, named noise
// streams, the CSV trace and checkpoint cadence.
class Trainer {
  public:
    explicit Trainer(TrainConfig config);

    // One iteration of the training schedule: per stage, a fresh batch and
    // noise drive that stage's discriminator update; then a fresh batch and
    // noise drive one generator + text encoder update.
    StepReport step();

    EvalResult evaluate();

    // Runs to total_steps(), appending the CSV trace and periodic artifacts.
    void run();

    void save(const std::filesystem::path& path);
    void restore(const std::filesystem::path& path);

    Model& model() { return *model_; }
    const Vocabulary& vocab() const { return vocab_; }
    const TrainConfig& config() const { return config_; }
    const LoadedDataset& train_data() const { return *train_data_; }
    int64_t current_step() const { return step_; }
    int64_t total_steps() const;

  private:
    struct PhaseBatch {
        std::vector<SamplePair> samples;
        std::vector<Tensor> z, ca;
    };

    PhaseBatch draw_phase_batch(const char* z_name, const char* ca_name);
    void discriminator_phase(int stage, StepReport& report);
    void generator_phase(StepReport& report);
    void check_finite_loss(double value, const char* what, const StepReport& report) const;
    void write_samples(int64_t step);

    TrainConfig config_;
    Preset preset_;
    std::unique_ptr<LoadedDataset> train_data_;
    std::unique_ptr<LoadedDataset> val_data_;
    Vocabulary vocab_;
    std::unique_ptr<Model> model_;
    std::unique_ptr<BatchStream> stream_;
    int64_t step_ = 0;
};

}  // namespace tsg
