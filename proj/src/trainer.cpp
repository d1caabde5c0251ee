#include "tsg/trainer.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tsg/image_io.hpp"

namespace tsg {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 24));
}

uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
}

struct BlobWriter {
    std::vector<unsigned char> bytes;
    uint32_t count = 0;

    void add(const std::string& name, const float* data, size_t n) {
        put_u32(bytes, static_cast<uint32_t>(name.size()));
        bytes.insert(bytes.end(), name.begin(), name.end());
        put_u32(bytes, static_cast<uint32_t>(n));
        const size_t off = bytes.size();
        bytes.resize(off + n * sizeof(float));
        std::memcpy(bytes.data() + off, data, n * sizeof(float));
        ++count;
    }
};

void for_each_store(Model& model, const std::function<void(const std::string&, ParamStore&)>& fn) {
    fn("theta_t", model.theta_t());
    fn("theta_g", model.theta_g());
    fn("theta_d1", model.theta_d(0));
    fn("theta_d2", model.theta_d(1));
}

std::string csv_num(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& config,
                     const Vocabulary& vocab, int64_t step, const BatchStream::State& stream_state) {
    BlobWriter blobs;
    for_each_store(model, [&](const std::string& store_name, ParamStore& store) {
        for (const auto& p : store.all()) {
            const std::string base = store_name + "/" + p->name;
            blobs.add(base + "/value", p->value.data(), static_cast<size_t>(p->value.size()));
            blobs.add(base + "/m", p->adam_m.data(), p->adam_m.size());
            blobs.add(base + "/v", p->adam_v.data(), p->adam_v.size());
            const float step_f = static_cast<float>(p->step_count);
            blobs.add(base + "/step", &step_f, 1);
        }
    });

    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, blobs.count);
    out.insert(out.end(), blobs.bytes.begin(), blobs.bytes.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data(), static_cast<uInt>(out.size()));
    put_u32(out, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    f.close();

    nlohmann::json side;
    side["format"] = 1;
    side["config"] = config_to_json(config);
    side["step"] = step;
    side["stream"] = {{"epoch", stream_state.epoch}, {"cursor", stream_state.cursor},
                      {"global_batch", stream_state.global_batch}};
    side["vocab"] = vocab.id_to_token;
    side["codec_digest"] = model.codec().weight_digest();
    std::ofstream sf(path.string() + ".json", std::ios::trunc);
    if (!sf) throw IoError("cannot write checkpoint sidecar for " + path.string());
    sf << side.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream sf(path.string() + ".json");
    if (!sf) throw IoError("missing checkpoint sidecar " + path.string() + ".json");
    nlohmann::json side;
    sf >> side;

    LoadedCheckpoint out;
    out.config = config_from_json(side.at("config"));
    out.step = side.at("step").get<int64_t>();
    out.stream_state.epoch = side.at("stream").at("epoch").get<int64_t>();
    out.stream_state.cursor = side.at("stream").at("cursor").get<int>();
    out.stream_state.global_batch = side.at("stream").at("global_batch").get<int64_t>();
    out.vocab.id_to_token = side.at("vocab").get<std::vector<std::string>>();
    for (size_t i = 0; i < out.vocab.id_to_token.size(); ++i) {
        out.vocab.token_to_id[out.vocab.id_to_token[i]] = static_cast<int>(i);
    }

    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
        throw IoError("checkpoint " + path.string() + ": bad magic");
    }
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size() - 4));
    if (crc != get_u32(bytes.data() + bytes.size() - 4)) {
        throw IoError("checkpoint " + path.string() + ": checksum mismatch");
    }

    out.model = std::make_unique<Model>(preset_by_name(out.config.preset), out.config.seed,
                                        static_cast<int>(out.vocab.id_to_token.size()), out.config.codec_seed);
    if (side.at("codec_digest").get<uint64_t>() != out.model->codec().weight_digest()) {
        throw IoError("checkpoint " + path.string() + ": codec digest mismatch");
    }

    const uint32_t blob_count = get_u32(bytes.data() + 8);
    size_t pos = 12;
    std::unordered_map<std::string, std::pair<const unsigned char*, size_t>> blobs;
    for (uint32_t i = 0; i < blob_count; ++i) {
        if (pos + 8 > bytes.size() - 4) throw IoError("checkpoint " + path.string() + ": truncated blob table");
        const uint32_t name_len = get_u32(&bytes[pos]);
        pos += 4;
        std::string name(reinterpret_cast<const char*>(&bytes[pos]), name_len);
        pos += name_len;
        const uint32_t n = get_u32(&bytes[pos]);
        pos += 4;
        if (pos + n * sizeof(float) > bytes.size() - 4) {
            throw IoError("checkpoint " + path.string() + ": truncated blob " + name);
        }
        blobs[name] = {&bytes[pos], n};
        pos += n * sizeof(float);
    }

    size_t consumed = 0;
    for_each_store(*out.model, [&](const std::string& store_name, ParamStore& store) {
        for (const auto& p : store.all()) {
            const std::string base = store_name + "/" + p->name;
            auto load_into = [&](const std::string& key, float* dst, size_t n) {
                auto it = blobs.find(key);
                if (it == blobs.end()) throw DataError("checkpoint missing blob " + key);
                if (it->second.second != n) throw DataError("checkpoint blob " + key + " has wrong size");
                std::memcpy(dst, it->second.first, n * sizeof(float));
                ++consumed;
            };
            load_into(base + "/value", p->value.data(), static_cast<size_t>(p->value.size()));
            load_into(base + "/m", p->adam_m.data(), p->adam_m.size());
            load_into(base + "/v", p->adam_v.data(), p->adam_v.size());
            float step_f = 0.0f;
            load_into(base + "/step", &step_f, 1);
            p->step_count = static_cast<int64_t>(step_f);
        }
    });
    if (consumed != blob_count) {
        throw DataError("checkpoint " + path.string() + " carries " + std::to_string(blob_count - consumed) +
                        " unknown blobs");
    }
    return out;
}

Trainer::Trainer(TrainConfig config) : config_(std::move(config)), preset_(preset_by_name(config_.preset)) {
    if (config_.manifest.empty()) throw UsageError("trainer: data.manifest is required");
    Manifest manifest = load_manifest(config_.manifest);
    train_data_ = std::make_unique<LoadedDataset>(manifest);
    if (!config_.val_manifest.empty()) {
        val_data_ = std::make_unique<LoadedDataset>(load_manifest(config_.val_manifest));
    }
    vocab_ = Vocabulary::build(train_data_->all_captions(), static_cast<size_t>(preset_.vocab_cap));
    model_ = std::make_unique<Model>(preset_, config_.seed, vocab_.size(), config_.codec_seed);
    stream_ = std::make_unique<BatchStream>(*train_data_, vocab_, preset_.text_len, config_.batch, config_.seed,
                                            preset_.resolution, true);
}

int64_t Trainer::total_steps() const {
    if (config_.steps > 0) return config_.steps;
    const int64_t per_epoch = static_cast<int64_t>(train_data_->size()) / config_.batch;
    return static_cast<int64_t>(config_.epochs) * std::max<int64_t>(per_epoch, 1);
}

Trainer::PhaseBatch Trainer::draw_phase_batch(const char* z_name, const char* ca_name) {
    PhaseBatch pb;
    pb.samples = stream_->next();
    Rng zr = Rng::stream(config_.seed, z_name, static_cast<uint64_t>(step_));
    Rng car = Rng::stream(config_.seed, ca_name, static_cast<uint64_t>(step_));
    for (size_t i = 0; i < pb.samples.size(); ++i) {
        std::vector<float> zv(static_cast<size_t>(preset_.cond_dim)), cav(static_cast<size_t>(preset_.cond_dim));
        for (float& v : zv) v = zr.normal_f();
        for (float& v : cav) v = car.normal_f();
        pb.z.push_back(Tensor::from({preset_.cond_dim}, std::move(zv)));
        pb.ca.push_back(Tensor::from({preset_.cond_dim}, std::move(cav)));
    }
    return pb;
}

namespace {

Tensor concat_style(const StylePair& s) { return concat({s.mu, s.sigma}, 0); }

void accumulate_scores(const ScoreSet& s, std::array<double, 4>& acc) {
    acc[0] += s.s_i.item();
    acc[1] += s.s_s.item();
    acc[2] += s.s_ci.item();
    acc[3] += s.s_cs.item();
}

}  // namespace

void Trainer::discriminator_phase(int stage, StepReport& report) {
    PhaseBatch pb = draw_phase_batch(stage == 0 ? "z.d1" : "z.d2", stage == 0 ? "ca.d1" : "ca.d2");

    // generated inputs never carry gradients into the D update
    std::vector<Tensor> fake_images, e_bars, h_real, h_fake;
    std::vector<StylePair> fake_styles, gt_styles;
    {
        NoGradGuard no_grad;
        for (size_t i = 0; i < pb.samples.size(); ++i) {
            const SamplePair& s = pb.samples[i];
            Generation g = model_->full_generate(s.tokens, s.t_actual, s.image, pb.z[i], pb.ca[i], stage + 1);
            const GeneratedStage& out = stage == 0 ? g.stage0 : g.stage1;
            fake_images.push_back(out.image);
            fake_styles.push_back(out.style);
            gt_styles.push_back(g.gt_style);
            e_bars.push_back(g.text.e_bar);
            h_real.push_back(concat_style(g.gt_style));
            h_fake.push_back(concat_style(out.style));
        }
    }

    Tape tape;
    std::vector<ScoreSet> real_scores, fake_scores;
    StageDiscriminator& disc = model_->discriminator(stage);
    for (size_t i = 0; i < pb.samples.size(); ++i) {
        real_scores.push_back(disc.score_all(pb.samples[i].image, gt_styles[i], e_bars[i]));
        fake_scores.push_back(disc.score_all(fake_images[i], fake_styles[i], e_bars[i]));
        accumulate_scores(real_scores.back(), report.real_mean[static_cast<size_t>(stage)]);
        accumulate_scores(fake_scores.back(), report.fake_mean[static_cast<size_t>(stage)]);
    }
    for (double& v : report.real_mean[static_cast<size_t>(stage)]) v /= static_cast<double>(pb.samples.size());
    for (double& v : report.fake_mean[static_cast<size_t>(stage)]) v /= static_cast<double>(pb.samples.size());

    Tensor l_d = discriminator_loss(real_scores, fake_scores);
    // the style term enters L_D_total as written; its inputs are detached so
    // it contributes no gradient to theta_D
    Tensor l_s = style_loss(h_real, h_fake);
    std::vector<Tensor> style_terms = {l_s};
    Tensor l_total = total_loss(l_d, style_terms, config_.lambda);

    report.l_d += l_d.item();
    report.d_phase_style[static_cast<size_t>(stage)] = l_s.item();
    report.l_d_total += l_total.item();
    check_finite_loss(l_total.item(), stage == 0 ? "L_D stage 1" : "L_D stage 2", report);

    tape.backward(l_total);
    adam_step(model_->theta_d(stage), config_.lr_d, config_.beta1, config_.beta2);
}

void Trainer::generator_phase(StepReport& report) {
    PhaseBatch pb = draw_phase_batch("z.g", "ca.g");
    const int stages = config_.two_stage ? 2 : 1;

    Tape tape;
    std::vector<ScoreSet> fake0, fake1;
    std::vector<Tensor> h_gt, h0, h1;
    for (size_t i = 0; i < pb.samples.size(); ++i) {
        const SamplePair& s = pb.samples[i];
        Generation g = model_->full_generate(s.tokens, s.t_actual, s.image, pb.z[i], pb.ca[i], stages);
        fake0.push_back(model_->discriminator(0).score_all(g.stage0.image, g.stage0.style, g.text.e_bar));
        h_gt.push_back(concat_style(g.gt_style));
        h0.push_back(concat_style(g.stage0.style));
        if (stages == 2) {
            fake1.push_back(model_->discriminator(1).score_all(g.stage1.image, g.stage1.style, g.text.e_bar));
            h1.push_back(concat_style(g.stage1.style));
        }
    }

    Tensor l_g = generator_loss(fake0);
    if (stages == 2) l_g = add(l_g, generator_loss(fake1));
    Tensor l_s0 = style_loss(h_gt, h0);
    std::vector<Tensor> style_terms = {l_s0};
    if (stages == 2) style_terms.push_back(style_loss(h_gt, h1));
    Tensor l_total = total_loss(l_g, style_terms, config_.lambda);

    report.l_g = l_g.item();
    report.l_s0 = l_s0.item();
    report.l_s1 = stages == 2 ? style_terms[1].item() : 0.0;
    report.l_g_total = l_total.item();
    check_finite_loss(l_total.item(), "L_G total", report);

    tape.backward(l_total);
    adam_step(model_->theta_g(), config_.lr_g, config_.beta1, config_.beta2);
    adam_step(model_->theta_t(), config_.lr_t, config_.beta1, config_.beta2);
    // scoring fakes deposited gradients on the discriminators; those updates
    // belong to the D phases only
    model_->theta_d(0).zero_grads();
    model_->theta_d(1).zero_grads();
}

void Trainer::check_finite_loss(double value, const char* what, const StepReport& report) const {
    if (std::isfinite(value)) return;
    std::ostringstream os;
    os << what << " is non-finite at step " << step_ << "; branch score means:";
    for (int stage = 0; stage < 2; ++stage) {
        os << " stage" << stage + 1 << " real[";
        for (double v : report.real_mean[static_cast<size_t>(stage)]) os << " " << v;
        os << " ] fake[";
        for (double v : report.fake_mean[static_cast<size_t>(stage)]) os << " " << v;
        os << " ]";
    }
    throw NumericError(os.str());
}

StepReport Trainer::step() {
    StepReport report;
    discriminator_phase(0, report);
    if (config_.two_stage) discriminator_phase(1, report);
    if (!config_.freeze_generator) generator_phase(report);
    step_ += 1;
    report.step = step_;
    return report;
}

EvalResult evaluate_model(Model& model, const Vocabulary& vocab, const LoadedDataset& data, uint64_t seed,
                          bool two_stage) {
    const Preset& preset = model.preset();
    EvalResult out;
    NoGradGuard no_grad;
    const int stages = two_stage ? 2 : 1;
    for (size_t i = 0; i < data.size(); ++i) {
        Tensor image = center_fit(data.image(i), preset.resolution);
        TokenizedCaption tc = tokenize(data.caption(i), vocab, preset.text_len);

        Rng zr = Rng::stream(seed, "eval.z", static_cast<uint64_t>(i));
        Rng car = Rng::stream(seed, "eval.ca", static_cast<uint64_t>(i));
        std::vector<float> zv(static_cast<size_t>(preset.cond_dim)), cav(static_cast<size_t>(preset.cond_dim));
        for (float& v : zv) v = zr.normal_f();
        for (float& v : cav) v = car.normal_f();

        Generation g = model.full_generate(tc.ids, tc.t_actual, image, Tensor::from({preset.cond_dim}, zv),
                                           Tensor::from({preset.cond_dim}, cav), stages);
        const GeneratedStage& last = stages == 2 ? g.stage1 : g.stage0;

        Tensor h_gt = concat_style(g.gt_style);
        Tensor h_gen = concat_style(last.style);
        out.sl_mean += metric_sl(h_gt.values(), h_gen.values());
        out.rho_mean += pearson(h_gt, h_gen).item();
        // style-perfect reconstruction as the PSNR reference
        Tensor reference = model.codec().decode(adain_merge(g.v, g.gt_style));
        out.psnr_mean += metric_psnr(last.image, reference, 1.0);
        out.count += 1;
    }
    if (out.count > 0) {
        out.sl_mean /= out.count;
        out.psnr_mean /= out.count;
        out.rho_mean /= out.count;
    }
    return out;
}

EvalResult Trainer::evaluate() {
    const LoadedDataset& data = val_data_ ? *val_data_ : *train_data_;
    return evaluate_model(*model_, vocab_, data, config_.seed, config_.two_stage);
}

void Trainer::write_samples(int64_t at_step) {
    if (!config_.save_samples) return;
    const LoadedDataset& data = val_data_ ? *val_data_ : *train_data_;
    const int rows = std::min<int>(config_.sample_rows, static_cast<int>(data.size()));
    if (rows <= 0) return;
    const int r = preset_.resolution;
    const int cols = config_.two_stage ? 3 : 2;
    Tensor grid(Shape{3, rows * r, cols * r}, 0.0f);

    NoGradGuard no_grad;
    auto blit = [&](const Tensor& img, int row, int col) {
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < r; ++y)
                for (int x = 0; x < r; ++x) {
                    grid.data()[(static_cast<size_t>(c) * rows * r + row * r + y) * (cols * r) + col * r + x] =
                        img.values()[(static_cast<size_t>(c) * r + y) * r + x];
                }
    };
    for (int i = 0; i < rows; ++i) {
        Tensor image = center_fit(data.image(static_cast<size_t>(i)), r);
        TokenizedCaption tc = tokenize(data.caption(static_cast<size_t>(i)), vocab_, preset_.text_len);
        Rng zr = Rng::stream(config_.seed, "eval.z", static_cast<uint64_t>(i));
        Rng car = Rng::stream(config_.seed, "eval.ca", static_cast<uint64_t>(i));
        std::vector<float> zv(static_cast<size_t>(preset_.cond_dim)), cav(static_cast<size_t>(preset_.cond_dim));
        for (float& v : zv) v = zr.normal_f();
        for (float& v : cav) v = car.normal_f();
        Generation g = model_->full_generate(tc.ids, tc.t_actual, image, Tensor::from({preset_.cond_dim}, zv),
                                             Tensor::from({preset_.cond_dim}, cav), config_.two_stage ? 2 : 1);
        blit(image, i, 0);
        blit(g.stage0.image, i, 1);
        if (config_.two_stage) blit(g.stage1.image, i, 2);
    }
    char name[48];
    std::snprintf(name, sizeof(name), "samples_%06lld.png", static_cast<long long>(at_step));
    save_png(std::filesystem::path(config_.out_dir) / name, grid);
}

void Trainer::run() {
    std::filesystem::create_directories(config_.out_dir);
    const auto trace_path = std::filesystem::path(config_.out_dir) / "trace.csv";
    const bool fresh = !std::filesystem::exists(trace_path);
    std::ofstream trace(trace_path, std::ios::app);
    if (!trace) throw IoError("cannot write " + trace_path.string());
    if (fresh) trace << "step,l_g,l_d,l_s0,l_s1,sl_eval,psnr_eval\n";

    vocab_.save(std::filesystem::path(config_.out_dir) / "vocab.txt");

    const int64_t total = total_steps();
    while (step_ < total) {
        StepReport rep = step();
        const bool do_eval = (config_.eval_every > 0 && rep.step % config_.eval_every == 0) || rep.step == total;
        if (do_eval) {
            EvalResult ev = evaluate();
            rep.has_eval = true;
            rep.sl_eval = ev.sl_mean;
            rep.psnr_eval = ev.psnr_mean;
            write_samples(rep.step);
        }
        trace << rep.step << "," << csv_num(rep.l_g) << "," << csv_num(rep.l_d) << "," << csv_num(rep.l_s0) << ","
              << csv_num(rep.l_s1) << ",";
        if (rep.has_eval) trace << csv_num(rep.sl_eval);
        trace << ",";
        if (rep.has_eval) trace << csv_num(rep.psnr_eval);
        trace << "\n";
        trace.flush();

        if (config_.checkpoint_every > 0 && rep.step % config_.checkpoint_every == 0 && rep.step != total) {
            char name[48];
            std::snprintf(name, sizeof(name), "ckpt_%06lld.ckpt", static_cast<long long>(rep.step));
            save(std::filesystem::path(config_.out_dir) / name);
        }
    }
    save(std::filesystem::path(config_.out_dir) / "ckpt_final.ckpt");
}

void Trainer::save(const std::filesystem::path& path) {
    save_checkpoint(path, *model_, config_, vocab_, step_, stream_->state());
}

void Trainer::restore(const std::filesystem::path& path) {
    LoadedCheckpoint loaded = load_checkpoint(path);
    if (loaded.config.preset != config_.preset) {
        throw DataError("checkpoint preset " + loaded.config.preset + " does not match config preset " +
                        config_.preset);
    }
    if (loaded.vocab.size() != vocab_.size()) {
        throw DataError("checkpoint vocabulary size " + std::to_string(loaded.vocab.size()) +
                        " does not match the dataset vocabulary " + std::to_string(vocab_.size()));
    }
    vocab_ = std::move(loaded.vocab);
    model_ = std::move(loaded.model);
    step_ = loaded.step;
    stream_->restore(loaded.stream_state);
}

}  // namespace tsg
