#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsg/data.hpp"
#include "tsg/image_io.hpp"
#include "tsg/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int cmd_synth_data(const std::string& out_dir, int n, uint64_t seed, int size) {
    tsg::ToyCorpusSummary summary = tsg::synth_toy_corpus(out_dir, n, seed, size);
    std::cout << "wrote " << summary.count << " samples under " << out_dir << "\n"
              << "manifest: " << summary.manifest_path.string() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume, const std::vector<std::string>& overrides) {
    tsg::TrainConfig config;
    if (!config_path.empty()) tsg::apply_config_file(config, config_path);
    for (const auto& kv : overrides) tsg::apply_override(config, kv);

    tsg::Trainer trainer(std::move(config));
    if (!resume.empty()) trainer.restore(resume);
    std::cout << "training " << trainer.config().preset << " preset: steps " << trainer.current_step() << " -> "
              << trainer.total_steps() << ", out dir " << trainer.config().out_dir << "\n";
    trainer.run();
    tsg::EvalResult final_eval = trainer.evaluate();
    std::cout << "done at step " << trainer.current_step() << ": SL_mean=" << final_eval.sl_mean
              << " PSNR_mean=" << final_eval.psnr_mean << " rho_mean=" << final_eval.rho_mean << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path, const std::string& report_path,
             const std::vector<std::string>& overrides) {
    tsg::LoadedCheckpoint loaded = tsg::load_checkpoint(ckpt);
    for (const auto& kv : overrides) tsg::apply_override(loaded.config, kv);

    tsg::LoadedDataset data(tsg::load_manifest(manifest_path));
    tsg::EvalResult result =
        tsg::evaluate_model(*loaded.model, loaded.vocab, data, loaded.config.seed, loaded.config.two_stage);
    std::cout << "SL_mean=" << result.sl_mean << " PSNR_mean=" << result.psnr_mean << " rho_mean=" << result.rho_mean
              << " over " << result.count << " pairs\n";

    json report;
    report["checkpoint"] = ckpt;
    report["manifest"] = manifest_path;
    report["step"] = loaded.step;
    report["count"] = result.count;
    report["sl_mean"] = result.sl_mean;
    report["psnr_mean"] = result.psnr_mean;
    report["rho_mean"] = result.rho_mean;
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw tsg::IoError("cannot write report " + report_path);
    out << report.dump(2) << "\n";
    return 0;
}

int cmd_stylize(const std::string& ckpt, const std::string& image_path, const std::string& caption, uint64_t seed,
                const std::string& out_dir) {
    tsg::LoadedCheckpoint loaded = tsg::load_checkpoint(ckpt);
    tsg::Model& model = *loaded.model;
    const tsg::Preset& preset = model.preset();

    tsg::Tensor image = tsg::center_fit(tsg::load_png(image_path), preset.resolution);
    tsg::TokenizedCaption tokens = tsg::tokenize(caption, loaded.vocab, preset.text_len);

    tsg::Rng zr = tsg::Rng::stream(seed, "stylize.z");
    tsg::Rng car = tsg::Rng::stream(seed, "stylize.ca");
    std::vector<float> zv(static_cast<size_t>(preset.cond_dim)), cav(static_cast<size_t>(preset.cond_dim));
    for (float& v : zv) v = zr.normal_f();
    for (float& v : cav) v = car.normal_f();

    tsg::NoGradGuard no_grad;
    tsg::Generation g = model.full_generate(tokens.ids, tokens.t_actual, image,
                                            tsg::Tensor::from({preset.cond_dim}, zv),
                                            tsg::Tensor::from({preset.cond_dim}, cav), 2);

    fs::create_directories(out_dir);
    tsg::save_png(fs::path(out_dir) / "stage1.png", g.stage0.image);
    tsg::save_png(fs::path(out_dir) / "stage2.png", g.stage1.image);

    json style;
    style["caption"] = caption;
    style["seed"] = seed;
    style["mu"] = std::vector<float>(g.stage1.style.mu.values().begin(), g.stage1.style.mu.values().end());
    style["sigma"] = std::vector<float>(g.stage1.style.sigma.values().begin(), g.stage1.style.sigma.values().end());
    std::ofstream sf(fs::path(out_dir) / "style.json", std::ios::trunc);
    sf << style.dump(2) << "\n";

    std::cout << "wrote " << (fs::path(out_dir) / "stage1.png").string() << ", stage2.png, style.json\n";
    return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& manifest_path) {
    json report;
    if (!ckpt.empty()) {
        tsg::LoadedCheckpoint loaded = tsg::load_checkpoint(ckpt);
        report["checkpoint"] = ckpt;
        report["step"] = loaded.step;
        report["preset"] = loaded.config.preset;
        report["vocab_size"] = loaded.vocab.size();
        report["codec_digest"] = loaded.model->codec().weight_digest();
        json stores;
        auto store_info = [](tsg::ParamStore& store) {
            json s;
            s["parameters"] = store.all().size();
            s["floats"] = store.total_size();
            return s;
        };
        stores["theta_t"] = store_info(loaded.model->theta_t());
        stores["theta_g"] = store_info(loaded.model->theta_g());
        stores["theta_d1"] = store_info(loaded.model->theta_d(0));
        stores["theta_d2"] = store_info(loaded.model->theta_d(1));
        report["stores"] = stores;
        report["config"] = tsg::config_to_json(loaded.config);
    }
    if (!manifest_path.empty()) {
        tsg::Manifest m = tsg::load_manifest(manifest_path);
        json mi;
        mi["records"] = m.records.size();
        mi["dropped_captions"] = m.dropped_captions;
        mi["skipped_missing"] = m.skipped_missing;
        report["manifest"] = mi;
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tsg: two-stage text-based style generation"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth-data", "write a procedural toy corpus + manifest");
    std::string synth_out = "toy_corpus";
    int synth_n = 8;
    uint64_t synth_seed = 1;
    int synth_size = 80;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--n", synth_n, "number of samples")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--size", synth_size, "image side length")->check(CLI::PositiveNumber);

    auto* train = app.add_subcommand("train", "run the adversarial training loop");
    std::string train_config, train_resume;
    std::vector<std::string> train_overrides;
    train->add_option("--config", train_config, "JSON config with flat dotted keys");
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("overrides", train_overrides, "key=value config overrides");
    train->footer("config keys:\n" + tsg::config_key_help());

    auto* eval = app.add_subcommand("eval", "evaluate SL and PSNR on a manifest");
    std::string eval_ckpt, eval_manifest, eval_report = "eval_report.json";
    std::vector<std::string> eval_overrides;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--manifest", eval_manifest, "evaluation manifest")->required();
    eval->add_option("--report", eval_report, "JSON report path");
    eval->add_option("overrides", eval_overrides, "key=value config overrides");

    auto* stylize = app.add_subcommand("stylize", "restyle one image from a caption");
    std::string sty_ckpt, sty_image, sty_caption, sty_out = "stylized";
    uint64_t sty_seed = 1;
    stylize->add_option("--ckpt", sty_ckpt, "checkpoint path")->required();
    stylize->add_option("--image", sty_image, "input PNG")->required();
    stylize->add_option("--caption", sty_caption, "guiding caption")->required();
    stylize->add_option("--seed", sty_seed, "noise seed");
    stylize->add_option("--out", sty_out, "output directory");

    auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint or manifest");
    std::string ins_ckpt, ins_manifest;
    inspect->add_option("--ckpt", ins_ckpt, "checkpoint path");
    inspect->add_option("--manifest", ins_manifest, "manifest path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // help exits 0, every other parse problem is a usage error
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_synth_data(synth_out, synth_n, synth_seed, synth_size);
        if (train->parsed()) return cmd_train(train_config, train_resume, train_overrides);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_manifest, eval_report, eval_overrides);
        if (stylize->parsed()) return cmd_stylize(sty_ckpt, sty_image, sty_caption, sty_seed, sty_out);
        if (inspect->parsed()) {
            if (ins_ckpt.empty() && ins_manifest.empty()) {
                std::cerr << "inspect: provide --ckpt and/or --manifest\n";
                return 1;
            }
            return cmd_inspect(ins_ckpt, ins_manifest);
        }
    } catch (const tsg::NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 2;
    } catch (const tsg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
