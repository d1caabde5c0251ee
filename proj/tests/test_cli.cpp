#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "tsg/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kCli = TSG_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path scratch_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<unsigned char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_config(const fs::path& path, const fs::path& manifest, const fs::path& out_dir, int steps,
                  int checkpoint_every = 0) {
    json j;
    j["preset"] = "tiny";
    j["seed"] = 3;
    j["trainer.batch"] = 2;
    j["trainer.steps"] = steps;
    j["trainer.checkpoint_every"] = checkpoint_every;
    j["data.manifest"] = manifest.string();
    j["out.dir"] = out_dir.string();
    j["out.samples"] = false;
    std::ofstream f(path);
    f << j.dump(2);
}

}  // namespace

TEST_CASE("synth-data writes a deterministic corpus and rejects n=0") {
    fs::path a = scratch_dir("tsg_cli_synth_a");
    fs::path b = scratch_dir("tsg_cli_synth_b");
    CHECK(run("synth-data --out " + a.string() + " --n 4 --seed 9 --size 12") == 0);
    CHECK(run("synth-data --out " + b.string() + " --n 4 --seed 9 --size 12") == 0);
    CHECK(fs::exists(a / "manifest.jsonl"));
    int pngs = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().extension() == ".png") ++pngs;
    }
    CHECK(pngs == 4);
    CHECK(file_bytes(a / "sample_0000.png") == file_bytes(b / "sample_0000.png"));
    CHECK(file_bytes(a / "manifest.jsonl") == file_bytes(b / "manifest.jsonl"));

    CHECK(run("synth-data --out " + a.string() + " --n 0") == 1);
}

TEST_CASE("train: trace rows, bad config key, resume continuity") {
    fs::path corpus = scratch_dir("tsg_cli_corpus");
    REQUIRE(run("synth-data --out " + corpus.string() + " --n 6 --seed 2 --size 12") == 0);

    fs::path out_a = scratch_dir("tsg_cli_run_a");
    fs::path cfg = corpus / "config.json";
    write_config(cfg, corpus / "manifest.jsonl", out_a, 4, 2);
    CHECK(run("train --config " + cfg.string()) == 0);
    std::vector<std::string> trace = read_lines(out_a / "trace.csv");
    REQUIRE(trace.size() == 5);  // header + 4 steps
    CHECK(trace[0] == "step,l_g,l_d,l_s0,l_s1,sl_eval,psnr_eval");
    CHECK(fs::exists(out_a / "ckpt_final.ckpt"));
    CHECK(fs::exists(out_a / "ckpt_000002.ckpt"));

    // unknown key is rejected with exit 1
    CHECK(run("train --config " + cfg.string() + " trainer.nope=1") == 1);

    // resume from the middle reproduces the uninterrupted rows
    fs::path out_b = scratch_dir("tsg_cli_run_b");
    fs::path cfg_b = corpus / "config_b.json";
    write_config(cfg_b, corpus / "manifest.jsonl", out_b, 4);
    CHECK(run("train --config " + cfg_b.string() + " --resume " + (out_a / "ckpt_000002.ckpt").string()) == 0);
    std::vector<std::string> trace_b = read_lines(out_b / "trace.csv");
    REQUIRE(trace_b.size() == 3);  // header + steps 3..4
    CHECK(trace_b[1] == trace[3]);
    CHECK(trace_b[2] == trace[4]);
}

TEST_CASE("eval: report fields and empty-manifest failure") {
    fs::path corpus = scratch_dir("tsg_cli_eval_corpus");
    REQUIRE(run("synth-data --out " + corpus.string() + " --n 4 --seed 4 --size 12") == 0);
    fs::path out = scratch_dir("tsg_cli_eval_run");
    fs::path cfg = corpus / "config.json";
    write_config(cfg, corpus / "manifest.jsonl", out, 2);
    REQUIRE(run("train --config " + cfg.string()) == 0);

    fs::path report = out / "report.json";
    CHECK(run("eval --ckpt " + (out / "ckpt_final.ckpt").string() + " --manifest " +
              (corpus / "manifest.jsonl").string() + " --report " + report.string()) == 0);
    json j;
    std::ifstream(report) >> j;
    CHECK(j.contains("sl_mean"));
    CHECK(j.contains("psnr_mean"));
    CHECK(j["count"].get<int>() == 4);

    // deterministic across reruns
    fs::path report2 = out / "report2.json";
    CHECK(run("eval --ckpt " + (out / "ckpt_final.ckpt").string() + " --manifest " +
              (corpus / "manifest.jsonl").string() + " --report " + report2.string()) == 0);
    json j2;
    std::ifstream(report2) >> j2;
    CHECK(j["sl_mean"] == j2["sl_mean"]);

    fs::path empty = corpus / "empty.jsonl";
    std::ofstream(empty) << R"({"image_path":"sample_0000.png","caption":"ab"})" << "\n";
    CHECK(run("eval --ckpt " + (out / "ckpt_final.ckpt").string() + " --manifest " + empty.string()) == 1);
}

TEST_CASE("stylize: outputs, seed sensitivity, missing input") {
    fs::path corpus = scratch_dir("tsg_cli_sty_corpus");
    REQUIRE(run("synth-data --out " + corpus.string() + " --n 4 --seed 6 --size 12") == 0);
    fs::path out = scratch_dir("tsg_cli_sty_run");
    fs::path cfg = corpus / "config.json";
    write_config(cfg, corpus / "manifest.jsonl", out, 2);
    REQUIRE(run("train --config " + cfg.string()) == 0);
    const std::string ckpt = (out / "ckpt_final.ckpt").string();

    fs::path sty1 = scratch_dir("tsg_cli_sty_out1");
    CHECK(run("stylize --ckpt " + ckpt + " --image " + (corpus / "sample_0000.png").string() +
              " --caption \"a warm scene of golden stripes\" --seed 1 --out " + sty1.string()) == 0);
    CHECK(fs::exists(sty1 / "stage1.png"));
    CHECK(fs::exists(sty1 / "stage2.png"));
    CHECK(fs::exists(sty1 / "style.json"));
    tsg::Tensor img = tsg::load_png(sty1 / "stage2.png");
    CHECK(img.shape() == tsg::Shape{3, 8, 8});  // tiny preset resolution

    fs::path sty2 = scratch_dir("tsg_cli_sty_out2");
    CHECK(run("stylize --ckpt " + ckpt + " --image " + (corpus / "sample_0000.png").string() +
              " --caption \"a warm scene of golden stripes\" --seed 2 --out " + sty2.string()) == 0);
    json s1, s2;
    std::ifstream(sty1 / "style.json") >> s1;
    std::ifstream(sty2 / "style.json") >> s2;
    CHECK(s1["mu"] != s2["mu"]);  // distinct z

    CHECK(run("stylize --ckpt " + ckpt + " --image " + (corpus / "nope.png").string() +
              " --caption \"x y z w\" --out " + sty2.string()) == 1);
}

TEST_CASE("train --help enumerates the config keys with defaults") {
    fs::path out = fs::temp_directory_path() / "tsg_cli_help.txt";
    const std::string cmd = std::string(kCli) + " train --help > " + out.string() + " 2>&1";
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    std::ifstream in(out);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    for (const char* key : {"preset", "seed", "trainer.batch", "trainer.lambda", "trainer.lr_g", "trainer.lr_d",
                            "trainer.lr_t", "trainer.beta1", "trainer.beta2", "trainer.epochs",
                            "trainer.checkpoint_every", "trainer.eval_every", "data.manifest", "out.dir"}) {
        CHECK(text.find(key) != std::string::npos);
    }
    CHECK(text.find("0.0002") != std::string::npos);  // lr defaults are visible
    fs::remove(out);
}

TEST_CASE("desk preset: ten steps write ten trace rows") {
    fs::path corpus = scratch_dir("tsg_cli_desk_corpus");
    REQUIRE(run("synth-data --out " + corpus.string() + " --n 6 --seed 5") == 0);
    fs::path out = scratch_dir("tsg_cli_desk_run");
    json j;
    j["preset"] = "desk";
    j["seed"] = 5;
    j["trainer.batch"] = 2;
    j["trainer.steps"] = 10;
    j["data.manifest"] = (corpus / "manifest.jsonl").string();
    j["out.dir"] = out.string();
    j["out.samples"] = false;
    fs::path cfg = corpus / "desk.json";
    std::ofstream(cfg) << j.dump(2);
    CHECK(run("train --config " + cfg.string()) == 0);
    CHECK(read_lines(out / "trace.csv").size() == 11);  // header + 10 steps
}

TEST_CASE("inspect summarizes checkpoints and manifests") {
    fs::path corpus = scratch_dir("tsg_cli_ins_corpus");
    REQUIRE(run("synth-data --out " + corpus.string() + " --n 4 --seed 8 --size 12") == 0);
    fs::path out = scratch_dir("tsg_cli_ins_run");
    fs::path cfg = corpus / "config.json";
    write_config(cfg, corpus / "manifest.jsonl", out, 1);
    REQUIRE(run("train --config " + cfg.string()) == 0);

    CHECK(run("inspect --ckpt " + (out / "ckpt_final.ckpt").string()) == 0);
    CHECK(run("inspect --manifest " + (corpus / "manifest.jsonl").string()) == 0);
    CHECK(run("inspect") == 1);
}
