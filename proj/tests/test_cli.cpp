// Drives the installed binary end to end. Commands run through popen, so
// these tests check exactly what a shell user sees: exit codes, printed
// summaries, and files on disk.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
    int code;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(VSN_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

double value_after(const std::string& text, const std::string& label) {
    auto pos = text.find(label);
    REQUIRE_MESSAGE(pos != std::string::npos,
                    "missing \"" << label << "\" in:\n" << text);
    return std::stod(text.substr(pos + label.size()));
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE_MESSAGE(is.good(), "missing file " << p.string());
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
}

// micro-scale architecture flags reused across commands
const std::string kMicro = " --size 16 --widths 2 3 4 5 --window 3 --seed 16";

}  // namespace

TEST_CASE("synth, train, eval, and propagate flow through the binary") {
    TempDir tmp("vsn_cli_flow");
    std::string data = (tmp.path / "d").string();
    std::string run = (tmp.path / "run").string();

    auto synth = run_cli("synth --out " + data +
                         " --videos 4 --seed 1 --frames 4 --size 16");
    CHECK(synth.code == 0);
    CHECK(synth.out.find("wrote 4 videos") != std::string::npos);
    int videos = 0;
    for (const auto& entry : fs::directory_iterator(data)) {
        CHECK(fs::exists(entry.path() / "frames" / "000.png"));
        CHECK(fs::exists(entry.path() / "gt" / "000.json"));
        ++videos;
    }
    CHECK(videos == 4);

    auto train = run_cli("train --data " + data + " --out " + run + kMicro +
                         " --epochs 2");
    CHECK(train.code == 0);
    CHECK(train.out.find("epoch   0") != std::string::npos);
    CHECK(train.out.find("epoch   1") != std::string::npos);
    REQUIRE(fs::exists(fs::path(run) / "best.vsnt"));
    CHECK(fs::exists(fs::path(run) / "last.vsnt"));
    CHECK(fs::exists(fs::path(run) / "run.json"));
    std::string log = slurp(fs::path(run) / "trainlog.csv");
    CHECK(log.rfind("epoch,loss,train_iou,holdout_iou,seconds", 0) == 0);

    std::string ckpt = (fs::path(run) / "best.vsnt").string();
    std::string ev = (tmp.path / "ev").string();
    auto eval = run_cli("eval --checkpoint " + ckpt + " --data " + data +
                        " --out " + ev + kMicro);
    CHECK(eval.code == 0);
    double accuracy = value_after(eval.out, "accuracy: ");
    double mean_iou = value_after(eval.out, "mean_iou: ");
    CHECK(accuracy >= 0.0);
    CHECK(accuracy <= 1.0);
    CHECK(mean_iou >= 0.0);
    CHECK(mean_iou <= 1.0);
    REQUIRE(fs::exists(fs::path(ev) / "metrics.csv"));
    CHECK(fs::exists(fs::path(ev) / "saliency"));

    // the run.json echo reproduces the evaluation byte for byte
    std::string ev2 = (tmp.path / "ev2").string();
    auto eval2 = run_cli("eval --checkpoint " + ckpt + " --data " + data +
                         " --out " + ev2 + " --config " +
                         (fs::path(run) / "run.json").string());
    CHECK(eval2.code == 0);
    CHECK(slurp(fs::path(ev) / "metrics.csv") ==
          slurp(fs::path(ev2) / "metrics.csv"));

    // refinement accepts the saliency files eval just wrote
    fs::path sal;
    for (const auto& entry :
         fs::recursive_directory_iterator(fs::path(ev) / "saliency"))
        if (entry.path().extension() == ".png") {
            sal = entry.path();
            break;
        }
    REQUIRE(!sal.empty());
    std::string refined = (tmp.path / "refined.png").string();
    auto prop = run_cli("propagate --in " + sal.string() + " --out " + refined +
                        " --iters 10");
    CHECK(prop.code == 0);
    CHECK(fs::exists(refined));
}

TEST_CASE("bench prints consistent fps and step time") {
    auto bench = run_cli("bench --repeats 3" + kMicro);
    CHECK(bench.code == 0);
    double fps = value_after(bench.out, "fps: ");
    double ms = value_after(bench.out, "ms/step: ");
    CHECK(fps > 0.0);
    CHECK(ms > 0.0);
    CHECK(std::abs(fps - 1000.0 / ms) / fps < 0.01);  // printing quantization
}

TEST_CASE("cv writes fold results") {
    TempDir tmp("vsn_cli_cv");
    std::string out = (tmp.path / "cv").string();
    auto cv = run_cli("cv --out " + out + " --k 2 --videos 4 --epochs 1" +
                      kMicro);
    CHECK(cv.code == 0);
    CHECK(cv.out.find("mean_accuracy: ") != std::string::npos);
    CHECK(cv.out.find("std_accuracy: ") != std::string::npos);
    CHECK(fs::exists(fs::path(out) / "cv.csv"));
    CHECK(fs::exists(fs::path(out) / "fold0" / "metrics.csv"));
    CHECK(fs::exists(fs::path(out) / "fold1" / "metrics.csv"));
}

TEST_CASE("bad invocations exit nonzero with a message") {
    TempDir tmp("vsn_cli_err");

    auto unknown_flag = run_cli("train --bogus x --out o");
    CHECK(unknown_flag.code != 0);
    CHECK(unknown_flag.out.find("--bogus") != std::string::npos);

    auto missing_out = run_cli("train --size 16");
    CHECK(missing_out.code != 0);
    CHECK(missing_out.out.find("--out") != std::string::npos);

    auto no_subcommand = run_cli("");
    CHECK(no_subcommand.code != 0);

    auto bad_subcommand = run_cli("transmogrify");
    CHECK(bad_subcommand.code != 0);

    auto missing_ckpt =
        run_cli("eval --checkpoint nope.vsnt --data nope --out " +
                (tmp.path / "e").string() + kMicro);
    CHECK(missing_ckpt.code != 0);
    CHECK(missing_ckpt.out.find("error:") != std::string::npos);

    // config files with unknown keys are typos, not extensions
    fs::path bad_cfg = tmp.path / "bad.json";
    std::ofstream(bad_cfg) << "{\"bogus\": 1}\n";
    auto bad_config = run_cli("train --out " + (tmp.path / "o").string() +
                              " --config " + bad_cfg.string());
    CHECK(bad_config.code != 0);
    CHECK(bad_config.out.find("unknown key") != std::string::npos);
}
