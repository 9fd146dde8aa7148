#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsnet/harness.hpp"
#include "vsnet/image_io.hpp"

using namespace vsnet;
namespace fs = std::filesystem;

namespace {

VsNetConfig micro_model() {
    VsNetConfig m;
    m.input_size = 16;
    m.input_channels = 3;
    m.stage_widths = {2, 3, 4, 5};
    m.decoder_width_multiplier = 1.0;
    m.dropout_p = 0.0;
    m.vae_enabled = true;
    m.kl_weight = 0.05;
    m.arp_window = 3;
    m.seed = 16;
    return m;
}

RunConfig micro_run() {
    RunConfig cfg;
    cfg.model = micro_model();
    cfg.batch = 8;
    cfg.epochs = 2;
    cfg.synth_videos = 4;
    cfg.synth.frame_count = 6;
    cfg.synth.doc_scale = 0.6;
    cfg.synth.velocity_x = 0.4;
    cfg.synth.velocity_y = 0.2;
    cfg.test_fraction = 0.25;
    cfg.seed = 16;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE_MESSAGE(is.good(), "missing file " << p.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::string stem3(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", index);
    return buf;
}

// mirrors the evaluation window: clamped indices around frame f
VsNet::WindowResult predict_frame(const VsNet& model, const VideoSample& video, int f,
                                  int T) {
    int F = static_cast<int>(video.frames.size());
    std::vector<Tensor> window;
    for (int t = 0; t < T; ++t)
        window.push_back(image_to_tensor(
            video.frames[static_cast<std::size_t>(std::clamp(f - T / 2 + t, 0, F - 1))]));
    return model.forward_window(window, false, 0);
}

}  // namespace

TEST_CASE("run config JSON round trips exactly") {
    RunConfig cfg = micro_run();
    cfg.model.arp_placement = ArpPlacement::input_frames;
    cfg.model.arp_variant = ArpVariant::simple;
    cfg.augment_enabled = true;
    cfg.augment.max_shift = 1.5;
    cfg.data_dir = "somewhere";
    cfg.out_dir = "out";
    cfg.propagate = true;
    cfg.seed = 17;
    cfg.model.seed = 17;

    std::string text = run_config_to_json(cfg);
    RunConfig back = run_config_from_json(text);
    CHECK(run_config_to_json(back) == text);
    CHECK(back.model.input_size == 16);
    CHECK(back.model.stage_widths == std::vector<int>{2, 3, 4, 5});
    CHECK(back.model.arp_placement == ArpPlacement::input_frames);
    CHECK(back.model.arp_variant == ArpVariant::simple);
    CHECK(back.augment.max_shift == 1.5);
    CHECK(back.seed == 17);
    CHECK(back.model.seed == 17);

    RunConfig defaults = run_config_from_json("{}");
    CHECK(defaults.lr == 0.001);
    CHECK(defaults.weight_decay == 0.006);
    CHECK(defaults.batch == 8);

    RunConfig seeded = run_config_from_json("{\"seed\": 7}");
    CHECK(seeded.seed == 7);
    CHECK(seeded.model.seed == 7);
}

TEST_CASE("run config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(run_config_from_json("{\"nope\": 1}"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("not json"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("[1, 2]"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"lr\": \"fast\"}"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"arp_placement\": \"middle\"}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"arp_variant\": \"x\"}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"lr\": -0.1}"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"epochs\": 0}"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"batch\": 0}"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"window_stride\": 0}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"test_fraction\": 1.5}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"fg_thresh\": 0.1}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"dilation_rate\": 2}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"weight_decay\": -1}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"loss_alpha\": -1}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"synth_videos\": -1}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json("{\"propagate_iters\": -1}"),
                    std::invalid_argument);

    RunConfig bad = micro_run();
    bad.lr = -1.0;
    CHECK_THROWS_AS(validate_run_config(bad), std::invalid_argument);

    // lr 0 is a valid diagnostic setting, not an error
    RunConfig ok = micro_run();
    ok.lr = 0.0;
    CHECK_NOTHROW(validate_run_config(ok));
}

TEST_CASE("synth_dataset varies attribute and placement per video") {
    SynthSpec base;
    base.height = 16;
    base.width = 16;
    base.frame_count = 3;
    Dataset a = synth_dataset(base, 7, 3);
    Dataset b = synth_dataset(base, 7, 3);
    Dataset c = synth_dataset(base, 7, 4);
    REQUIRE(a.size() == 7);

    const char* expect_attr[] = {"TS", "KS", "HS", "PS", "CS", "TS", "KS"};
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(attribute_name(a[i].attribute) == expect_attr[i]);
        CHECK(a[i].id.substr(0, 2) == expect_attr[i]);
        CHECK(a[i].frames.size() == 3);
        CHECK(a[i].frames[0].h == 16);
        ids.insert(a[i].id);
    }
    CHECK(ids.size() == 7);

    CHECK(a[0].frames[0].data == b[0].frames[0].data);       // same seed
    CHECK(a[0].frames[0].data != c[0].frames[0].data);       // different seed
    CHECK(a[0].frames[0].data != a[5].frames[0].data);       // same attribute, new video

    CHECK_THROWS_AS(synth_dataset(base, 0, 1), std::invalid_argument);
}

TEST_CASE("obtain_dataset prefers data_dir and sizes synthesis to the model") {
    RunConfig cfg = micro_run();
    cfg.synth_videos = 2;
    Dataset synthd = obtain_dataset(cfg);
    REQUIRE(synthd.size() == 2);
    CHECK(synthd[0].frames[0].h == 16);  // template default 64 is overridden
    CHECK(synthd[0].frames[0].w == 16);

    TempDir tmp("vsn_harness_data");
    save_midv_dir(synthd, tmp.path.string());
    RunConfig disk = cfg;
    disk.data_dir = tmp.path.string();
    Dataset loaded = obtain_dataset(disk);
    REQUIRE(loaded.size() == 2);

    std::set<std::string> want, got;
    for (const auto& v : synthd) want.insert(v.id);
    for (const auto& v : loaded) got.insert(v.id);
    CHECK(want == got);
    for (const auto& lv : loaded)
        for (const auto& sv : synthd)
            if (lv.id == sv.id)
                for (std::size_t f = 0; f < sv.masks.size(); ++f)
                    CHECK(lv.masks[f].data == sv.masks[f].data);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    RunConfig cfg = micro_run();
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    cfg.epochs = 1;
    cfg.model.dropout_p = 0.25;  // stochastic layers must not matter either
    Dataset ds = obtain_dataset(cfg);
    VsNet model(cfg.model);

    std::vector<std::vector<double>> before;
    for (const Tensor& p : model.parameters())
        before.emplace_back(p.data().begin(), p.data().end());

    TrainResult r = train_model(model, ds, {}, cfg);
    REQUIRE(r.epochs_run == 1);

    auto params = model.parameters();
    REQUIRE(params.size() == before.size());
    bool same = true;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto cur = params[i].data();
        for (std::size_t j = 0; j < cur.size(); ++j)
            if (cur[j] != before[i][j]) same = false;
    }
    CHECK(same);
}

TEST_CASE("training is bit-deterministic per seed") {
    TempDir tmp("vsn_harness_det");
    RunConfig cfg = micro_run();
    cfg.epochs = 3;
    RunConfig a = cfg, b = cfg;
    a.out_dir = (tmp.path / "a").string();
    b.out_dir = (tmp.path / "b").string();

    TrainResult ra = train(a);
    TrainResult rb = train(b);
    REQUIRE(ra.log.size() == rb.log.size());
    for (std::size_t i = 0; i < ra.log.size(); ++i) {
        CHECK(ra.log[i].train_loss == rb.log[i].train_loss);
        CHECK(ra.log[i].train_iou == rb.log[i].train_iou);
        CHECK(ra.log[i].holdout_iou == rb.log[i].holdout_iou);
    }
    CHECK(slurp(fs::path(a.out_dir) / "last.vsnt") ==
          slurp(fs::path(b.out_dir) / "last.vsnt"));
    CHECK(slurp(fs::path(a.out_dir) / "best.vsnt") ==
          slurp(fs::path(b.out_dir) / "best.vsnt"));

    RunConfig other = cfg;
    other.seed = 99;
    TrainResult rc = train(other);
    CHECK(rc.log[0].train_loss != ra.log[0].train_loss);
}

TEST_CASE("train writes run artifacts") {
    TempDir tmp("vsn_harness_artifacts");
    RunConfig cfg = micro_run();
    cfg.out_dir = (tmp.path / "run").string();

    TrainResult r = train(cfg);
    REQUIRE(r.epochs_run == cfg.epochs);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "run.json"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "trainlog.csv"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "last.vsnt"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "best.vsnt"));
    CHECK(r.last_checkpoint == (fs::path(cfg.out_dir) / "last.vsnt").string());
    CHECK(r.best_checkpoint == (fs::path(cfg.out_dir) / "best.vsnt").string());

    // the stored config reproduces the run settings verbatim
    RunConfig back = run_config_from_json(slurp(fs::path(cfg.out_dir) / "run.json"));
    RunConfig expect = cfg;
    expect.model.seed = expect.seed;
    CHECK(run_config_to_json(back) == run_config_to_json(expect));

    // the checkpoint loads into a fresh model of the same architecture
    VsNet fresh(cfg.model);
    CHECK_NOTHROW(load_checkpoint(fresh, r.last_checkpoint));

    // best tracks the strongest holdout epoch
    double best = 0.0;
    for (const EpochStats& e : r.log) best = std::max(best, e.holdout_iou);
    CHECK(r.best_holdout_iou == best);

    // CSV: header plus one row per epoch, in epoch order, 17-digit round trip
    std::istringstream csv(slurp(fs::path(cfg.out_dir) / "trainlog.csv"));
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "epoch,loss,train_iou,holdout_iou,seconds");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::istringstream row(line);
        std::string cell;
        REQUIRE(std::getline(row, cell, ','));
        CHECK(std::stoi(cell) == rows);
        REQUIRE(std::getline(row, cell, ','));
        CHECK(std::stod(cell) == r.log[static_cast<std::size_t>(rows)].train_loss);
        ++rows;
    }
    CHECK(rows == r.epochs_run);
}

TEST_CASE("the epoch callback sees every epoch") {
    RunConfig cfg = micro_run();
    cfg.epochs = 3;
    Dataset ds = obtain_dataset(cfg);
    VsNet model(cfg.model);
    std::vector<EpochStats> seen;
    TrainResult r = train_model(model, ds, {}, cfg,
                                [&](const EpochStats& s) { seen.push_back(s); });
    REQUIRE(seen.size() == r.log.size());
    for (std::size_t i = 0; i < seen.size(); ++i) {
        CHECK(seen[i].epoch == static_cast<int>(i));
        CHECK(seen[i].train_loss == r.log[i].train_loss);
        CHECK(seen[i].train_iou == r.log[i].train_iou);
    }
}

TEST_CASE("early stopping halts at the gate") {
    RunConfig cfg = micro_run();
    cfg.epochs = 3;
    TrainResult full = train(cfg);
    REQUIRE(full.epochs_run == 3);

    double gate = full.log[0].train_iou;
    REQUIRE(gate > 0.0);
    RunConfig stop_cfg = cfg;
    stop_cfg.early_stop_train_iou = gate;  // reached on the first epoch
    TrainResult stopped = train(stop_cfg);
    CHECK(stopped.epochs_run == 1);
    CHECK(stopped.log[0].train_iou == gate);

    double hgate = full.log[0].holdout_iou;
    REQUIRE(hgate > 0.0);
    RunConfig hstop = cfg;
    hstop.early_stop_holdout_iou = hgate;
    TrainResult hstopped = train(hstop);
    CHECK(hstopped.epochs_run == 1);
}

TEST_CASE("augmentation is deterministic and a zero draw is an identity") {
    RunConfig cfg = micro_run();
    TrainResult plain = train(cfg);

    RunConfig zero = cfg;
    zero.augment_enabled = true;  // all-zero bounds draw nothing
    TrainResult zeroed = train(zero);
    REQUIRE(plain.log.size() == zeroed.log.size());
    for (std::size_t i = 0; i < plain.log.size(); ++i) {
        CHECK(plain.log[i].train_loss == zeroed.log[i].train_loss);
        CHECK(plain.log[i].train_iou == zeroed.log[i].train_iou);
    }

    RunConfig aug = cfg;
    aug.augment_enabled = true;
    aug.augment.max_shift = 2.0;
    aug.augment.max_rotation_deg = 8.0;
    aug.augment.noise_sigma = 0.02;
    TrainResult a1 = train(aug);
    TrainResult a2 = train(aug);
    REQUIRE(a1.log.size() == a2.log.size());
    for (std::size_t i = 0; i < a1.log.size(); ++i)
        CHECK(a1.log[i].train_loss == a2.log[i].train_loss);
    CHECK(a1.log[0].train_loss != plain.log[0].train_loss);
}

TEST_CASE("a non-finite loss aborts with diagnostics") {
    RunConfig cfg = micro_run();
    cfg.lr = 1e12;  // guaranteed blowup within a few steps
    cfg.weight_decay = 0.0;
    cfg.epochs = 5;
    cfg.model.kl_weight = 0.1;
    try {
        train(cfg);
        FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("train_model validates inputs") {
    RunConfig cfg = micro_run();
    VsNet model(cfg.model);
    CHECK_THROWS_AS(train_model(model, {}, {}, cfg), std::invalid_argument);

    Dataset ds = obtain_dataset(cfg);
    VsNet unbuilt;
    CHECK_THROWS_AS(train_model(unbuilt, ds, {}, cfg), std::logic_error);

    RunConfig big = cfg;
    big.model.input_size = 32;
    Dataset big_ds = obtain_dataset(big);
    CHECK_THROWS_AS(train_model(model, big_ds, {}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_model(model, ds, big_ds, cfg), std::invalid_argument);

    RunConfig short_cfg = cfg;
    short_cfg.synth.frame_count = 2;  // shorter than the window
    Dataset short_ds = obtain_dataset(short_cfg);
    CHECK_THROWS_AS(train_model(model, short_ds, {}, cfg), std::invalid_argument);

    CHECK_THROWS_AS(evaluate_model(unbuilt, ds, cfg), std::logic_error);
}

TEST_CASE("evaluation reproduces the metrics pipeline exactly") {
    RunConfig cfg = micro_run();
    cfg.synth_videos = 2;
    cfg.synth.frame_count = 4;
    Dataset ds = obtain_dataset(cfg);
    VsNet model(cfg.model);

    MetricsReport report = evaluate_model(model, ds, cfg);
    CHECK(report.fps == 0.0);
    CHECK(report.ms_per_step == 0.0);

    LossWeights w;
    w.alpha = cfg.loss_alpha;
    w.beta = cfg.model.kl_weight;
    std::vector<double> ious;
    double loss_sum = 0.0;
    std::size_t row = 0, skip = 0;
    for (const VideoSample& video : ds) {
        for (int f = 0; f < static_cast<int>(video.frames.size()); ++f) {
            auto out = predict_frame(model, video, f, cfg.model.arp_window);
            Tensor gt = mask_to_tensor(video.masks[static_cast<std::size_t>(f)]);
            Tensor loss = total_loss(out.saliency, gt, w, out.mu, out.logvar);
            auto pred = binarize(out.saliency);
            std::string id = video.id + "/" + stem3(f);
            try {
                double iou =
                    iou_metric(pred, video.masks[static_cast<std::size_t>(f)].data);
                REQUIRE(row < report.frames.size());
                CHECK(report.frames[row].frame_id == id);
                CHECK(report.frames[row].iou == iou);
                CHECK(report.frames[row].loss == loss.item());
                ious.push_back(iou);
                loss_sum += loss.item();
                ++row;
            } catch (const std::domain_error&) {
                REQUIRE(skip < report.skipped.size());
                CHECK(report.skipped[skip] == id);
                ++skip;
            }
        }
    }
    CHECK(row == report.frames.size());
    CHECK(skip == report.skipped.size());
    REQUIRE(!ious.empty());
    CHECK(report.accuracy == detection_accuracy(ious, 0.5));
    CHECK(report.mean_loss == loss_sum / static_cast<double>(ious.size()));
}

TEST_CASE("predictions matching ground truth score perfectly") {
    RunConfig cfg = micro_run();
    cfg.synth_videos = 2;
    cfg.synth.frame_count = 4;
    Dataset ds = obtain_dataset(cfg);
    VsNet model(cfg.model);

    // ground truth := the model's own binarized predictions
    for (VideoSample& video : ds)
        for (int f = 0; f < static_cast<int>(video.frames.size()); ++f) {
            auto out = predict_frame(model, video, f, cfg.model.arp_window);
            video.masks[static_cast<std::size_t>(f)].data = binarize(out.saliency);
        }

    MetricsReport report = evaluate_model(model, ds, cfg);
    REQUIRE(!report.frames.empty());
    double iou_sum = 0.0;
    for (const FrameMetric& fm : report.frames) {
        CHECK(fm.iou == 1.0);
        iou_sum += fm.iou;
    }
    CHECK(report.accuracy == 1.0);
    CHECK(iou_sum / static_cast<double>(report.frames.size()) == 1.0);
}

TEST_CASE("hand-built ground truth yields exact IoU values") {
    RunConfig cfg = micro_run();
    cfg.synth_videos = 1;
    cfg.synth.frame_count = 2;
    Dataset ds = obtain_dataset(cfg);
    REQUIRE(ds.size() == 1);
    REQUIRE(ds[0].frames.size() == 2);
    VsNet model(cfg.model);

    auto p0 = binarize(predict_frame(model, ds[0], 0, cfg.model.arp_window).saliency);
    auto p1 = binarize(predict_frame(model, ds[0], 1, cfg.model.arp_window).saliency);
    std::size_t total = p0.size();
    std::size_t cnt0 = static_cast<std::size_t>(std::count(p0.begin(), p0.end(), 1));
    REQUIRE(cnt0 >= 1);
    REQUIRE(std::count(p1.begin(), p1.end(), 1) >= 1);

    // intersection i, union 7i makes the IoU exactly 1/7
    std::size_t inter = (cnt0 + 6) / 7;
    std::size_t extra = 7 * inter - cnt0;
    REQUIRE(cnt0 + extra <= total);
    std::vector<std::uint8_t> g0(total, 0);
    std::size_t taken = 0;
    for (std::size_t p = 0; p < total && taken < inter; ++p)
        if (p0[p]) {
            g0[p] = 1;
            ++taken;
        }
    std::size_t added = 0;
    for (std::size_t p = 0; p < total && added < extra; ++p)
        if (!p0[p]) {
            g0[p] = 1;
            ++added;
        }
    REQUIRE(taken == inter);
    REQUIRE(added == extra);
    ds[0].masks[0].data = g0;
    ds[0].masks[1].data = p1;  // IoU exactly 1

    MetricsReport report = evaluate_model(model, ds, cfg);
    REQUIRE(report.frames.size() == 2);
    CHECK(report.frames[0].iou == 1.0 / 7.0);
    CHECK(report.frames[1].iou == 1.0);
    CHECK(report.accuracy == 0.5);

    std::ostringstream expect;
    expect.precision(17);
    expect << 1.0 / 7.0;
    CHECK(report.to_csv().find(expect.str()) != std::string::npos);
}

TEST_CASE("evaluating an untrained model reports finite metrics") {
    RunConfig cfg = micro_run();
    cfg.synth_videos = 2;
    cfg.synth.frame_count = 3;
    Dataset ds = obtain_dataset(cfg);
    VsNet model(cfg.model);
    MetricsReport report = evaluate_model(model, ds, cfg);
    CHECK(report.frames.size() + report.skipped.size() == 6);
    CHECK(std::isfinite(report.accuracy));
    CHECK(std::isfinite(report.mean_loss));
    for (const FrameMetric& fm : report.frames) {
        CHECK(std::isfinite(fm.loss));
        CHECK(fm.iou >= 0.0);
        CHECK(fm.iou <= 1.0);
    }
}

TEST_CASE("evaluation writes saliency images") {
    TempDir tmp("vsn_harness_sal");
    RunConfig cfg = micro_run();
    cfg.synth_videos = 2;
    cfg.synth.frame_count = 3;
    Dataset ds = obtain_dataset(cfg);
    VsNet model(cfg.model);
    evaluate_model(model, ds, cfg, tmp.path.string());
    for (const VideoSample& v : ds)
        for (int f = 0; f < 3; ++f) {
            fs::path p = tmp.path / v.id / (stem3(f) + ".png");
            REQUIRE_MESSAGE(fs::exists(p), "missing " << p.string());
            Image img = read_png(p.string());
            CHECK(img.channels == 1);
            CHECK(img.h == 16);
            CHECK(img.w == 16);
            for (double val : img.data) CHECK((val >= 0.0 && val <= 1.0));
        }
}

TEST_CASE("refined evaluation stays well formed") {
    RunConfig cfg = micro_run();
    cfg.synth_videos = 1;
    cfg.synth.frame_count = 3;
    Dataset ds = obtain_dataset(cfg);
    VsNet model(cfg.model);
    RunConfig refined = cfg;
    refined.propagate = true;
    refined.propagate_iters = 10;
    MetricsReport report = evaluate_model(model, ds, refined);
    CHECK(report.frames.size() + report.skipped.size() == 3);
    for (const FrameMetric& fm : report.frames) CHECK(std::isfinite(fm.loss));
}

TEST_CASE("propagation pins seeds and keeps binary maps fixed") {
    Image bin = make_image(4, 5, 1);
    for (std::size_t i = 0; i < bin.data.size(); ++i) bin.data[i] = i % 2 ? 1.0 : 0.0;
    PropagateResult r = propagate_labels(bin);
    CHECK_FALSE(r.no_seeds);
    CHECK(r.map.data == bin.data);
    PropagateResult again = propagate_labels(r.map);
    CHECK(again.map.data == r.map.data);
}

TEST_CASE("a lone uncertain pixel adopts its foreground ring") {
    Image img = make_image(3, 3, 1);
    std::fill(img.data.begin(), img.data.end(), 0.9);
    img.data[4] = 0.5;
    PropagateResult r = propagate_labels(img, 0.8, 0.2, 50);
    CHECK_FALSE(r.no_seeds);
    for (std::size_t i = 0; i < 9; ++i)
        if (i != 4) CHECK(r.map.data[i] == 1.0);  // seeds pin to hard labels
    CHECK(std::abs(r.map.data[4] - 1.0) <= 1e-3);
    for (double v : r.map.data) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("propagation with no seeds warns and returns the input") {
    Image img = make_image(3, 3, 1);
    std::fill(img.data.begin(), img.data.end(), 0.5);
    PropagateResult r = propagate_labels(img);
    CHECK(r.no_seeds);
    CHECK(r.map.data == img.data);
}

TEST_CASE("an uncertain band between opposite seeds settles at the midpoint") {
    Image img = make_image(3, 3, 1);
    for (int y = 0; y < 3; ++y) {
        img.at(y, 0, 0) = 0.9;
        img.at(y, 1, 0) = 0.5;
        img.at(y, 2, 0) = 0.1;
    }
    PropagateResult r = propagate_labels(img, 0.8, 0.2, 60);
    for (int y = 0; y < 3; ++y) {
        CHECK(r.map.at(y, 0, 0) == 1.0);
        CHECK(r.map.at(y, 2, 0) == 0.0);
        CHECK(std::abs(r.map.at(y, 1, 0) - 0.5) < 1e-9);
    }
}

TEST_CASE("propagation validates its input") {
    Image rgb = make_image(2, 2, 3);
    CHECK_THROWS_AS(propagate_labels(rgb), std::invalid_argument);
    Image out_of_range = make_image(2, 2, 1);
    out_of_range.data[0] = 1.5;
    CHECK_THROWS_AS(propagate_labels(out_of_range), std::invalid_argument);
    Image nan_map = make_image(2, 2, 1);
    nan_map.data[0] = std::nan("");
    CHECK_THROWS_AS(propagate_labels(nan_map), std::invalid_argument);
    Image ok = make_image(2, 2, 1);
    CHECK_THROWS_AS(propagate_labels(ok, 0.2, 0.8), std::invalid_argument);
    CHECK_THROWS_AS(propagate_labels(ok, 0.8, 0.2, -1), std::invalid_argument);
}

TEST_CASE("cross-validation trains and scores disjoint folds") {
    TempDir tmp("vsn_harness_cv");
    RunConfig cfg = micro_run();
    cfg.epochs = 1;
    cfg.synth_videos = 6;
    cfg.synth.frame_count = 4;
    cfg.out_dir = (tmp.path / "cv").string();

    FoldReport report = cross_validate(cfg, 3);
    REQUIRE(report.folds.size() == 3);

    std::size_t rows = 0;
    for (const MetricsReport& m : report.folds)
        rows += m.frames.size() + m.skipped.size();
    CHECK(rows == 6 * 4);  // every frame scored in exactly one fold

    double sum = 0.0;
    for (const MetricsReport& m : report.folds) sum += m.accuracy;
    double mean = sum / 3.0;
    CHECK(report.mean_accuracy == mean);
    double var = 0.0;
    for (const MetricsReport& m : report.folds) {
        double d = m.accuracy - mean;
        var += d * d;
    }
    CHECK(report.std_accuracy == std::sqrt(var / 3.0));

    CHECK(fs::exists(fs::path(cfg.out_dir) / "cv.csv"));
    for (int i = 0; i < 3; ++i) {
        fs::path fold = fs::path(cfg.out_dir) / ("fold" + std::to_string(i));
        CHECK(fs::exists(fold / "metrics.csv"));
        CHECK(fs::exists(fold / "last.vsnt"));
    }

    std::istringstream csv(fold_report_to_csv(report));
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "fold,accuracy,mean_iou,mean_loss");
    int data_rows = 0;
    while (std::getline(csv, line)) ++data_rows;
    CHECK(data_rows == 5);  // three folds, mean, std

    // a second run is byte-identical: nothing time-dependent leaks in
    RunConfig rerun = cfg;
    rerun.out_dir = (tmp.path / "cv2").string();
    cross_validate(rerun, 3);
    CHECK(slurp(fs::path(cfg.out_dir) / "cv.csv") ==
          slurp(fs::path(rerun.out_dir) / "cv.csv"));
    CHECK(slurp(fs::path(cfg.out_dir) / "fold0" / "last.vsnt") ==
          slurp(fs::path(rerun.out_dir) / "fold0" / "last.vsnt"));

    RunConfig tiny = cfg;
    tiny.synth_videos = 2;
    tiny.out_dir.clear();
    CHECK_THROWS_AS(cross_validate(tiny, 5), std::invalid_argument);
}
