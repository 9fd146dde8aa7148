#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <vector>

#include "vsnet/model.hpp"
#include "vsnet/objectives.hpp"
#include "vsnet/tensor.hpp"

using namespace vsnet;

namespace {

VsNetConfig desk_config() {
    VsNetConfig cfg;
    cfg.input_size = 64;
    cfg.stage_widths = {8, 16, 32, 64};
    cfg.arp_window = 5;
    cfg.seed = 7;
    return cfg;
}

VsNetConfig micro_config() {
    VsNetConfig cfg;
    cfg.input_size = 16;
    cfg.stage_widths = {2, 3, 4, 5};
    cfg.arp_window = 3;
    cfg.dropout_p = 0.25;
    cfg.seed = 11;
    return cfg;
}

std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.numel() == b.numel());
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("desk-scale build and parameter count") {
    VsNetConfig cfg = desk_config();
    VsNet model(cfg);
    CHECK(model.built());
    CHECK(model.param_count() == expected_param_count(cfg));
    CHECK(model.param_count() < 300000);
    CHECK(model.param_count() == 62443);
}

TEST_CASE("full-scale parameter count lands near the documented target") {
    VsNetConfig cfg;  // defaults: 256 input, widths [64,128,256,512]
    std::size_t expected = expected_param_count(cfg);
    CHECK(expected == 3621887);
    CHECK(expected >= 3000000);
    CHECK(expected <= 4000000);

    VsNet model(cfg);
    CHECK(model.param_count() == expected);
}

TEST_CASE("build determinism") {
    VsNetConfig cfg = desk_config();
    VsNet a(cfg), b(cfg);
    auto na = a.named_parameters(), nb = b.named_parameters();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].first == nb[i].first);
        CHECK(to_vec(na[i].second) == to_vec(nb[i].second));
    }

    VsNetConfig other = cfg;
    other.seed = 8;
    VsNet c(other);
    CHECK(to_vec(c.parameters()[0]) != to_vec(a.parameters()[0]));
}

TEST_CASE("parameter names are unique") {
    VsNet model(desk_config());
    std::set<std::string> names;
    for (auto& [name, t] : model.named_parameters()) names.insert(name);
    CHECK(names.size() == model.named_parameters().size());
}

TEST_CASE("empty model") {
    VsNet model;
    CHECK(!model.built());
    CHECK(model.param_count() == 0);
    CHECK(model.parameters().empty());
}

TEST_CASE("config validation") {
    VsNetConfig cfg = desk_config();

    VsNetConfig bad = cfg;
    bad.input_size = 60;  // not divisible by 2^4
    CHECK_THROWS_AS(VsNet{bad}, std::invalid_argument);

    bad = cfg;
    bad.stage_widths = {8, 0, 32};
    CHECK_THROWS_AS(VsNet{bad}, std::invalid_argument);

    bad = cfg;
    bad.stage_widths.clear();
    CHECK_THROWS_AS(VsNet{bad}, std::invalid_argument);

    bad = cfg;
    bad.dropout_p = 1.0;
    CHECK_THROWS_AS(VsNet{bad}, std::invalid_argument);

    bad = cfg;
    bad.dilation_rate = 2;
    CHECK_THROWS_AS(VsNet{bad}, std::invalid_argument);

    bad = cfg;
    bad.arp_window = 0;
    CHECK_THROWS_AS(VsNet{bad}, std::invalid_argument);

    bad = cfg;
    bad.kl_weight = -0.1;
    CHECK_THROWS_AS(VsNet{bad}, std::invalid_argument);
}

TEST_CASE("encode shapes on the desk config") {
    VsNet model(desk_config());
    Tensor frame = randn({2, 3, 64, 64}, 100);
    auto enc = model.encode(frame, false, 0);

    REQUIRE(enc.skips.size() == 4);
    CHECK(enc.skips[0].shape() == Shape{2, 8, 64, 64});
    CHECK(enc.skips[1].shape() == Shape{2, 16, 32, 32});
    CHECK(enc.skips[2].shape() == Shape{2, 32, 16, 16});
    CHECK(enc.skips[3].shape() == Shape{2, 64, 8, 8});
    CHECK(enc.mu.shape() == Shape{2, 64, 4, 4});
    CHECK(enc.logvar.shape() == Shape{2, 64, 4, 4});

    CHECK_THROWS_AS(model.encode(randn({1, 3, 32, 32}, 1), false, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(model.encode(randn({1, 1, 64, 64}, 1), false, 0),
                    std::invalid_argument);
}

TEST_CASE("zero input gives a zero mean map") {
    VsNet model(desk_config());
    auto enc = model.encode(zeros({1, 3, 64, 64}), false, 0);
    for (double v : enc.mu.data()) CHECK(v == 0.0);
}

TEST_CASE("encode determinism") {
    VsNet model(desk_config());
    Tensor frame = randn({1, 3, 64, 64}, 101);

    auto a = model.encode(frame, false, 1);
    auto b = model.encode(frame, false, 2);  // inference ignores the seed
    CHECK(to_vec(a.mu) == to_vec(b.mu));

    auto c = model.encode(frame, true, 5);
    auto d = model.encode(frame, true, 5);
    CHECK(to_vec(c.mu) == to_vec(d.mu));
    auto e = model.encode(frame, true, 6);
    CHECK(to_vec(c.mu) != to_vec(e.mu));  // dropout mask moved
}

TEST_CASE("reparameterize") {
    Tensor mu = randn({2, 4, 3, 3}, 110);
    Tensor lv = randn({2, 4, 3, 3}, 111, 0.3);

    Tensor inference = VsNet::reparameterize(mu, lv, false, 0);
    CHECK(to_vec(inference) == to_vec(mu));

    Tensor tiny = VsNet::reparameterize(mu, full(mu.shape(), -40.0), true, 3);
    CHECK(max_abs_diff(tiny, mu) < 1e-8);

    Tensor zmu = zeros({100000});
    Tensor z = VsNet::reparameterize(zmu, zeros({100000}), true, 4);
    double var = 0.0;
    for (double v : z.data()) var += v * v;
    var /= 100000.0;
    CHECK(var >= 0.98);
    CHECK(var <= 1.02);

    CHECK_THROWS_AS(VsNet::reparameterize(zeros({2}), zeros({3}), true, 0),
                    std::invalid_argument);
}

TEST_CASE("decode output range and shape") {
    VsNet model(desk_config());
    Tensor frame = randn({1, 3, 64, 64}, 120);
    auto enc = model.encode(frame, false, 0);
    Tensor s = model.decode(enc.mu, enc.skips);
    CHECK(s.shape() == Shape{1, 1, 64, 64});
    for (double v : s.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    auto short_skips = enc.skips;
    short_skips.pop_back();
    CHECK_THROWS_AS(model.decode(enc.mu, short_skips), std::invalid_argument);
    CHECK_THROWS_AS(model.decode(randn({1, 3, 4, 4}, 1), enc.skips),
                    std::invalid_argument);
}

TEST_CASE("window of one frame reduces to the single-frame path") {
    VsNetConfig cfg = desk_config();
    cfg.arp_window = 1;
    VsNet model(cfg);
    Tensor frame = randn({1, 3, 64, 64}, 130);
    auto win = model.forward_window({frame}, false, 0);
    auto single = model.forward_frame(frame, false, 0);
    CHECK(max_abs_diff(win.saliency, single.saliency) < 1e-9);
}

TEST_CASE("static windows are ARP-neutral") {
    for (ArpPlacement placement :
         {ArpPlacement::bottleneck, ArpPlacement::input_frames}) {
        VsNetConfig cfg = desk_config();
        cfg.arp_placement = placement;
        VsNet model(cfg);
        Tensor frame = randn({1, 3, 64, 64}, 131);
        std::vector<Tensor> window(cfg.arp_window, frame);
        auto win = model.forward_window(window, false, 0);
        auto single = model.forward_frame(frame, false, 0);
        CHECK(max_abs_diff(win.saliency, single.saliency) < 1e-6);
        CHECK(win.saliency.shape() == Shape{1, 1, 64, 64});
    }
}

TEST_CASE("temporal order matters on a moving window") {
    VsNetConfig cfg = desk_config();
    cfg.arp_window = 5;
    VsNet model(cfg);

    // brightness ramp makes a monotone sequence
    std::vector<Tensor> window;
    Tensor base = randn({1, 3, 64, 64}, 132);
    for (int t = 0; t < 5; ++t) window.push_back(add_scalar(base, 0.2 * t));

    auto fwd = model.forward_window(window, false, 0);
    std::vector<Tensor> permuted = {window[4], window[1], window[2], window[3],
                                    window[0]};
    auto perm = model.forward_window(permuted, false, 0);
    CHECK(max_abs_diff(fwd.saliency, perm.saliency) > 1e-6);

    CHECK_THROWS_AS(model.forward_window({base, base}, false, 0),
                    std::invalid_argument);
}

TEST_CASE("training forward is deterministic per seed") {
    VsNet model(micro_config());
    std::vector<Tensor> window;
    for (int t = 0; t < 3; ++t) window.push_back(randn({1, 3, 16, 16}, 140 + t));

    auto a = model.forward_window(window, true, 77);
    auto b = model.forward_window(window, true, 77);
    CHECK(to_vec(a.saliency) == to_vec(b.saliency));
    auto c = model.forward_window(window, true, 78);
    CHECK(to_vec(a.saliency) != to_vec(c.saliency));
}

TEST_CASE("gradient flows to every parameter through the total loss") {
    VsNetConfig cfg = micro_config();
    cfg.kl_weight = 0.1;
    VsNet model(cfg);

    std::vector<Tensor> window;
    for (int t = 0; t < 3; ++t) window.push_back(randn({1, 3, 16, 16}, 150 + t, 0.5));
    // checkerboard binary target
    std::vector<double> g(256);
    for (int i = 0; i < 256; ++i) g[i] = ((i / 16 + i % 16) % 2 == 0) ? 1.0 : 0.0;
    Tensor G = from_data({1, 1, 16, 16}, g);

    LossWeights w;
    w.alpha = 1.0;
    w.beta = cfg.kl_weight;

    auto run_loss = [&]() {
        auto out = model.forward_window(window, true, 1234);
        return total_loss(out.saliency, G, w, out.mu, out.logvar);
    };

    Tensor loss = run_loss();
    backward(loss);

    for (auto& [name, p] : model.named_parameters()) {
        INFO(name);
        REQUIRE(p.has_grad());
        double l1 = 0.0;
        for (double v : p.grad()) l1 += std::abs(v);
        CHECK(l1 > 0.0);
    }
}

TEST_CASE("full-model finite-difference check on the micro config") {
    VsNetConfig cfg = micro_config();
    cfg.kl_weight = 0.1;
    VsNet model(cfg);

    std::vector<Tensor> window;
    for (int t = 0; t < 3; ++t) window.push_back(randn({1, 3, 16, 16}, 160 + t, 0.5));
    std::vector<double> g(256);
    for (int i = 0; i < 256; ++i) g[i] = ((i / 16) < 8 && (i % 16) < 8) ? 1.0 : 0.0;
    Tensor G = from_data({1, 1, 16, 16}, g);

    LossWeights w;
    w.alpha = 1.0;
    w.beta = cfg.kl_weight;

    auto loss_value = [&]() {
        auto out = model.forward_window(window, true, 4321);
        return total_loss(out.saliency, G, w, out.mu, out.logvar).item();
    };

    // Two warmup steps move the zero-initialized biases off exact relu
    // kinks; at init a dead input window leaves a pre-activation at exactly
    // 0.0, where central differences straddle the kink and disagree with
    // the relu'(0) = 0 convention. The check targets a generic point.
    {
        Adam opt(model.parameters(), AdamConfig{});
        for (int it = 0; it < 2; ++it) {
            auto out = model.forward_window(window, true, 4321);
            backward(total_loss(out.saliency, G, w, out.mu, out.logvar));
            opt.step();
        }
    }

    // analytic gradients
    {
        auto out = model.forward_window(window, true, 4321);
        backward(total_loss(out.saliency, G, w, out.mu, out.logvar));
    }

    const double h = 1e-6;
    double worst = 0.0;
    for (auto& [name, p] : model.named_parameters()) {
        REQUIRE(p.has_grad());
        std::vector<double> analytic(p.grad().begin(), p.grad().end());
        auto data = p.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            double keep = data[i];
            data[i] = keep + h;
            double up = loss_value();
            data[i] = keep - h;
            double down = loss_value();
            data[i] = keep;
            double numeric = (up - down) / (2.0 * h);
            double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
        p.zero_grad();
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("checkpoint round-trip") {
    VsNetConfig cfg = micro_config();
    VsNet model(cfg);
    auto path_a = temp_file("vsn_test_a.vsnt");
    auto path_b = temp_file("vsn_test_b.vsnt");

    save_checkpoint(model, path_a.string());

    VsNetConfig cfg2 = cfg;
    cfg2.seed = 99;  // different init, same architecture
    VsNet loaded(cfg2);
    load_checkpoint(loaded, path_a.string());
    save_checkpoint(loaded, path_b.string());

    CHECK(slurp(path_a) == slurp(path_b));  // byte-identical second generation

    // forward after load is bit-identical across loads
    VsNet again(cfg2);
    load_checkpoint(again, path_a.string());
    Tensor frame = randn({1, 3, 16, 16}, 170);
    std::vector<Tensor> window(3, frame);
    auto x = loaded.forward_window(window, false, 0);
    auto y = again.forward_window(window, false, 0);
    CHECK(to_vec(x.saliency) == to_vec(y.saliency));

    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
}

TEST_CASE("checkpoint error paths") {
    VsNet model(micro_config());
    CHECK_THROWS_AS(load_checkpoint(model, "/nonexistent/nowhere.vsnt"),
                    std::runtime_error);

    auto bad = temp_file("vsn_test_bad.vsnt");
    {
        std::ofstream os(bad, std::ios::binary);
        os << "JUNKJUNKJUNK";
    }
    CHECK_THROWS_AS(load_checkpoint(model, bad.string()), std::runtime_error);

    // truncated file
    auto trunc = temp_file("vsn_test_trunc.vsnt");
    save_checkpoint(model, trunc.string());
    auto bytes = slurp(trunc);
    {
        std::ofstream os(trunc, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(model, trunc.string()), std::runtime_error);

    // architecture mismatch
    auto mismatch = temp_file("vsn_test_mismatch.vsnt");
    save_checkpoint(model, mismatch.string());
    VsNetConfig other = micro_config();
    other.stage_widths = {2, 3, 4, 6};
    VsNet different(other);
    CHECK_THROWS_AS(load_checkpoint(different, mismatch.string()), std::runtime_error);

    VsNet unbuilt;
    CHECK_THROWS_AS(save_checkpoint(unbuilt, temp_file("x.vsnt").string()),
                    std::logic_error);

    std::filesystem::remove(bad);
    std::filesystem::remove(trunc);
    std::filesystem::remove(mismatch);
}

TEST_CASE("input_frames placement runs end to end") {
    VsNetConfig cfg = micro_config();
    cfg.arp_placement = ArpPlacement::input_frames;
    VsNet model(cfg);
    std::vector<Tensor> window;
    for (int t = 0; t < 3; ++t) window.push_back(randn({2, 3, 16, 16}, 180 + t));
    auto out = model.forward_window(window, true, 9);
    CHECK(out.saliency.shape() == Shape{2, 1, 16, 16});
    for (double v : out.saliency.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK(expected_param_count(cfg) == model.param_count());
}
