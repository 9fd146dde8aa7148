#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include "vsnet/corpus.hpp"

namespace vsnet {

namespace {

double orient(const Point& a, const Point& b, const Point& c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool proper_cross(const Point& a, const Point& b, const Point& c, const Point& d) {
    double d1 = orient(a, b, c), d2 = orient(a, b, d);
    double d3 = orient(c, d, a), d4 = orient(c, d, b);
    return d1 * d2 < 0.0 && d3 * d4 < 0.0;
}

bool inside_even_odd(const Quad& q, double px, double py) {
    bool in = false;
    for (int i = 0; i < 4; ++i) {
        const Point& a = q[i];
        const Point& b = q[(i + 1) % 4];
        if ((a.y > py) != (b.y > py)) {
            double xint = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
            if (px < xint) in = !in;
        }
    }
    return in;
}

Quad make_rect_quad(double cx, double cy, double a, double b, double theta) {
    double ct = std::cos(theta), st = std::sin(theta);
    auto corner = [&](double u, double v) {
        return Point{cx + u * ct - v * st, cy + u * st + v * ct};
    };
    // clockwise in image coordinates (y grows downward)
    return {corner(-a, -b), corner(a, -b), corner(a, b), corner(-a, b)};
}

}  // namespace

std::size_t Mask::area() const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += v;
    return n;
}

Mask rasterize_quad(const Quad& quad, int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("rasterize_quad: empty frame");
    if (proper_cross(quad[0], quad[1], quad[2], quad[3]) ||
        proper_cross(quad[1], quad[2], quad[3], quad[0]))
        throw std::invalid_argument("rasterize_quad: self-intersecting quad");

    Mask mask;
    mask.h = h;
    mask.w = w;
    mask.data.assign(static_cast<std::size_t>(h) * w, 0);

    double lo_x = quad[0].x, hi_x = quad[0].x, lo_y = quad[0].y, hi_y = quad[0].y;
    for (const Point& p : quad) {
        lo_x = std::min(lo_x, p.x);
        hi_x = std::max(hi_x, p.x);
        lo_y = std::min(lo_y, p.y);
        hi_y = std::max(hi_y, p.y);
    }
    int x0 = std::max(0, static_cast<int>(std::floor(lo_x - 1.0)));
    int x1 = std::min(w - 1, static_cast<int>(std::ceil(hi_x + 1.0)));
    int y0 = std::max(0, static_cast<int>(std::floor(lo_y - 1.0)));
    int y1 = std::min(h - 1, static_cast<int>(std::ceil(hi_y + 1.0)));

    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (inside_even_odd(quad, x + 0.5, y + 0.5))
                mask.data[static_cast<std::size_t>(y) * w + x] = 1;
    return mask;
}

Tensor mask_to_tensor(const Mask& mask) {
    std::vector<double> v(mask.data.begin(), mask.data.end());
    return from_data({1, 1, mask.h, mask.w}, std::move(v));
}

Image mask_to_image(const Mask& mask) {
    Image img = make_image(mask.h, mask.w, 1);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        img.data[i] = mask.data[i] ? 1.0 : 0.0;
    return img;
}

Mask image_to_mask(const Image& img) {
    if (img.channels != 1) throw std::invalid_argument("image_to_mask: want 1 channel");
    Mask mask;
    mask.h = img.h;
    mask.w = img.w;
    mask.data.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i)
        mask.data[i] = img.data[i] > 0.5 ? 1 : 0;
    return mask;
}

std::string attribute_name(SceneAttribute a) {
    switch (a) {
        case SceneAttribute::TS: return "TS";
        case SceneAttribute::KS: return "KS";
        case SceneAttribute::HS: return "HS";
        case SceneAttribute::PS: return "PS";
        case SceneAttribute::CS: return "CS";
    }
    throw std::logic_error("attribute_name: bad enum");
}

SceneAttribute attribute_from_id(const std::string& video_id) {
    if (video_id.size() >= 2) {
        char a = static_cast<char>(std::toupper(video_id[0]));
        char b = static_cast<char>(std::toupper(video_id[1]));
        if (b == 'S' || b == 'A') {  // action variants fold into scenes
            switch (a) {
                case 'T': return SceneAttribute::TS;
                case 'K': return SceneAttribute::KS;
                case 'H': return SceneAttribute::HS;
                case 'P': return SceneAttribute::PS;
                case 'C': return SceneAttribute::CS;
                default: break;
            }
        }
    }
    return SceneAttribute::TS;
}

VideoSample synth_video(const SynthSpec& spec) {
    if (spec.height < 8 || spec.width < 8)
        throw std::invalid_argument("synth_video: frame too small");
    if (spec.frame_count < 1)
        throw std::invalid_argument("synth_video: frame_count must be >= 1");
    if (spec.noise_sigma < 0.0)
        throw std::invalid_argument("synth_video: negative noise sigma");
    if (spec.blur_len < 0 || spec.clutter < 0)
        throw std::invalid_argument("synth_video: negative challenge parameter");
    const double half_w = spec.doc_scale * std::min(spec.height, spec.width) / 2.0;
    const double half_h = 0.62 * half_w;  // ID-card-like aspect
    if (half_w < 1.0 || half_h < 0.5)
        throw std::invalid_argument("synth_video: degenerate zero-area document");

    const int h = spec.height, w = spec.width;
    const double pi = std::numbers::pi;

    // per-video constants; drawn once so a static spec yields identical frames
    RandomStream rng(mix_seed(spec.seed, 0x7363));
    double theta0 = (2.0 * rng.next_uniform() - 1.0) * pi / 18.0;  // +-10 deg
    double bg_fx = 0.05 + 0.15 * rng.next_uniform();
    double bg_fy = 0.05 + 0.15 * rng.next_uniform();
    double bg_phase = 2.0 * pi * rng.next_uniform();
    double stripe_period = std::max(2.0, half_h / 2.5);
    double stripe_phase = stripe_period * rng.next_uniform();

    double cx = w / 2.0 + spec.center_offset_x, cy = h / 2.0 + spec.center_offset_y;
    double speed = std::hypot(spec.velocity_x, spec.velocity_y);
    double dirx = speed > 0.0 ? spec.velocity_x / speed : 1.0;
    double diry = speed > 0.0 ? spec.velocity_y / speed : 0.0;
    if (spec.partial) {
        // start with the leading edge near the border the motion exits through
        double margin = 0.5 * std::min(h, w) - half_w;
        cx += dirx * margin * 0.8;
        cy += diry * margin * 0.8;
    }

    // background with static distractor quads baked in
    std::vector<double> background(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            background[static_cast<std::size_t>(y) * w + x] =
                0.15 + 0.08 * (((x / 8) + (y / 8)) % 2) +
                0.07 * std::sin(2.0 * pi * (bg_fx * x + bg_fy * y) + bg_phase);
    for (int i = 0; i < spec.clutter; ++i) {
        double qx = w * rng.next_uniform(), qy = h * rng.next_uniform();
        double qa = (0.06 + 0.08 * rng.next_uniform()) * std::min(h, w);
        double qb = (0.06 + 0.08 * rng.next_uniform()) * std::min(h, w);
        double qt = pi * rng.next_uniform();
        double val = 0.38 + 0.10 * rng.next_uniform();
        Mask m = rasterize_quad(make_rect_quad(qx, qy, qa, qb, qt), h, w);
        for (std::size_t j = 0; j < m.data.size(); ++j)
            if (m.data[j]) background[j] = val;
    }

    const double tint[3] = {1.0, 0.96, 0.90};
    VideoSample video;
    video.id = attribute_name(spec.attribute) + "-" + std::to_string(spec.seed);
    video.attribute = spec.attribute;

    for (int t = 0; t < spec.frame_count; ++t) {
        double ct_x = cx + spec.velocity_x * t;
        double ct_y = cy + spec.velocity_y * t;
        double theta = theta0 + spec.rotation_rate * t * pi / 180.0;
        Quad quad = make_rect_quad(ct_x, ct_y, half_w, half_h, theta);
        Mask mask = rasterize_quad(quad, h, w);

        // gray composition: document pixels defined by the exact mask
        std::vector<double> gray = background;
        double cth = std::cos(theta), sth = std::sin(theta);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                std::size_t j = static_cast<std::size_t>(y) * w + x;
                if (!mask.data[j]) continue;
                double dx = (x + 0.5) - ct_x, dy = (y + 0.5) - ct_y;
                double u = dx * cth + dy * sth;    // doc-local coords
                double v = -dx * sth + dy * cth;
                int band = static_cast<int>(
                    std::floor((v + half_h + stripe_phase) / stripe_period));
                bool stripe = (((band % 2) + 2) % 2 == 1) && std::abs(u) < 0.75 * half_w;
                gray[j] = stripe ? 0.58 : 0.88;
            }
        }

        Image frame = make_image(h, w, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    frame.at(y, x, c) = gray[static_cast<std::size_t>(y) * w + x] * tint[c];

        // challenges in order: illumination, blur, noise
        if (spec.illumination != 0.0) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double ramp = spec.illumination *
                                  (x / double(w - 1) + y / double(h - 1) - 1.0);
                    for (int c = 0; c < 3; ++c) frame.at(y, x, c) += ramp;
                }
        }
        if (spec.blur_len >= 2) {
            double bx = dirx, by = diry;
            Image blurred = make_image(h, w, 3);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c) {
                        double acc = 0.0;
                        int cnt = 0;
                        for (int k = 0; k < spec.blur_len; ++k) {
                            double off = k - (spec.blur_len - 1) / 2.0;
                            int sx = static_cast<int>(std::floor(x + 0.5 + bx * off));
                            int sy = static_cast<int>(std::floor(y + 0.5 + by * off));
                            if (sx < 0 || sx >= w || sy < 0 || sy >= h) continue;
                            acc += frame.at(sy, sx, c);
                            ++cnt;
                        }
                        blurred.at(y, x, c) = cnt ? acc / cnt : 0.0;
                    }
            frame = std::move(blurred);
        }
        if (spec.noise_sigma > 0.0) {
            RandomStream noise(mix_seed(spec.seed, 400 + static_cast<std::uint64_t>(t)));
            for (double& v : frame.data) v += spec.noise_sigma * noise.next_gaussian();
        }
        for (double& v : frame.data) v = std::clamp(v, 0.0, 1.0);

        video.frames.push_back(std::move(frame));
        video.quads.push_back(quad);
        video.masks.push_back(std::move(mask));
    }
    return video;
}

std::pair<Image, Mask> rigid_transform(const Image& frame, const Mask& mask,
                                       double shift_x, double shift_y,
                                       double rotation_deg) {
    if (frame.h != mask.h || frame.w != mask.w)
        throw std::invalid_argument("rigid_transform: frame/mask size mismatch");
    double theta = rotation_deg * std::numbers::pi / 180.0;
    double ct = std::cos(theta), st = std::sin(theta);
    double cx = frame.w / 2.0, cy = frame.h / 2.0;

    Image out_frame = make_image(frame.h, frame.w, frame.channels, 0.0);
    Mask out_mask = mask;
    out_mask.data.assign(mask.data.size(), 0);
    for (int y = 0; y < frame.h; ++y) {
        for (int x = 0; x < frame.w; ++x) {
            // inverse rigid map, nearest neighbor
            double px = x + 0.5 - shift_x - cx, py = y + 0.5 - shift_y - cy;
            double qx = px * ct + py * st + cx;
            double qy = -px * st + py * ct + cy;
            int ix = static_cast<int>(std::floor(qx));
            int iy = static_cast<int>(std::floor(qy));
            if (ix < 0 || ix >= frame.w || iy < 0 || iy >= frame.h) continue;
            for (int c = 0; c < frame.channels; ++c)
                out_frame.at(y, x, c) = frame.at(iy, ix, c);
            out_mask.data[static_cast<std::size_t>(y) * frame.w + x] =
                mask.data[static_cast<std::size_t>(iy) * frame.w + ix];
        }
    }
    return {std::move(out_frame), std::move(out_mask)};
}

std::pair<Image, Mask> augment(const Image& frame, const Mask& mask,
                               const AugmentParams& params, std::uint64_t seed) {
    if (params.max_shift < 0.0 || params.max_rotation_deg < 0.0 ||
        params.noise_sigma < 0.0)
        throw std::invalid_argument("augment: negative parameter");
    if (frame.h != mask.h || frame.w != mask.w)
        throw std::invalid_argument("augment: frame/mask size mismatch");
    if (params.max_shift == 0.0 && params.max_rotation_deg == 0.0 &&
        params.noise_sigma == 0.0)
        return {frame, mask};

    RandomStream rng(mix_seed(seed, 0x6175));
    Image out_frame = frame;
    Mask out_mask = mask;

    if (params.max_shift > 0.0 || params.max_rotation_deg > 0.0) {
        double sx = (2.0 * rng.next_uniform() - 1.0) * params.max_shift;
        double sy = (2.0 * rng.next_uniform() - 1.0) * params.max_shift;
        double theta = (2.0 * rng.next_uniform() - 1.0) * params.max_rotation_deg;
        std::tie(out_frame, out_mask) = rigid_transform(frame, mask, sx, sy, theta);
    }

    if (params.noise_sigma > 0.0) {
        for (double& v : out_frame.data) {
            v += params.noise_sigma * rng.next_gaussian();
            v = std::clamp(v, 0.0, 1.0);
        }
    }
    return {std::move(out_frame), std::move(out_mask)};
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    RandomStream rng(mix_seed(seed, 0x7370));
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.next_below(i)]);
    return idx;
}

}  // namespace

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double test_fraction,
                                          std::uint64_t seed) {
    std::size_t n = dataset.size();
    if (n < 2) throw std::invalid_argument("split_dataset: need at least two videos");
    if (test_fraction < 0.0 || test_fraction > 1.0)
        throw std::invalid_argument("split_dataset: bad test fraction");
    auto idx = shuffled_indices(n, seed);
    std::size_t n_test = static_cast<std::size_t>(std::lround(n * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + n_test);
    std::vector<std::size_t> train_idx(idx.begin() + n_test, idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());

    Dataset train, test;
    for (std::size_t i : train_idx) train.push_back(dataset[i]);
    for (std::size_t i : test_idx) test.push_back(dataset[i]);
    return {std::move(train), std::move(test)};
}

std::vector<std::vector<std::size_t>> kfold(std::size_t video_count, int k,
                                            std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("kfold: k must be positive");
    if (static_cast<std::size_t>(k) > video_count)
        throw std::invalid_argument("kfold: more folds than videos");
    auto idx = shuffled_indices(video_count, seed);
    std::vector<std::vector<std::size_t>> folds(k);
    for (int i = 0; i < k; ++i) {
        std::size_t lo = video_count * i / k;
        std::size_t hi = video_count * (i + 1) / k;
        folds[i].assign(idx.begin() + lo, idx.begin() + hi);
        std::sort(folds[i].begin(), folds[i].end());
    }
    return folds;
}

}  // namespace vsnet
