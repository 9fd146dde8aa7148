#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vsnet/image_io.hpp"
#include "vsnet/tensor.hpp"

namespace vsnet {

struct Point {
    double x = 0;
    double y = 0;
};

// Four vertices in consistent winding order; pixel coordinates.
using Quad = std::array<Point, 4>;

// Binary mask, row-major, values 0/1.
struct Mask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int y, int x) const {
        return data[static_cast<std::size_t>(y) * w + x];
    }
    std::size_t area() const;
};

// Pixel (y,x) is set iff the pixel center (x+0.5, y+0.5) is inside the
// polygon under the even-odd rule. Throws on self-intersecting quads.
Mask rasterize_quad(const Quad& quad, int h, int w);

Tensor mask_to_tensor(const Mask& mask);  // {1,1,H,W} of 0.0/1.0
Image mask_to_image(const Mask& mask);    // 0 or 1 exactly; writes as 0/255
Mask image_to_mask(const Image& img);     // > 0.5 is foreground

// Scene attributes; action variants (TA, KA, ...) fold into these.
enum class SceneAttribute { TS, KS, HS, PS, CS };
std::string attribute_name(SceneAttribute a);
SceneAttribute attribute_from_id(const std::string& video_id);

struct VideoSample {
    std::string id;
    SceneAttribute attribute = SceneAttribute::TS;
    std::vector<Image> frames;  // H x W x 3 in [0,1]
    std::vector<Quad> quads;    // per frame, may extend past the border
    std::vector<Mask> masks;    // rasterized from quads
};

using Dataset = std::vector<VideoSample>;

struct SynthSpec {
    int height = 64;
    int width = 64;
    int frame_count = 30;       // three seconds at ten frames per second
    double doc_scale = 0.55;    // document diagonal relative to min(h, w)
    double center_offset_x = 0.0;  // px from the frame center at t = 0
    double center_offset_y = 0.0;
    double velocity_x = 0.0;    // px per frame
    double velocity_y = 0.0;
    double rotation_rate = 0.0;  // degrees per frame
    // challenges, applied in order: illumination, blur, noise
    double illumination = 0.0;  // additive corner-to-corner ramp amplitude
    int blur_len = 0;           // motion-blur taps along the velocity
    double noise_sigma = 0.0;
    bool partial = false;       // start near the exit edge so the document leaves
    int clutter = 0;            // distractor quads baked into the background
    SceneAttribute attribute = SceneAttribute::TS;
    std::uint64_t seed = 1;
};

// Bright striped "document" quad over a darker procedural background.
// Deterministic per seed; masks come from rasterize_quad on the exact
// per-frame quad, so frame geometry and mask agree by construction.
VideoSample synth_video(const SynthSpec& spec);

// <root>/<id>/frames/NNN.png plus <root>/<id>/gt/NNN.json with field
// "quad": [[x,y] x 4]. Unknown JSON keys are ignored on load.
void save_midv_dir(const Dataset& dataset, const std::string& root);
Dataset load_midv_dir(const std::string& root);

struct AugmentParams {
    double max_shift = 0.0;         // px, uniform in [-max, max]
    double max_rotation_deg = 0.0;  // uniform in [-max, max]
    double noise_sigma = 0.0;       // Gaussian, frame only
};

// Shift then rotate about the image center, nearest-neighbor resampling,
// zero fill; the same map is applied to frame and mask.
std::pair<Image, Mask> rigid_transform(const Image& frame, const Mask& mask,
                                       double shift_x, double shift_y,
                                       double rotation_deg);

// One rigid transform (parameters drawn uniformly within the bounds)
// applied to both frame and mask; Gaussian gray-value noise added to the
// frame afterwards and clamped. Zero params return the inputs untouched.
std::pair<Image, Mask> augment(const Image& frame, const Mask& mask,
                               const AugmentParams& params, std::uint64_t seed);

// Video-level split; round(n * test_fraction) test videos, clamped to
// [1, n-1]. Deterministic per seed.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          double test_fraction, std::uint64_t seed);

// k index folds over n videos, sizes within one of each other, disjoint
// and exhaustive. Throws when k exceeds n.
std::vector<std::vector<std::size_t>> kfold(std::size_t video_count, int k,
                                            std::uint64_t seed);

}  // namespace vsnet
