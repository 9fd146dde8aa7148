#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vsnet/nn_ops.hpp"
#include "vsnet/temporal.hpp"
#include "vsnet/tensor.hpp"

namespace vsnet {

enum class ArpPlacement {
    bottleneck,    // pool per-frame latents, fuse with the center latent
    input_frames,  // encode the pooled dynamic image, fuse its mean map
};

struct VsNetConfig {
    int input_size = 256;  // H == W, divisible by 2^stages
    int input_channels = 3;
    std::vector<int> stage_widths = {64, 128, 256, 512};
    // decoder stage width = round(multiplier * encoder stage width)
    double decoder_width_multiplier = 1.5;
    double dropout_p = 0.5;
    bool vae_enabled = true;
    double kl_weight = 0.0;  // beta; 0 keeps the default objective intact
    int arp_window = 5;      // T
    ArpPlacement arp_placement = ArpPlacement::bottleneck;
    ArpVariant arp_variant = ArpVariant::harmonic;
    // Config field kept for completeness; only rate 1 is supported and other
    // values are rejected rather than guessed at.
    int dilation_rate = 1;
    std::uint64_t seed = 1;

    int stages() const { return static_cast<int>(stage_widths.size()); }
    int latent_channels() const { return stage_widths.back(); }
    int decoder_width(int stage) const;
};

void validate_config(const VsNetConfig& config);

// Closed-form parameter count from the layer inventory; build() must agree.
std::size_t expected_param_count(const VsNetConfig& config);

// Encoder/decoder with separable convolutions, a sampled latent bottleneck,
// and rank-pooled temporal fusion. All spatial tensors are N,C,H,W.
class VsNet {
  public:
    VsNet() = default;  // empty model, zero parameters
    explicit VsNet(const VsNetConfig& config);

    const VsNetConfig& config() const { return config_; }
    bool built() const { return !encoder_.empty(); }

    struct Encoded {
        std::vector<Tensor> skips;  // per stage, pre-pool resolution
        Tensor mu;
        Tensor logvar;
    };

    // Per stage: separable_conv, relu, maxpool2; bottleneck: 1x1 reduce,
    // relu, dropout, then the mu / log-variance heads.
    Encoded encode(const Tensor& frame, bool training, std::uint64_t seed) const;

    // training: z = mu + exp(0.5 logvar) * eps with seeded eps; else z = mu.
    static Tensor reparameterize(const Tensor& mu, const Tensor& logvar, bool training,
                                 std::uint64_t seed);

    // Per stage: upsample2, separable_conv, relu, skip concat, separable_conv,
    // relu; then the 1x1 head and sigmoid. Output is N,1,H,W in (0,1).
    Tensor decode(const Tensor& z, const std::vector<Tensor>& skips) const;

    struct WindowResult {
        Tensor saliency;  // for the center frame
        Tensor mu;        // center-frame latent stats (KL term)
        Tensor logvar;
    };

    // Encodes every frame, rank-pools per the placement policy, fuses the
    // dynamic map with the center latent through a 1x1 conv, then decodes
    // with the center frame's skips.
    WindowResult forward_window(const std::vector<Tensor>& frames, bool training,
                                std::uint64_t seed) const;

    // Single-frame path: identical wiring with an all-zero dynamic map, so a
    // static window and this path agree to numerical noise.
    WindowResult forward_frame(const Tensor& frame, bool training,
                               std::uint64_t seed) const;

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::size_t param_count() const;

  private:
    Tensor fuse(const Tensor& z_center, const Tensor& dynamic) const;

    VsNetConfig config_;
    std::vector<SeparableConv> encoder_;
    PointwiseConv reduce_, mu_head_, logvar_head_, fusion_;
    struct DecoderStage {
        SeparableConv pre;   // after upsample
        SeparableConv post;  // after skip concat
    };
    std::vector<DecoderStage> decoder_;  // index 0 = shallowest stage
    PointwiseConv head_;
};

// Little-endian binary checkpoint: magic "VSNT", format version u32, entry
// count u32, then per entry name length u32 + UTF-8 name + rank u32 +
// extents (u32 each) + float32 payload. Round-trips bit-exactly.
void save_checkpoint(const VsNet& model, const std::string& path);
// Loads by parameter name; every model parameter must be present with a
// matching shape and no extra entries are allowed.
void load_checkpoint(VsNet& model, const std::string& path);

}  // namespace vsnet
