#include "vsnet/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vsnet {

int VsNetConfig::decoder_width(int stage) const {
    if (stage < 0 || stage >= stages())
        throw std::invalid_argument("decoder_width: stage out of range");
    long w = std::lround(decoder_width_multiplier * stage_widths[stage]);
    return static_cast<int>(std::max(1L, w));
}

void validate_config(const VsNetConfig& config) {
    if (config.stage_widths.empty())
        throw std::invalid_argument("config: at least one stage required");
    for (int w : config.stage_widths)
        if (w < 1) throw std::invalid_argument("config: stage widths must be positive");
    if (config.input_channels < 1)
        throw std::invalid_argument("config: input channels must be >= 1");
    int divisor = 1 << config.stages();
    if (config.input_size < divisor || config.input_size % divisor != 0)
        throw std::invalid_argument("config: input size " +
                                    std::to_string(config.input_size) +
                                    " must be a positive multiple of 2^stages = " +
                                    std::to_string(divisor));
    if (!(config.dropout_p >= 0.0) || config.dropout_p >= 1.0)
        throw std::invalid_argument("config: dropout_p must be in [0, 1)");
    if (config.kl_weight < 0.0)
        throw std::invalid_argument("config: kl_weight must be >= 0");
    if (config.arp_window < 1)
        throw std::invalid_argument("config: arp_window must be >= 1");
    if (config.decoder_width_multiplier <= 0.0)
        throw std::invalid_argument("config: decoder width multiplier must be > 0");
    if (config.dilation_rate != 1)
        throw std::invalid_argument(
            "config: only dilation_rate 1 is supported; other rates are intentionally "
            "not implemented");
}

std::size_t expected_param_count(const VsNetConfig& config) {
    validate_config(config);
    int S = config.stages();
    int L = config.latent_channels();

    std::size_t total = 0;
    int cin = config.input_channels;
    for (int i = 0; i < S; ++i) {
        total += separable_param_count(cin, config.stage_widths[i]);
        cin = config.stage_widths[i];
    }
    total += pointwise_param_count(config.stage_widths[S - 1], L);  // reduce
    total += 2 * pointwise_param_count(L, L);                       // mu, logvar
    total += pointwise_param_count(2 * L, L);                       // fusion
    int in_ch = L;
    for (int j = S - 1; j >= 0; --j) {
        int d = config.decoder_width(j);
        total += separable_param_count(in_ch, d);
        total += separable_param_count(d + config.stage_widths[j], d);
        in_ch = d;
    }
    total += pointwise_param_count(config.decoder_width(0), 1);  // head
    return total;
}

VsNet::VsNet(const VsNetConfig& config) : config_(config) {
    validate_config(config_);
    int S = config_.stages();
    int L = config_.latent_channels();

    std::uint64_t salt = 0;
    auto next_seed = [&] { return mix_seed(config_.seed, salt++); };

    int cin = config_.input_channels;
    for (int i = 0; i < S; ++i) {
        encoder_.push_back(make_separable_conv(cin, config_.stage_widths[i], next_seed()));
        cin = config_.stage_widths[i];
    }
    reduce_ = make_pointwise_conv(config_.stage_widths[S - 1], L, next_seed());
    mu_head_ = make_pointwise_conv(L, L, next_seed());
    logvar_head_ = make_pointwise_conv(L, L, next_seed());
    fusion_ = make_pointwise_conv(2 * L, L, next_seed());

    decoder_.resize(S);
    int in_ch = L;
    for (int j = S - 1; j >= 0; --j) {
        int d = config_.decoder_width(j);
        decoder_[j].pre = make_separable_conv(in_ch, d, next_seed());
        decoder_[j].post =
            make_separable_conv(d + config_.stage_widths[j], d, next_seed());
        in_ch = d;
    }
    head_ = make_pointwise_conv(config_.decoder_width(0), 1, next_seed());
}

VsNet::Encoded VsNet::encode(const Tensor& frame, bool training,
                             std::uint64_t seed) const {
    if (!built()) throw std::logic_error("encode: model not built");
    const Shape& fs = frame.shape();
    if (fs.size() != 4 || fs[1] != config_.input_channels ||
        fs[2] != config_.input_size || fs[3] != config_.input_size)
        throw std::invalid_argument("encode: expected N," +
                                    std::to_string(config_.input_channels) + "," +
                                    std::to_string(config_.input_size) + "," +
                                    std::to_string(config_.input_size) + " frame, got " +
                                    shape_str(fs));

    Encoded out;
    Tensor x = frame;
    for (const SeparableConv& stage : encoder_) {
        Tensor a = relu(separable_conv(x, stage));
        out.skips.push_back(a);
        x = maxpool2(a);
    }
    Tensor b = relu(pointwise_conv(x, reduce_));
    b = dropout(b, config_.dropout_p, training, mix_seed(seed, 0x6472u));
    out.mu = pointwise_conv(b, mu_head_);
    out.logvar = pointwise_conv(b, logvar_head_);
    return out;
}

Tensor VsNet::reparameterize(const Tensor& mu, const Tensor& logvar, bool training,
                             std::uint64_t seed) {
    if (!same_shape(mu.shape(), logvar.shape()))
        throw std::invalid_argument("reparameterize: mu/logvar shape mismatch");
    if (!training) return mu;
    Tensor eps = randn(mu.shape(), seed);
    return add(mu, mul(exp(scalar_mul(logvar, 0.5)), eps));
}

Tensor VsNet::decode(const Tensor& z, const std::vector<Tensor>& skips) const {
    if (!built()) throw std::logic_error("decode: model not built");
    int S = config_.stages();
    if (static_cast<int>(skips.size()) != S)
        throw std::invalid_argument("decode: expected " + std::to_string(S) +
                                    " skip maps, got " + std::to_string(skips.size()));
    if (z.shape().size() != 4 || z.shape()[1] != config_.latent_channels())
        throw std::invalid_argument("decode: latent must have " +
                                    std::to_string(config_.latent_channels()) +
                                    " channels, got " + shape_str(z.shape()));

    Tensor x = z;
    for (int j = S - 1; j >= 0; --j) {
        x = relu(separable_conv(upsample2(x), decoder_[j].pre));
        const Shape& xs = x.shape();
        const Shape& ss = skips[j].shape();
        if (xs[0] != ss[0] || xs[2] != ss[2] || xs[3] != ss[3] ||
            ss[1] != config_.stage_widths[j])
            throw std::invalid_argument("decode: skip " + std::to_string(j) +
                                        " shape " + shape_str(ss) +
                                        " does not match stage output " + shape_str(xs));
        x = relu(separable_conv(concat_channels(x, skips[j]), decoder_[j].post));
    }
    return sigmoid(pointwise_conv(x, head_));
}

Tensor VsNet::fuse(const Tensor& z_center, const Tensor& dynamic) const {
    return pointwise_conv(concat_channels(z_center, dynamic), fusion_);
}

VsNet::WindowResult VsNet::forward_window(const std::vector<Tensor>& frames,
                                          bool training, std::uint64_t seed) const {
    if (!built()) throw std::logic_error("forward_window: model not built");
    int T = config_.arp_window;
    if (static_cast<int>(frames.size()) != T)
        throw std::invalid_argument("forward_window: expected " + std::to_string(T) +
                                    " frames, got " + std::to_string(frames.size()));
    int center = T / 2;
    ArpCoefficients coeffs = arp_coefficients(T, config_.arp_variant);

    WindowResult out;
    Tensor dynamic;
    Encoded center_enc;
    if (config_.arp_placement == ArpPlacement::bottleneck) {
        std::vector<Tensor> latents;
        for (int t = 0; t < T; ++t) {
            Encoded e = encode(frames[t], training, mix_seed(seed, 100 + t));
            Tensor z = config_.vae_enabled
                           ? reparameterize(e.mu, e.logvar, training,
                                            mix_seed(seed, 200 + t))
                           : e.mu;
            latents.push_back(z);
            if (t == center) center_enc = std::move(e);
        }
        dynamic = arp_pool(latents, coeffs);
        out.saliency = decode(fuse(latents[center], dynamic), center_enc.skips);
    } else {
        // dynamic image in pixel space, encoded by the shared encoder; its
        // mean map is used directly (no sampling on the dynamic branch)
        Tensor dyn_img = arp_pool(frames, coeffs);
        Encoded dyn_enc = encode(dyn_img, training, mix_seed(seed, 300));
        dynamic = dyn_enc.mu;

        center_enc = encode(frames[center], training, mix_seed(seed, 100 + center));
        Tensor z = config_.vae_enabled
                       ? reparameterize(center_enc.mu, center_enc.logvar, training,
                                        mix_seed(seed, 200 + center))
                       : center_enc.mu;
        out.saliency = decode(fuse(z, dynamic), center_enc.skips);
    }
    out.mu = center_enc.mu;
    out.logvar = center_enc.logvar;
    return out;
}

VsNet::WindowResult VsNet::forward_frame(const Tensor& frame, bool training,
                                         std::uint64_t seed) const {
    if (!built()) throw std::logic_error("forward_frame: model not built");
    Encoded e = encode(frame, training, mix_seed(seed, 100));
    Tensor z = config_.vae_enabled
                   ? reparameterize(e.mu, e.logvar, training, mix_seed(seed, 200))
                   : e.mu;

    Tensor dynamic;
    if (config_.arp_placement == ArpPlacement::bottleneck) {
        dynamic = zeros(z.shape());
    } else {
        Tensor zero_img = zeros(frame.shape());
        dynamic = encode(zero_img, training, mix_seed(seed, 300)).mu;
    }

    WindowResult out;
    out.saliency = decode(fuse(z, dynamic), e.skips);
    out.mu = e.mu;
    out.logvar = e.logvar;
    return out;
}

std::vector<std::pair<std::string, Tensor>> VsNet::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> named;
    if (!built()) return named;

    auto add_sep = [&](const std::string& prefix, const SeparableConv& c) {
        named.emplace_back(prefix + ".dw.weight", c.dw_weight);
        named.emplace_back(prefix + ".dw.bias", c.dw_bias);
        named.emplace_back(prefix + ".pw.weight", c.pw_weight);
        named.emplace_back(prefix + ".pw.bias", c.pw_bias);
    };
    auto add_pw = [&](const std::string& prefix, const PointwiseConv& c) {
        named.emplace_back(prefix + ".weight", c.weight);
        named.emplace_back(prefix + ".bias", c.bias);
    };

    for (std::size_t i = 0; i < encoder_.size(); ++i)
        add_sep("enc" + std::to_string(i), encoder_[i]);
    add_pw("bottleneck.reduce", reduce_);
    add_pw("bottleneck.mu", mu_head_);
    add_pw("bottleneck.logvar", logvar_head_);
    add_pw("fusion", fusion_);
    for (std::size_t j = 0; j < decoder_.size(); ++j) {
        add_sep("dec" + std::to_string(j) + ".pre", decoder_[j].pre);
        add_sep("dec" + std::to_string(j) + ".post", decoder_[j].post);
    }
    add_pw("head", head_);
    return named;
}

std::vector<Tensor> VsNet::parameters() const {
    std::vector<Tensor> params;
    for (auto& [name, t] : named_parameters()) params.push_back(t);
    return params;
}

std::size_t VsNet::param_count() const {
    std::size_t total = 0;
    for (const Tensor& t : parameters()) total += t.numel();
    return total;
}

}  // namespace vsnet
