#include "zocert/models.hpp"

#include <algorithm>
#include <cmath>

namespace zocert {

namespace {

void check_divisible(int image_size, int depth, const char* who) {
    int s = image_size;
    for (int i = 0; i < depth; ++i) {
        if (s % 2 != 0) {
            throw ValidationError(std::string(who) + ": image_size " + std::to_string(image_size) +
                                  " not divisible by 2^" + std::to_string(depth));
        }
        s /= 2;
    }
    if (s < 1) throw ValidationError(std::string(who) + ": depth too large for image_size");
}

}  // namespace

// ----------------------------------------------------------------- DConv

DConv::DConv(int in_ch, int out_ch)
    : c1_(in_ch, out_ch, 3, 1, 1), c2_(out_ch, out_ch, 3, 1, 1), b1_(out_ch), b2_(out_ch) {}

void DConv::init(Rng& rng) {
    c1_.init(rng);
    c2_.init(rng);
}

Tensor DConv::forward(const Tensor& x, Mode mode) {
    Tensor t = r1_.forward(b1_.forward(c1_.forward(x), mode));
    return r2_.forward(b2_.forward(c2_.forward(t), mode));
}

Tensor DConv::backward(const Tensor& grad_out) {
    Tensor g = c2_.backward(b2_.backward(r2_.backward(grad_out)));
    return c1_.backward(b1_.backward(r1_.backward(g)));
}

std::vector<ParamRef> DConv::state(const std::string& prefix) {
    std::vector<ParamRef> out;
    for (auto& p : c1_.state(prefix + ".conv1")) out.push_back(p);
    for (auto& p : b1_.state(prefix + ".bn1")) out.push_back(p);
    for (auto& p : c2_.state(prefix + ".conv2")) out.push_back(p);
    for (auto& p : b2_.state(prefix + ".bn2")) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------- RDUNet

RDUNet::RDUNet(const RDUNetConfig& cfg)
    : cfg_(cfg),
      stem_(cfg.input_channels, cfg.base_channels),
      head_(cfg.base_channels, cfg.input_channels, 1, 1, 0) {
    if (cfg.depth < 1) throw ValidationError("rdunet: depth must be >= 1");
    check_divisible(cfg.image_size, cfg.depth, "rdunet");
    int ch = cfg.base_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        pools_.emplace_back();
        down_.emplace_back(ch, ch * 2);
        ch *= 2;
    }
    for (int i = cfg.depth; i >= 1; --i) {
        const int hi = cfg.base_channels << i;       // channels entering the fusion
        const int lo = cfg.base_channels << (i - 1); // lateral channels at the target resolution
        ups_.emplace_back(hi, lo, 2, 2);
        fuse_.emplace_back(2 * lo, lo);
    }
}

void RDUNet::init(Rng& rng) {
    stem_.init(rng);
    for (auto& d : down_) d.init(rng);
    for (auto& u : ups_) u.init(rng);
    for (auto& f : fuse_) f.init(rng);
    // zeroed residual head: the untrained denoiser is exactly the identity
    std::fill(head_.weight.data.begin(), head_.weight.data.end(), 0.0);
    std::fill(head_.bias.data.begin(), head_.bias.data.end(), 0.0);
}

Tensor RDUNet::forward(const Tensor& x_star, Mode mode) {
    if (x_star.rank() != 4 || x_star.shape[1] != cfg_.input_channels || x_star.shape[2] != cfg_.image_size ||
        x_star.shape[3] != cfg_.image_size) {
        throw ValidationError("rdunet: input " + x_star.shape_str() + " does not match config (C=" +
                              std::to_string(cfg_.input_channels) + ", S=" + std::to_string(cfg_.image_size) + ")");
    }
    ff_sizes_.clear();
    fb_sizes_.clear();
    lateral_.assign(cfg_.depth, Tensor{});

    Tensor t = stem_.forward(x_star, mode);
    ff_sizes_.push_back(t.shape[2]);
    for (int i = 0; i < cfg_.depth; ++i) {
        lateral_[i] = t;
        t = down_[i].forward(pools_[i].forward(t), mode);
        ff_sizes_.push_back(t.shape[2]);
    }
    for (int i = 0; i < cfg_.depth; ++i) {
        Tensor up = ups_[i].forward(t);
        const Tensor& lat = lateral_[cfg_.depth - 1 - i];
        // concat channels: [upsampled feedback, lateral feedforward]
        Tensor cat({up.shape[0], up.shape[1] + lat.shape[1], up.shape[2], up.shape[3]});
        for (int n = 0; n < up.shape[0]; ++n) {
            for (int c = 0; c < up.shape[1]; ++c)
                for (int y = 0; y < up.shape[2]; ++y)
                    for (int x = 0; x < up.shape[3]; ++x) cat.at4(n, c, y, x) = up.at4(n, c, y, x);
            for (int c = 0; c < lat.shape[1]; ++c)
                for (int y = 0; y < up.shape[2]; ++y)
                    for (int x = 0; x < up.shape[3]; ++x) cat.at4(n, up.shape[1] + c, y, x) = lat.at4(n, c, y, x);
        }
        t = fuse_[i].forward(cat, mode);
        fb_sizes_.push_back(t.shape[2]);
    }
    last_residual_ = head_.forward(t);
    // denoised output is x_star + (-residual)
    return sub(x_star, last_residual_);
}

Tensor RDUNet::backward(const Tensor& grad_denoised) {
    Tensor g = head_.backward(scale(grad_denoised, -1.0));
    std::vector<Tensor> lateral_grads(cfg_.depth);
    for (int i = cfg_.depth - 1; i >= 0; --i) {
        Tensor gcat = fuse_[i].backward(g);
        const Tensor& lat = lateral_[cfg_.depth - 1 - i];
        const int up_ch = gcat.shape[1] - lat.shape[1];
        Tensor gup({gcat.shape[0], up_ch, gcat.shape[2], gcat.shape[3]});
        Tensor glat(lat.shape);
        for (int n = 0; n < gcat.shape[0]; ++n) {
            for (int c = 0; c < up_ch; ++c)
                for (int y = 0; y < gcat.shape[2]; ++y)
                    for (int x = 0; x < gcat.shape[3]; ++x) gup.at4(n, c, y, x) = gcat.at4(n, c, y, x);
            for (int c = 0; c < lat.shape[1]; ++c)
                for (int y = 0; y < gcat.shape[2]; ++y)
                    for (int x = 0; x < gcat.shape[3]; ++x) glat.at4(n, c, y, x) = gcat.at4(n, up_ch + c, y, x);
        }
        lateral_grads[cfg_.depth - 1 - i] = std::move(glat);
        g = ups_[i].backward(gup);
    }
    for (int i = cfg_.depth - 1; i >= 0; --i) {
        g = pools_[i].backward(down_[i].backward(g));
        g = add(g, lateral_grads[i]);
    }
    Tensor gx = stem_.backward(g);
    // x_star also feeds the output directly through the residual sum
    return add(gx, grad_denoised);
}

std::vector<ParamRef> RDUNet::state() {
    std::vector<ParamRef> out;
    for (auto& p : stem_.state("denoiser.stem")) out.push_back(p);
    for (int i = 0; i < cfg_.depth; ++i) {
        for (auto& p : down_[i].state("denoiser.down" + std::to_string(i))) out.push_back(p);
    }
    for (std::size_t i = 0; i < ups_.size(); ++i) {
        for (auto& p : ups_[i].state("denoiser.up" + std::to_string(i))) out.push_back(p);
        for (auto& p : fuse_[i].state("denoiser.fuse" + std::to_string(i))) out.push_back(p);
    }
    for (auto& p : head_.state("denoiser.head")) out.push_back(p);
    return out;
}

// --------------------------------------------------------------- Encoder

Encoder::Encoder(const AEConfig& cfg)
    : cfg_(cfg),
      c1_(cfg.input_channels, cfg.enc_channels[0], 3, 1, 1),
      c2_(cfg.enc_channels[0], cfg.enc_channels[1], 3, 1, 1),
      fc_(cfg.enc_channels[1] * (cfg.image_size / 4) * (cfg.image_size / 4), cfg.latent_dim) {
    check_divisible(cfg.image_size, 2, "encoder");
    const int input_dim = cfg.input_channels * cfg.image_size * cfg.image_size;
    if (cfg.latent_dim >= input_dim) {
        throw ValidationError("encoder: latent_dim " + std::to_string(cfg.latent_dim) +
                              " must be < input dimension " + std::to_string(input_dim));
    }
    if (cfg.latent_dim < 1) throw ValidationError("encoder: latent_dim must be >= 1");
}

void Encoder::init(Rng& rng) {
    c1_.init(rng);
    c2_.init(rng);
    fc_.init(rng);
}

Tensor Encoder::forward(const Tensor& x, Mode) {
    Tensor t = p1_.forward(r1_.forward(c1_.forward(x)));
    t = p2_.forward(r2_.forward(c2_.forward(t)));
    return fc_.forward(t);
}

Tensor Encoder::backward(const Tensor& grad_z) {
    Tensor g = fc_.backward(grad_z);
    g.shape = {grad_z.shape[0], cfg_.enc_channels[1], cfg_.image_size / 4, cfg_.image_size / 4};
    g = c2_.backward(r2_.backward(p2_.backward(g)));
    return c1_.backward(r1_.backward(p1_.backward(g)));
}

std::vector<ParamRef> Encoder::state() {
    std::vector<ParamRef> out;
    for (auto& p : c1_.state("encoder.conv1")) out.push_back(p);
    for (auto& p : c2_.state("encoder.conv2")) out.push_back(p);
    for (auto& p : fc_.state("encoder.fc")) out.push_back(p);
    return out;
}

// --------------------------------------------------------------- Decoder

Decoder::Decoder(const AEConfig& cfg)
    : cfg_(cfg),
      fc_(cfg.latent_dim, cfg.enc_channels[1] * (cfg.image_size / 4) * (cfg.image_size / 4)),
      u1_(cfg.enc_channels[1], cfg.enc_channels[0], 2, 2),
      u2_(cfg.enc_channels[0], cfg.input_channels, 2, 2) {}

void Decoder::init(Rng& rng) {
    fc_.init(rng);
    u1_.init(rng);
    u2_.init(rng);
}

Tensor Decoder::forward(const Tensor& z) {
    if (z.shape.back() != cfg_.latent_dim) {
        throw ValidationError("decoder: latent " + z.shape_str() + " does not match d_r=" +
                              std::to_string(cfg_.latent_dim));
    }
    const int n = static_cast<int>(z.numel()) / cfg_.latent_dim;
    Tensor t = r0_.forward(fc_.forward(z));
    t.shape = {n, cfg_.enc_channels[1], cfg_.image_size / 4, cfg_.image_size / 4};
    pre_shape_ = t.shape;
    t = r1_.forward(u1_.forward(t));
    return u2_.forward(t);
}

Tensor Decoder::backward(const Tensor& grad_out) {
    Tensor g = u1_.backward(r1_.backward(u2_.backward(grad_out)));
    g.shape = {pre_shape_[0], static_cast<int>(g.numel()) / pre_shape_[0]};
    return fc_.backward(r0_.backward(g));
}

std::vector<ParamRef> Decoder::state() {
    std::vector<ParamRef> out;
    for (auto& p : fc_.state("decoder.fc")) out.push_back(p);
    for (auto& p : u1_.state("decoder.up1")) out.push_back(p);
    for (auto& p : u2_.state("decoder.up2")) out.push_back(p);
    return out;
}

// ------------------------------------------------------------ Classifier

Classifier::Classifier(const ClassifierConfig& cfg)
    : cfg_(cfg),
      fc_(1, 1)  // replaced below once the flattened size is known
{
    if (cfg.num_classes < 2) throw ValidationError("classifier: need >= 2 classes");
    if (cfg.conv_channels.empty()) throw ValidationError("classifier: need >= 1 conv block");
    check_divisible(cfg.image_size, static_cast<int>(cfg.conv_channels.size()), "classifier");
    int ch = cfg.input_channels;
    int size = cfg.image_size;
    for (int width : cfg.conv_channels) {
        convs_.emplace_back(ch, width, 3, 1, 1);
        bns_.emplace_back(width);
        relus_.emplace_back();
        pools_.emplace_back();
        ch = width;
        size /= 2;
    }
    fc_ = Dense(ch * size * size, cfg.num_classes);
}

void Classifier::init(Rng& rng) {
    for (auto& c : convs_) c.init(rng);
    fc_.init(rng);
}

Tensor Classifier::forward_logits(const Tensor& x, Mode mode) {
    if (x.rank() != 4 || x.shape[1] != cfg_.input_channels || x.shape[2] != cfg_.image_size ||
        x.shape[3] != cfg_.image_size) {
        throw ValidationError("classifier: input " + x.shape_str() + " does not match config (C=" +
                              std::to_string(cfg_.input_channels) + ", S=" + std::to_string(cfg_.image_size) + ")");
    }
    Tensor t = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        t = pools_[i].forward(relus_[i].forward(bns_[i].forward(convs_[i].forward(t), mode)));
    }
    return fc_.forward(t);
}

Tensor Classifier::backward_logits(const Tensor& grad_logits) {
    Tensor g = fc_.backward(grad_logits);
    int size = cfg_.image_size >> convs_.size();
    g.shape = {grad_logits.shape[0], cfg_.conv_channels.back(), size, size};
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        g = convs_[i].backward(bns_[i].backward(relus_[i].backward(pools_[i].backward(g))));
    }
    return g;
}

std::vector<ParamRef> Classifier::state() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        for (auto& p : convs_[i].state("classifier.conv" + std::to_string(i))) out.push_back(p);
        for (auto& p : bns_[i].state("classifier.bn" + std::to_string(i))) out.push_back(p);
    }
    for (auto& p : fc_.state("classifier.fc")) out.push_back(p);
    return out;
}

}  // namespace zocert
