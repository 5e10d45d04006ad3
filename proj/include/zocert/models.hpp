#pragma once

#include <vector>

#include "zocert/layers.hpp"

namespace zocert {

struct RDUNetConfig {
    int input_channels = 3;
    int base_channels = 8;
    int depth = 4;  // number of pool/up stages; 4 reproduces the reference topology
    int image_size = 16;
};

struct AEConfig {
    int latent_dim = 48;        // d_r, must be < C*H*W
    int enc_channels[2] = {8, 16};
    int input_channels = 3;
    int image_size = 16;
};

struct ClassifierConfig {
    std::vector<int> conv_channels = {8, 16};
    int num_classes = 3;
    int input_channels = 3;
    int image_size = 16;
};

// Two conv(3x3, pad 1) + batch-norm + ReLU layers in sequence.
class DConv {
public:
    DConv(int in_ch, int out_ch);

    void init(Rng& rng);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    std::vector<ParamRef> state(const std::string& prefix);

private:
    Conv2d c1_, c2_;
    BatchNorm2d b1_, b2_;
    ReLU r1_, r2_;
};

// Residual UNet denoiser. Feedforward path: one DConv block then `depth`
// (maxpool + DConv) stages with channel doubling. Feedback path: `depth`
// fusion stages (transposed-conv upsample, concat with the lateral
// feedforward map, DConv) then a 1x1 conv producing the residual map.
// Output: denoised = x_star + (-residual).
class RDUNet {
public:
    explicit RDUNet(const RDUNetConfig& cfg);

    void init(Rng& rng);  // residual head starts at zero: the denoiser begins as identity
    Tensor forward(const Tensor& x_star, Mode mode);
    // Seed with grad wrt the denoised output; accumulates parameter grads,
    // returns grad wrt x_star.
    Tensor backward(const Tensor& grad_denoised);
    std::vector<ParamRef> state();

    const RDUNetConfig& config() const { return cfg_; }
    const Tensor& last_residual() const { return last_residual_; }
    // Spatial sizes seen on the way down / up in the last forward pass.
    const std::vector<int>& feedforward_sizes() const { return ff_sizes_; }
    const std::vector<int>& feedback_sizes() const { return fb_sizes_; }

private:
    RDUNetConfig cfg_;
    DConv stem_;
    std::vector<MaxPool2> pools_;
    std::vector<DConv> down_;
    std::vector<ConvTranspose2d> ups_;
    std::vector<DConv> fuse_;
    Conv2d head_;
    Tensor last_residual_;
    std::vector<int> ff_sizes_, fb_sizes_;
    std::vector<Tensor> lateral_;  // feedforward maps kept for the skip concats
};

// Conv encoder to a d_r-dimensional latent. No batch norm: it also runs on
// single examples inside estimator loops.
class Encoder {
public:
    explicit Encoder(const AEConfig& cfg);

    void init(Rng& rng);
    Tensor forward(const Tensor& x, Mode mode);  // -> [N, d_r]
    Tensor backward(const Tensor& grad_z);
    std::vector<ParamRef> state();

    const AEConfig& config() const { return cfg_; }

private:
    AEConfig cfg_;
    Conv2d c1_, c2_;
    ReLU r1_, r2_;
    MaxPool2 p1_, p2_;
    Dense fc_;
};

// Decoder from the latent back to image space. Raw output; clamping to the
// valid pixel range happens at the black-box query boundary.
class Decoder {
public:
    explicit Decoder(const AEConfig& cfg);

    void init(Rng& rng);
    Tensor forward(const Tensor& z);  // [N, d_r] -> [N, C, S, S]
    Tensor backward(const Tensor& grad_out);
    std::vector<ParamRef> state();

private:
    AEConfig cfg_;
    Dense fc_;
    ReLU r0_, r1_;
    ConvTranspose2d u1_, u2_;
    std::vector<int> pre_shape_;
};

// Desk-scale stand-in for the target network: conv blocks with pooling and a
// dense head. The defense only ever sees it through the black-box boundary.
class Classifier {
public:
    explicit Classifier(const ClassifierConfig& cfg);

    void init(Rng& rng);
    Tensor forward_logits(const Tensor& x, Mode mode);  // -> [N, L]
    Tensor backward_logits(const Tensor& grad_logits);
    std::vector<ParamRef> state();

    const ClassifierConfig& config() const { return cfg_; }

private:
    ClassifierConfig cfg_;
    std::vector<Conv2d> convs_;
    std::vector<BatchNorm2d> bns_;
    std::vector<ReLU> relus_;
    std::vector<MaxPool2> pools_;
    Dense fc_;
};

}  // namespace zocert
