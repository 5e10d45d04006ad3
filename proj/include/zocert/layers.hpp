#pragma once

#include <string>
#include <vector>

#include "zocert/rng.hpp"
#include "zocert/tensor.hpp"

namespace zocert {

enum class Mode { Train, Eval };

// Named view into a model's state. Trainable entries participate in
// sgd_step/zero_grad; all entries (including batch-norm running statistics)
// go into checkpoints.
struct ParamRef {
    std::string name;
    Tensor* tensor = nullptr;
    bool trainable = true;
};

void zero_grads(const std::vector<ParamRef>& params);

// theta <- theta - lr * grad, applied exactly once per call. A non-finite
// gradient rejects the whole step before any parameter is touched.
void sgd_step(const std::vector<ParamRef>& params, double learning_rate);

// Kaiming fan-in init for conv/dense weights; biases zero.
void kaiming_init(Tensor& weight, int fan_in, Rng& rng);

// 2-D convolution, NCHW, weight [OC,IC,K,K].
class Conv2d {
public:
    Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad);

    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    // Accumulates weight/bias grads from the cached forward; returns grad wrt input.
    Tensor backward(const Tensor& grad_out);
    std::vector<ParamRef> state(const std::string& prefix);

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

    Tensor weight;  // [OC,IC,K,K]
    Tensor bias;    // [OC]

private:
    int in_ch_, out_ch_, ksize_, stride_, pad_;
    Tensor cached_in_;
};

// Transposed 2-D convolution, weight [IC,OC,K,K]. Forward is the adjoint of
// Conv2d's forward with the same kernel size/stride/padding, which is what
// the fusion upsampling needs and what the adjoint-identity test pins down.
class ConvTranspose2d {
public:
    ConvTranspose2d(int in_ch, int out_ch, int ksize, int stride, int pad = 0);

    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    std::vector<ParamRef> state(const std::string& prefix);

    Tensor weight;  // [IC,OC,K,K]
    Tensor bias;    // [OC]

private:
    int in_ch_, out_ch_, ksize_, stride_, pad_;
    Tensor cached_in_;
};

// 2x2 max pooling with stride 2. Gradient routes to the first (row-major)
// maximal element of each window.
class MaxPool2 {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    std::vector<int> argmax_;
    std::vector<int> in_shape_;
};

// Per-channel batch normalization over (N,H,W). Training mode uses batch
// statistics and updates running statistics; eval mode uses running
// statistics. Training mode requires batch size >= 2.
class BatchNorm2d {
public:
    explicit BatchNorm2d(int channels, double momentum = 0.1, double epsilon = 1e-5);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    std::vector<ParamRef> state(const std::string& prefix);

    Tensor gamma, beta;
    Tensor running_mean, running_var;
    double momentum, epsilon;

private:
    int channels_;
    Mode cached_mode_ = Mode::Eval;
    Tensor cached_xhat_;
    std::vector<double> cached_inv_std_;
};

class ReLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    Tensor cached_in_;
};

// Fully connected layer on [N, in] (or flat [in]) inputs, weight [out, in].
class Dense {
public:
    Dense(int in_dim, int out_dim);

    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    std::vector<ParamRef> state(const std::string& prefix);

    Tensor weight;  // [out, in]
    Tensor bias;    // [out]

private:
    int in_dim_, out_dim_;
    Tensor cached_in_;  // flattened to [N, in]
};

// Row-wise stable softmax of [N, L] (or flat [L]).
Tensor softmax_rows(const Tensor& logits);
// Backward of softmax given its output p and upstream grad: p (.) (g - <g,p>).
Tensor softmax_backward(const Tensor& probs, const Tensor& grad_out);

}  // namespace zocert
