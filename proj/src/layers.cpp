#include "zocert/layers.hpp"

#include <algorithm>
#include <cmath>

namespace zocert {

void zero_grads(const std::vector<ParamRef>& params) {
    for (const auto& p : params) {
        if (p.trainable) {
            p.tensor->alloc_grad();
            p.tensor->zero_grad();
        }
    }
}

void sgd_step(const std::vector<ParamRef>& params, double learning_rate) {
    for (const auto& p : params) {
        if (!p.trainable) continue;
        if (!p.tensor->has_grad()) throw ValidationError("sgd_step: no gradient buffer for " + p.name);
        for (double g : p.tensor->grad) {
            if (!std::isfinite(g)) {
                throw NumericalError("sgd_step: non-finite gradient in " + p.name + "; step rejected");
            }
        }
    }
    for (const auto& p : params) {
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.tensor->data.size(); ++i) {
            p.tensor->data[i] -= learning_rate * p.tensor->grad[i];
        }
    }
}

void kaiming_init(Tensor& weight, int fan_in, Rng& rng) {
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : weight.data) v = std_dev * rng.normal();
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad)
    : weight({out_ch, in_ch, ksize, ksize}),
      bias({out_ch}),
      in_ch_(in_ch),
      out_ch_(out_ch),
      ksize_(ksize),
      stride_(stride),
      pad_(pad) {
    weight.alloc_grad();
    bias.alloc_grad();
}

void Conv2d::init(Rng& rng) { kaiming_init(weight, in_ch_ * ksize_ * ksize_, rng); }

Tensor Conv2d::forward(const Tensor& x) {
    if (x.rank() != 4 || x.shape[1] != in_ch_) {
        throw ValidationError("conv2d: input " + x.shape_str() + " incompatible with weight " + weight.shape_str());
    }
    const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
    if (h + 2 * pad_ < ksize_ || w + 2 * pad_ < ksize_) {
        throw ValidationError("conv2d: input " + x.shape_str() + " smaller than kernel extent " +
                              std::to_string(ksize_) + " after padding " + std::to_string(pad_));
    }
    const int oh = (h + 2 * pad_ - ksize_) / stride_ + 1;
    const int ow = (w + 2 * pad_ - ksize_) / stride_ + 1;
    cached_in_ = x;
    Tensor out({n, out_ch_, oh, ow});
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            for (int y = 0; y < oh; ++y) {
                for (int xo = 0; xo < ow; ++xo) {
                    double acc = bias.data[oc];
                    for (int ic = 0; ic < in_ch_; ++ic) {
                        for (int ky = 0; ky < ksize_; ++ky) {
                            const int iy = y * stride_ + ky - pad_;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < ksize_; ++kx) {
                                const int ix = xo * stride_ + kx - pad_;
                                if (ix < 0 || ix >= w) continue;
                                acc += x.at4(in, ic, iy, ix) * weight.at4(oc, ic, ky, kx);
                            }
                        }
                    }
                    out.at4(in, oc, y, xo) = acc;
                }
            }
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const Tensor& x = cached_in_;
    const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const int oh = grad_out.shape[2], ow = grad_out.shape[3];
    Tensor gin(x.shape);
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            for (int y = 0; y < oh; ++y) {
                for (int xo = 0; xo < ow; ++xo) {
                    const double g = grad_out.at4(in, oc, y, xo);
                    bias.grad[oc] += g;
                    for (int ic = 0; ic < in_ch_; ++ic) {
                        for (int ky = 0; ky < ksize_; ++ky) {
                            const int iy = y * stride_ + ky - pad_;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < ksize_; ++kx) {
                                const int ix = xo * stride_ + kx - pad_;
                                if (ix < 0 || ix >= w) continue;
                                weight.grad[((static_cast<std::size_t>(oc) * in_ch_ + ic) * ksize_ + ky) * ksize_ + kx] +=
                                    x.at4(in, ic, iy, ix) * g;
                                gin.at4(in, ic, iy, ix) += weight.at4(oc, ic, ky, kx) * g;
                            }
                        }
                    }
                }
            }
        }
    }
    return gin;
}

std::vector<ParamRef> Conv2d::state(const std::string& prefix) {
    return {{prefix + ".weight", &weight, true}, {prefix + ".bias", &bias, true}};
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int ksize, int stride, int pad)
    : weight({in_ch, out_ch, ksize, ksize}),
      bias({out_ch}),
      in_ch_(in_ch),
      out_ch_(out_ch),
      ksize_(ksize),
      stride_(stride),
      pad_(pad) {
    weight.alloc_grad();
    bias.alloc_grad();
}

void ConvTranspose2d::init(Rng& rng) { kaiming_init(weight, in_ch_ * ksize_ * ksize_, rng); }

Tensor ConvTranspose2d::forward(const Tensor& x) {
    if (x.rank() != 4 || x.shape[1] != in_ch_) {
        throw ValidationError("conv2d_transpose: input " + x.shape_str() + " incompatible with weight " +
                              weight.shape_str());
    }
    const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const int oh = (h - 1) * stride_ + ksize_ - 2 * pad_;
    const int ow = (w - 1) * stride_ + ksize_ - 2 * pad_;
    if (oh <= 0 || ow <= 0) {
        throw ValidationError("conv2d_transpose: input " + x.shape_str() + " yields empty output");
    }
    cached_in_ = x;
    Tensor out({n, out_ch_, oh, ow});
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) out.at4(in, oc, y, xo) = bias.data[oc];
        }
        for (int ic = 0; ic < in_ch_; ++ic) {
            for (int iy = 0; iy < h; ++iy) {
                for (int ix = 0; ix < w; ++ix) {
                    const double v = x.at4(in, ic, iy, ix);
                    for (int oc = 0; oc < out_ch_; ++oc) {
                        for (int ky = 0; ky < ksize_; ++ky) {
                            const int oy = iy * stride_ + ky - pad_;
                            if (oy < 0 || oy >= oh) continue;
                            for (int kx = 0; kx < ksize_; ++kx) {
                                const int ox = ix * stride_ + kx - pad_;
                                if (ox < 0 || ox >= ow) continue;
                                out.at4(in, oc, oy, ox) += v * weight.at4(ic, oc, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_out) {
    const Tensor& x = cached_in_;
    const int n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const int oh = grad_out.shape[2], ow = grad_out.shape[3];
    Tensor gin(x.shape);
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < out_ch_; ++oc) {
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo) bias.grad[oc] += grad_out.at4(in, oc, y, xo);
        }
        for (int ic = 0; ic < in_ch_; ++ic) {
            for (int iy = 0; iy < h; ++iy) {
                for (int ix = 0; ix < w; ++ix) {
                    double acc = 0.0;
                    const double v = x.at4(in, ic, iy, ix);
                    for (int oc = 0; oc < out_ch_; ++oc) {
                        for (int ky = 0; ky < ksize_; ++ky) {
                            const int oy = iy * stride_ + ky - pad_;
                            if (oy < 0 || oy >= oh) continue;
                            for (int kx = 0; kx < ksize_; ++kx) {
                                const int ox = ix * stride_ + kx - pad_;
                                if (ox < 0 || ox >= ow) continue;
                                const double g = grad_out.at4(in, oc, oy, ox);
                                acc += weight.at4(ic, oc, ky, kx) * g;
                                weight.grad[((static_cast<std::size_t>(ic) * out_ch_ + oc) * ksize_ + ky) * ksize_ + kx] +=
                                    v * g;
                            }
                        }
                    }
                    gin.at4(in, ic, iy, ix) = acc;
                }
            }
        }
    }
    return gin;
}

std::vector<ParamRef> ConvTranspose2d::state(const std::string& prefix) {
    return {{prefix + ".weight", &weight, true}, {prefix + ".bias", &bias, true}};
}

// -------------------------------------------------------------- MaxPool2

Tensor MaxPool2::forward(const Tensor& x) {
    if (x.rank() != 4) throw ValidationError("maxpool2: need NCHW input, got " + x.shape_str());
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (h % 2 != 0 || w % 2 != 0) {
        throw ValidationError("maxpool2: spatial dims must be even, got " + x.shape_str());
    }
    const int oh = h / 2, ow = w / 2;
    in_shape_ = x.shape;
    Tensor out({n, c, oh, ow});
    argmax_.assign(out.numel(), 0);
    std::size_t oi = 0;
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            for (int y = 0; y < oh; ++y) {
                for (int xo = 0; xo < ow; ++xo, ++oi) {
                    double best = -1e308;
                    int best_idx = 0;
                    for (int ky = 0; ky < 2; ++ky) {
                        for (int kx = 0; kx < 2; ++kx) {
                            const int iy = 2 * y + ky, ix = 2 * xo + kx;
                            const double v = x.at4(in, ic, iy, ix);
                            // strict > keeps the first (row-major) tie winner
                            if (v > best) {
                                best = v;
                                best_idx = static_cast<int>(
                                    ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix);
                            }
                        }
                    }
                    out.data[oi] = best;
                    argmax_[oi] = best_idx;
                }
            }
        }
    }
    return out;
}

Tensor MaxPool2::backward(const Tensor& grad_out) {
    Tensor gin(in_shape_);
    for (std::size_t i = 0; i < grad_out.data.size(); ++i) gin.data[argmax_[i]] += grad_out.data[i];
    return gin;
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double momentum_, double epsilon_)
    : gamma({channels}, 1.0),
      beta({channels}, 0.0),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      momentum(momentum_),
      epsilon(epsilon_),
      channels_(channels) {
    if (epsilon <= 0.0) throw ValidationError("batchnorm: epsilon must be > 0");
    gamma.alloc_grad();
    beta.alloc_grad();
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 4 || x.shape[1] != channels_) {
        throw ValidationError("batchnorm: input " + x.shape_str() + " incompatible with " +
                              std::to_string(channels_) + " channels");
    }
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (mode == Mode::Train && n < 2) {
        throw ValidationError("batchnorm: training mode requires batch size >= 2, got " + std::to_string(n));
    }
    cached_mode_ = mode;
    const std::size_t per_ch = static_cast<std::size_t>(n) * h * w;
    Tensor out(x.shape);
    cached_xhat_ = Tensor(x.shape);
    cached_inv_std_.assign(c, 0.0);
    for (int ic = 0; ic < c; ++ic) {
        double mean, var;
        if (mode == Mode::Train) {
            double s = 0.0;
            for (int in = 0; in < n; ++in)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo) s += x.at4(in, ic, y, xo);
            mean = s / static_cast<double>(per_ch);
            double sq = 0.0;
            for (int in = 0; in < n; ++in)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo) {
                        const double d = x.at4(in, ic, y, xo) - mean;
                        sq += d * d;
                    }
            var = sq / static_cast<double>(per_ch);
            running_mean.data[ic] = (1.0 - momentum) * running_mean.data[ic] + momentum * mean;
            running_var.data[ic] = (1.0 - momentum) * running_var.data[ic] + momentum * var;
        } else {
            mean = running_mean.data[ic];
            var = running_var.data[ic];
        }
        const double inv_std = 1.0 / std::sqrt(var + epsilon);
        cached_inv_std_[ic] = inv_std;
        for (int in = 0; in < n; ++in) {
            for (int y = 0; y < h; ++y) {
                for (int xo = 0; xo < w; ++xo) {
                    const double xh = (x.at4(in, ic, y, xo) - mean) * inv_std;
                    cached_xhat_.at4(in, ic, y, xo) = xh;
                    out.at4(in, ic, y, xo) = gamma.data[ic] * xh + beta.data[ic];
                }
            }
        }
    }
    return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
    const int n = grad_out.shape[0], c = grad_out.shape[1], h = grad_out.shape[2], w = grad_out.shape[3];
    const double m = static_cast<double>(static_cast<std::size_t>(n) * h * w);
    Tensor gin(grad_out.shape);
    for (int ic = 0; ic < c; ++ic) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int in = 0; in < n; ++in) {
            for (int y = 0; y < h; ++y) {
                for (int xo = 0; xo < w; ++xo) {
                    const double g = grad_out.at4(in, ic, y, xo);
                    sum_g += g;
                    sum_gx += g * cached_xhat_.at4(in, ic, y, xo);
                }
            }
        }
        gamma.grad[ic] += sum_gx;
        beta.grad[ic] += sum_g;
        const double inv_std = cached_inv_std_[ic];
        if (cached_mode_ == Mode::Train) {
            // d/dx of ((x - mu)/sigma * gamma + beta) with mu, sigma batch stats
            for (int in = 0; in < n; ++in) {
                for (int y = 0; y < h; ++y) {
                    for (int xo = 0; xo < w; ++xo) {
                        const double g = grad_out.at4(in, ic, y, xo);
                        const double xh = cached_xhat_.at4(in, ic, y, xo);
                        gin.at4(in, ic, y, xo) =
                            gamma.data[ic] * inv_std * (g - sum_g / m - xh * sum_gx / m);
                    }
                }
            }
        } else {
            for (int in = 0; in < n; ++in)
                for (int y = 0; y < h; ++y)
                    for (int xo = 0; xo < w; ++xo)
                        gin.at4(in, ic, y, xo) = gamma.data[ic] * inv_std * grad_out.at4(in, ic, y, xo);
        }
    }
    return gin;
}

std::vector<ParamRef> BatchNorm2d::state(const std::string& prefix) {
    return {{prefix + ".gamma", &gamma, true},
            {prefix + ".beta", &beta, true},
            {prefix + ".running_mean", &running_mean, false},
            {prefix + ".running_var", &running_var, false}};
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(const Tensor& x) {
    cached_in_ = x;
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    Tensor gin = grad_out;
    for (std::size_t i = 0; i < gin.data.size(); ++i) {
        if (cached_in_.data[i] <= 0.0) gin.data[i] = 0.0;  // subgradient at 0 is 0
    }
    return gin;
}

// ----------------------------------------------------------------- Dense

Dense::Dense(int in_dim, int out_dim)
    : weight({out_dim, in_dim}), bias({out_dim}), in_dim_(in_dim), out_dim_(out_dim) {
    weight.alloc_grad();
    bias.alloc_grad();
}

void Dense::init(Rng& rng) { kaiming_init(weight, in_dim_, rng); }

Tensor Dense::forward(const Tensor& x) {
    const std::size_t total = x.numel();
    if (total % static_cast<std::size_t>(in_dim_) != 0) {
        throw ValidationError("dense: input " + x.shape_str() + " not divisible by in_dim " +
                              std::to_string(in_dim_));
    }
    const int n = static_cast<int>(total / static_cast<std::size_t>(in_dim_));
    if (x.rank() >= 2 && x.shape[0] != n) {
        throw ValidationError("dense: input " + x.shape_str() + " incompatible with weight " + weight.shape_str());
    }
    cached_in_ = x;
    cached_in_.shape = {n, in_dim_};
    Tensor out({n, out_dim_});
    for (int r = 0; r < n; ++r) {
        for (int o = 0; o < out_dim_; ++o) {
            double acc = bias.data[o];
            const std::size_t wrow = static_cast<std::size_t>(o) * in_dim_;
            const std::size_t xrow = static_cast<std::size_t>(r) * in_dim_;
            for (int i = 0; i < in_dim_; ++i) acc += weight.data[wrow + i] * cached_in_.data[xrow + i];
            out.at2(r, o) = acc;
        }
    }
    return out;
}

Tensor Dense::backward(const Tensor& grad_out) {
    const int n = cached_in_.shape[0];
    Tensor gin(cached_in_.shape);
    for (int r = 0; r < n; ++r) {
        for (int o = 0; o < out_dim_; ++o) {
            const double g = grad_out.at2(r, o);
            bias.grad[o] += g;
            const std::size_t wrow = static_cast<std::size_t>(o) * in_dim_;
            const std::size_t xrow = static_cast<std::size_t>(r) * in_dim_;
            for (int i = 0; i < in_dim_; ++i) {
                weight.grad[wrow + i] += cached_in_.data[xrow + i] * g;
                gin.data[xrow + i] += weight.data[wrow + i] * g;
            }
        }
    }
    return gin;
}

std::vector<ParamRef> Dense::state(const std::string& prefix) {
    return {{prefix + ".weight", &weight, true}, {prefix + ".bias", &bias, true}};
}

// --------------------------------------------------------------- softmax

Tensor softmax_rows(const Tensor& logits) {
    const int cols = logits.shape.back();
    const int rows = static_cast<int>(logits.numel()) / cols;
    Tensor out = logits;
    for (int r = 0; r < rows; ++r) {
        double* row = out.data.data() + static_cast<std::size_t>(r) * cols;
        double mx = row[0];
        for (int i = 1; i < cols; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (int i = 0; i < cols; ++i) {
            row[i] = std::exp(row[i] - mx);
            sum += row[i];
        }
        for (int i = 0; i < cols; ++i) row[i] /= sum;
    }
    return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& grad_out) {
    require_same_shape(probs, grad_out, "softmax_backward");
    const int cols = probs.shape.back();
    const int rows = static_cast<int>(probs.numel()) / cols;
    Tensor gin(probs.shape);
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        double gp = 0.0;
        for (int i = 0; i < cols; ++i) gp += grad_out.data[off + i] * probs.data[off + i];
        for (int i = 0; i < cols; ++i) gin.data[off + i] = probs.data[off + i] * (grad_out.data[off + i] - gp);
    }
    return gin;
}

}  // namespace zocert
