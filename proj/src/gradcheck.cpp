#include "zocert/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "zocert/models.hpp"
#include "zocert/rng.hpp"
#include "zocert/zo.hpp"

namespace zocert {

namespace {

double fd_rel_error(std::vector<double> point,
                    const std::function<double(const std::vector<double>&)>& objective,
                    const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
                    double step) {
    const std::vector<double> g = gradient(point);
    double scale = 1e-12;
    for (double v : g) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double keep = point[i];
        point[i] = keep + step;
        const double plus = objective(point);
        point[i] = keep - step;
        const double minus = objective(point);
        point[i] = keep;
        const double fd = (plus - minus) / (2.0 * step);
        worst = std::max(worst, std::abs(g[i] - fd));
    }
    return worst / scale;
}

// Random tensor whose entries stay clear of ReLU kinks and maxpool ties.
Tensor guarded_random(const std::vector<int>& shape, Rng& rng) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        double v = rng.normal();
        if (std::abs(v) < 2e-3) v += (v >= 0.0 ? 2e-3 : -2e-3);
        t.data[i] = v + 1e-4 * static_cast<double>(i % 89);  // break exact ties
    }
    return t;
}

struct Suite {
    std::vector<CheckResult> results;
    std::uint64_t seed;
    int n_seeds;

    void add(const std::string& name, double err, double tol) {
        results.push_back({name, err, tol, err <= tol});
    }
};

// Objective sum(R (.) layer(x)) checked against the layer backward, for the
// layer input and each trainable parameter.
template <typename Forward, typename Backward>
void check_targets(Suite& s, const std::string& name, double tol, Tensor& x, std::vector<Tensor*> params,
                   const Tensor& cotangent, Forward&& fwd, Backward&& bwd) {
    auto objective_from = [&](Tensor* target) {
        return [&, target](const std::vector<double>& v) {
            target->data = v;
            const Tensor out = fwd();
            double j = 0.0;
            for (std::size_t i = 0; i < out.data.size(); ++i) j += out.data[i] * cotangent.data[i];
            return j;
        };
    };
    auto gradient_from = [&](Tensor* target, bool is_input) {
        return [&, target, is_input](const std::vector<double>& v) {
            target->data = v;
            for (Tensor* p : params) {
                p->alloc_grad();
                p->zero_grad();
            }
            fwd();
            const Tensor gin = bwd(cotangent);
            return is_input ? gin.data : target->grad;
        };
    };
    double err_in = fd_rel_error(x.data, objective_from(&x), gradient_from(&x, true), 1e-5);
    s.add(name + "/input", err_in, tol);
    for (std::size_t p = 0; p < params.size(); ++p) {
        double err = fd_rel_error(params[p]->data, objective_from(params[p]), gradient_from(params[p], false), 1e-5);
        s.add(name + "/param" + std::to_string(p), err, tol);
    }
}

void check_conv2d(Suite& s) {
    double worst_in = 0.0, worst_w = 0.0, worst_b = 0.0;
    for (int r = 0; r < s.n_seeds; ++r) {
        Rng rng(derive_seed(s.seed, {100, static_cast<std::uint64_t>(r)}));
        Conv2d conv(2, 3, 3, 1, 1);
        conv.init(rng);
        for (double& v : conv.bias.data) v = 0.3 * rng.normal();
        Tensor x = guarded_random({2, 2, 5, 5}, rng);
        Tensor cot = guarded_random({2, 3, 5, 5}, rng);
        Suite local{{}, 0, 0};
        check_targets(local, "conv2d", 1e-4, x, {&conv.weight, &conv.bias}, cot,
                      [&] { return conv.forward(x); }, [&](const Tensor& g) { return conv.backward(g); });
        worst_in = std::max(worst_in, local.results[0].max_rel_error);
        worst_w = std::max(worst_w, local.results[1].max_rel_error);
        worst_b = std::max(worst_b, local.results[2].max_rel_error);
    }
    s.add("conv2d/input", worst_in, 1e-4);
    s.add("conv2d/weight", worst_w, 1e-4);
    s.add("conv2d/bias", worst_b, 1e-4);
}

void check_conv_transpose(Suite& s) {
    double worst_in = 0.0, worst_w = 0.0, worst_b = 0.0;
    for (int r = 0; r < s.n_seeds; ++r) {
        Rng rng(derive_seed(s.seed, {101, static_cast<std::uint64_t>(r)}));
        ConvTranspose2d up(3, 2, 2, 2);
        up.init(rng);
        for (double& v : up.bias.data) v = 0.3 * rng.normal();
        Tensor x = guarded_random({2, 3, 4, 4}, rng);
        Tensor cot = guarded_random({2, 2, 8, 8}, rng);
        Suite local{{}, 0, 0};
        check_targets(local, "convt", 1e-4, x, {&up.weight, &up.bias}, cot,
                      [&] { return up.forward(x); }, [&](const Tensor& g) { return up.backward(g); });
        worst_in = std::max(worst_in, local.results[0].max_rel_error);
        worst_w = std::max(worst_w, local.results[1].max_rel_error);
        worst_b = std::max(worst_b, local.results[2].max_rel_error);
    }
    s.add("conv2d_transpose/input", worst_in, 1e-4);
    s.add("conv2d_transpose/weight", worst_w, 1e-4);
    s.add("conv2d_transpose/bias", worst_b, 1e-4);
}

void check_maxpool(Suite& s) {
    double worst = 0.0;
    for (int r = 0; r < s.n_seeds; ++r) {
        Rng rng(derive_seed(s.seed, {102, static_cast<std::uint64_t>(r)}));
        MaxPool2 pool;
        Tensor x = guarded_random({2, 3, 6, 6}, rng);
        Tensor cot = guarded_random({2, 3, 3, 3}, rng);
        Suite local{{}, 0, 0};
        check_targets(local, "maxpool", 1e-4, x, {}, cot, [&] { return pool.forward(x); },
                      [&](const Tensor& g) { return pool.backward(g); });
        worst = std::max(worst, local.results[0].max_rel_error);
    }
    s.add("maxpool2/input", worst, 1e-4);
}

void check_relu(Suite& s) {
    double worst = 0.0;
    for (int r = 0; r < s.n_seeds; ++r) {
        Rng rng(derive_seed(s.seed, {103, static_cast<std::uint64_t>(r)}));
        ReLU relu;
        Tensor x = guarded_random({2, 2, 4, 4}, rng);
        Tensor cot = guarded_random({2, 2, 4, 4}, rng);
        Suite local{{}, 0, 0};
        check_targets(local, "relu", 1e-6, x, {}, cot, [&] { return relu.forward(x); },
                      [&](const Tensor& g) { return relu.backward(g); });
        worst = std::max(worst, local.results[0].max_rel_error);
    }
    s.add("relu/input", worst, 1e-6);
}

void check_batchnorm(Suite& s) {
    double worst_in = 0.0, worst_g = 0.0, worst_b = 0.0;
    for (int r = 0; r < s.n_seeds; ++r) {
        Rng rng(derive_seed(s.seed, {104, static_cast<std::uint64_t>(r)}));
        BatchNorm2d bn(3);
        for (double& v : bn.gamma.data) v = 1.0 + 0.2 * rng.normal();
        for (double& v : bn.beta.data) v = 0.2 * rng.normal();
        Tensor x = guarded_random({4, 3, 4, 4}, rng);
        Tensor cot = guarded_random({4, 3, 4, 4}, rng);
        Suite local{{}, 0, 0};
        check_targets(local, "bn", 1e-3, x, {&bn.gamma, &bn.beta}, cot,
                      [&] { return bn.forward(x, Mode::Train); }, [&](const Tensor& g) { return bn.backward(g); });
        worst_in = std::max(worst_in, local.results[0].max_rel_error);
        worst_g = std::max(worst_g, local.results[1].max_rel_error);
        worst_b = std::max(worst_b, local.results[2].max_rel_error);
    }
    s.add("batchnorm/input", worst_in, 1e-3);
    s.add("batchnorm/gamma", worst_g, 1e-3);
    s.add("batchnorm/beta", worst_b, 1e-3);
}

void check_dense(Suite& s) {
    double worst_in = 0.0, worst_w = 0.0, worst_b = 0.0;
    for (int r = 0; r < s.n_seeds; ++r) {
        Rng rng(derive_seed(s.seed, {105, static_cast<std::uint64_t>(r)}));
        Dense fc(10, 4);
        fc.init(rng);
        for (double& v : fc.bias.data) v = 0.3 * rng.normal();
        Tensor x = guarded_random({3, 10}, rng);
        Tensor cot = guarded_random({3, 4}, rng);
        Suite local{{}, 0, 0};
        check_targets(local, "dense", 1e-5, x, {&fc.weight, &fc.bias}, cot,
                      [&] { return fc.forward(x); }, [&](const Tensor& g) { return fc.backward(g); });
        worst_in = std::max(worst_in, local.results[0].max_rel_error);
        worst_w = std::max(worst_w, local.results[1].max_rel_error);
        worst_b = std::max(worst_b, local.results[2].max_rel_error);
    }
    s.add("dense/input", worst_in, 1e-5);
    s.add("dense/weight", worst_w, 1e-5);
    s.add("dense/bias", worst_b, 1e-5);
}

// conv -> bn -> relu -> pool -> dense, end to end through the conv weight.
void check_composite(Suite& s) {
    double worst_w = 0.0, worst_in = 0.0;
    for (int r = 0; r < s.n_seeds; ++r) {
        Rng rng(derive_seed(s.seed, {106, static_cast<std::uint64_t>(r)}));
        Conv2d conv(2, 4, 3, 1, 1);
        conv.init(rng);
        BatchNorm2d bn(4);
        ReLU relu;
        MaxPool2 pool;
        Dense fc(4 * 3 * 3, 3);
        fc.init(rng);
        Tensor x = guarded_random({2, 2, 6, 6}, rng);
        Tensor cot = guarded_random({2, 3}, rng);
        auto fwd = [&] { return fc.forward(pool.forward(relu.forward(bn.forward(conv.forward(x), Mode::Train)))); };
        auto bwd = [&](const Tensor& g) {
            Tensor t = fc.backward(g);
            t.shape = {2, 4, 3, 3};
            return conv.backward(bn.backward(relu.backward(pool.backward(t))));
        };
        Suite local{{}, 0, 0};
        check_targets(local, "composite", 1e-3, x, {&conv.weight, &fc.weight, &bn.gamma, &bn.beta, &conv.bias, &fc.bias},
                      cot, fwd, bwd);
        worst_in = std::max(worst_in, local.results[0].max_rel_error);
        worst_w = std::max(worst_w, local.results[1].max_rel_error);
    }
    s.add("composite3/input", worst_in, 1e-3);
    s.add("composite3/conv_weight", worst_w, 1e-3);
}

// sum(denoised) wrt every denoiser parameter on a 1-channel 8x8 instance.
void check_rdunet(Suite& s) {
    double worst = 0.0;
    const int reps = std::max(1, s.n_seeds / 5);  // full-parameter FD is the slow part
    for (int r = 0; r < reps; ++r) {
        Rng rng(derive_seed(s.seed, {107, static_cast<std::uint64_t>(r)}));
        RDUNetConfig cfg;
        cfg.input_channels = 1;
        cfg.base_channels = 2;
        cfg.depth = 2;
        cfg.image_size = 8;
        RDUNet net(cfg);
        net.init(rng);
        // gradients through the residual head need a non-zero head
        for (double& v : net.state().back().tensor->data) v = 0.1 * rng.normal();
        for (auto& p : net.state()) {
            if (p.name == "denoiser.head.weight") {
                for (double& v : p.tensor->data) v = 0.2 * rng.normal();
            }
        }
        Tensor x = guarded_random({2, 1, 8, 8}, rng);
        Tensor cot({2, 1, 8, 8}, 1.0);  // objective: sum of the denoised output

        std::vector<ParamRef> state = net.state();
        std::vector<double> flat;
        for (auto& p : state) flat.insert(flat.end(), p.tensor->data.begin(), p.tensor->data.end());
        auto scatter = [&](const std::vector<double>& v) {
            std::size_t off = 0;
            for (auto& p : state) {
                std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(off), p.tensor->data.size(),
                            p.tensor->data.begin());
                off += p.tensor->data.size();
            }
        };
        auto objective = [&](const std::vector<double>& v) {
            scatter(v);
            const Tensor out = net.forward(x, Mode::Train);
            double j = 0.0;
            for (double o : out.data) j += o;
            return j;
        };
        auto gradient = [&](const std::vector<double>& v) {
            scatter(v);
            zero_grads(state);
            net.forward(x, Mode::Train);
            net.backward(cot);
            std::vector<double> g;
            for (auto& p : state) {
                if (p.trainable) {
                    g.insert(g.end(), p.tensor->grad.begin(), p.tensor->grad.end());
                } else {
                    g.insert(g.end(), p.tensor->data.size(), 0.0);  // running stats: not a gradient target
                }
            }
            return g;
        };
        // restrict FD to trainable coordinates: running stats are not differentiated
        std::vector<char> trainable_mask;
        for (auto& p : state) {
            trainable_mask.insert(trainable_mask.end(), p.tensor->data.size(), p.trainable ? 1 : 0);
        }
        const std::vector<double> g = gradient(flat);
        double scale = 1e-12;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (trainable_mask[i]) scale = std::max(scale, std::abs(g[i]));
        double err = 0.0;
        std::vector<double> point = flat;
        for (std::size_t i = 0; i < point.size(); ++i) {
            if (!trainable_mask[i]) continue;
            const double keep = point[i];
            point[i] = keep + 1e-5;
            const double plus = objective(point);
            point[i] = keep - 1e-5;
            const double minus = objective(point);
            point[i] = keep;
            err = std::max(err, std::abs(g[i] - (plus - minus) / 2e-5));
        }
        worst = std::max(worst, err / scale);
    }
    s.add("rdunet/all_params", worst, 1e-3);
}

void check_encoder(Suite& s) {
    double worst = 0.0;
    for (int r = 0; r < std::max(1, s.n_seeds / 5); ++r) {
        Rng rng(derive_seed(s.seed, {108, static_cast<std::uint64_t>(r)}));
        AEConfig cfg;
        cfg.input_channels = 1;
        cfg.image_size = 8;
        cfg.latent_dim = 6;
        cfg.enc_channels[0] = 2;
        cfg.enc_channels[1] = 3;
        Encoder enc(cfg);
        enc.init(rng);
        Tensor x = guarded_random({2, 1, 8, 8}, rng);
        Tensor cot = guarded_random({2, 6}, rng);
        std::vector<Tensor*> params;
        auto st = enc.state();
        for (auto& p : st) params.push_back(p.tensor);
        Suite local{{}, 0, 0};
        check_targets(local, "encoder", 1e-3, x, params, cot, [&] { return enc.forward(x, Mode::Train); },
                      [&](const Tensor& g) { return enc.backward(g); });
        for (auto& res : local.results) worst = std::max(worst, res.max_rel_error);
    }
    s.add("encoder/end_to_end", worst, 1e-3);
}

void check_cge_quadratic(Suite& s) {
    Rng rng(derive_seed(s.seed, {109}));
    const int d = 12;
    std::vector<double> A(static_cast<std::size_t>(d) * d), b(d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = 0.5 * rng.normal();
            A[static_cast<std::size_t>(i) * d + j] = v;
            A[static_cast<std::size_t>(j) * d + i] = v;
        }
        b[i] = rng.normal();
    }
    Tensor z0({d});
    for (double& v : z0.data) v = rng.normal();
    auto loss = [&](const Tensor& z) {
        double val = 0.0;
        for (int i = 0; i < d; ++i) {
            val += b[i] * z.data[i];
            for (int j = 0; j < d; ++j) val += z.data[i] * A[static_cast<std::size_t>(i) * d + j] * z.data[j];
        }
        return val;
    };
    ZOConfig cfg;
    cfg.method = ZOMethod::CGE;
    cfg.xi = 0.005;
    const GradientEstimate est = cge_estimate(loss, z0, cfg);
    double err = 0.0;
    for (int k = 0; k < d; ++k) {
        double true_g = b[k];
        for (int j = 0; j < d; ++j) true_g += 2.0 * A[static_cast<std::size_t>(k) * d + j] * z0.data[j];
        err = std::max(err, std::abs(est.vector.data[k] - true_g));
    }
    s.add("cge/quadratic_abs_error", err, 1e-8);
}

void check_rge_cosine(Suite& s) {
    Rng rng(derive_seed(s.seed, {110}));
    const int d = 16;
    std::vector<double> a(d);
    for (double& v : a) v = rng.normal();
    Tensor z0({d});
    for (double& v : z0.data) v = 0.5 * rng.normal();
    auto loss = [&](const Tensor& z) {
        double az = 0.0, nsq = 0.0;
        for (int i = 0; i < d; ++i) {
            az += a[i] * z.data[i];
            nsq += z.data[i] * z.data[i];
        }
        return std::sin(az) + 0.5 * nsq;
    };
    std::vector<double> true_grad(d);
    {
        double az = 0.0;
        for (int i = 0; i < d; ++i) az += a[i] * z0.data[i];
        for (int i = 0; i < d; ++i) true_grad[i] = std::cos(az) * a[i] + z0.data[i];
    }
    ZOConfig cfg;
    cfg.q = 1000;
    cfg.xi = 1e-4;
    Tensor mean({d});
    const int m = 100;  // m * q = 1e5 directions in total
    Rng est_rng(derive_seed(s.seed, {111}));
    for (int rep = 0; rep < m; ++rep) {
        const GradientEstimate est = rge_estimate(loss, z0, cfg, est_rng);
        for (int i = 0; i < d; ++i) mean.data[i] += est.vector.data[i] / static_cast<double>(m);
    }
    double dot_v = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < d; ++i) {
        dot_v += mean.data[i] * true_grad[i];
        na += mean.data[i] * mean.data[i];
        nb += true_grad[i] * true_grad[i];
    }
    const double cosine = dot_v / std::sqrt(na * nb);
    s.add("rge/one_minus_mean_cosine", 1.0 - cosine, 0.01);
}

void check_chain_identity(Suite& s) {
    Rng rng(derive_seed(s.seed, {112}));
    RDUNetConfig dcfg;
    dcfg.input_channels = 1;
    dcfg.base_channels = 2;
    dcfg.depth = 2;
    dcfg.image_size = 8;
    RDUNet dn(dcfg);
    dn.init(rng);
    for (auto& p : dn.state()) {
        if (p.name.rfind("denoiser.head", 0) == 0) {
            for (double& v : p.tensor->data) v = 0.2 * rng.normal();
        }
    }
    ClassifierConfig ccfg;
    ccfg.input_channels = 1;
    ccfg.image_size = 8;
    ccfg.conv_channels = {4};
    ccfg.num_classes = 3;
    Classifier cls(ccfg);
    cls.init(rng);

    Tensor x = guarded_random({2, 1, 8, 8}, rng);
    std::vector<std::vector<double>> targets = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};

    // route A: one seamless reverse pass through classifier and denoiser
    auto state = dn.state();
    zero_grads(state);
    Tensor x_hat = dn.forward(x, Mode::Eval);
    Tensor probs = softmax_rows(cls.forward_logits(x_hat, Mode::Eval));
    Tensor g_logits(probs.shape);
    for (int r = 0; r < 2; ++r)
        for (int l = 0; l < 3; ++l) g_logits.at2(r, l) = (probs.at2(r, l) - targets[r][l]) / 2.0;
    const Tensor g_z = cls.backward_logits(g_logits);
    dn.backward(g_z);
    std::vector<double> route_a;
    for (auto& p : state)
        if (p.trainable) route_a.insert(route_a.end(), p.tensor->grad.begin(), p.tensor->grad.end());

    // route B: the same exact grad-at-z fed through chain_to_params
    chain_to_params(dn, x, g_z);
    std::vector<double> route_b;
    for (auto& p : state)
        if (p.trainable) route_b.insert(route_b.end(), p.tensor->grad.begin(), p.tensor->grad.end());

    double scale = 1e-12, err = 0.0;
    for (double v : route_a) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < route_a.size(); ++i) err = std::max(err, std::abs(route_a[i] - route_b[i]));
    s.add("chain_rule/fo_identity", err / scale, 1e-10);
}

}  // namespace

CheckResult fd_check(const std::string& name, std::vector<double> point,
                     const std::function<double(const std::vector<double>&)>& objective,
                     const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
                     double rel_tol, double step) {
    const double err = fd_rel_error(std::move(point), objective, gradient, step);
    return {name, err, rel_tol, err <= rel_tol};
}

std::vector<CheckResult> run_gradcheck(std::uint64_t seed, int n_seeds) {
    Suite s{{}, seed, n_seeds};
    check_conv2d(s);
    check_conv_transpose(s);
    check_maxpool(s);
    check_relu(s);
    check_batchnorm(s);
    check_dense(s);
    check_composite(s);
    check_rdunet(s);
    check_encoder(s);
    check_cge_quadratic(s);
    check_rge_cosine(s);
    check_chain_identity(s);
    return s.results;
}

}  // namespace zocert
