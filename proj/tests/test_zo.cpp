#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "zocert/zo.hpp"

using namespace zocert;
using namespace zocert::testutil;

namespace {

RDUNetConfig tiny_dcfg() {
    RDUNetConfig cfg;
    cfg.input_channels = 1;
    cfg.base_channels = 2;
    cfg.depth = 2;
    cfg.image_size = 8;
    return cfg;
}

// Black box that remembers every queried input; used for the seed-derivation
// audit and the residual-identity check.
class ProbeBox : public BlackBox {
public:
    BlackBoxReply query(const Tensor& x) override {
        counter_.record(phase_, 1);
        if (phase_ == QueryPhase::Training && seen.size() < 64) seen.push_back(x);
        double s = 0.0;
        for (double v : x.data) s += v;
        const double a = 1.0 / (1.0 + std::exp(-s / static_cast<double>(x.numel())));
        return {{a, 1.0 - a}, a >= 0.5 ? 0 : 1};
    }
    const QueryCounter& counter() const override { return counter_; }
    void set_phase(QueryPhase p) override { phase_ = p; }
    int num_classes() const override { return 2; }

    std::vector<Tensor> seen;

private:
    QueryCounter counter_;
    QueryPhase phase_ = QueryPhase::Setup;
};

}  // namespace

TEST_CASE("rge: constant loss gives the exact zero vector") {
    auto loss = [](const Tensor&) { return 3.25; };
    ZOConfig cfg;
    cfg.q = 50;
    cfg.xi = 0.01;
    cfg.seed = 4;
    Tensor z0({6}, 0.5);
    const GradientEstimate est = rge_estimate(loss, z0, cfg);
    for (double v : est.vector.data) CHECK(v == 0.0);
    CHECK(est.queries_spent == 51);
}

TEST_CASE("rge: mean over 1e5 single-direction estimates recovers a linear gradient (d=10)") {
    const int d = 10;
    const double c = 1.7;
    auto loss = [&](const Tensor& z) { return c * z.data[0]; };
    Tensor z0({d});
    ZOConfig cfg;
    cfg.q = 1;
    cfg.xi = 0.01;
    Rng rng(99);
    Tensor mean({d});
    const int m = 100000;
    for (int rep = 0; rep < m; ++rep) {
        const GradientEstimate est = rge_estimate(loss, z0, cfg, rng);
        for (int i = 0; i < d; ++i) mean.data[i] += est.vector.data[i] / static_cast<double>(m);
    }
    CHECK(std::abs(mean.data[0] - c) / c <= 0.02);  // E[d u u^T] = I on the sphere
    for (int i = 1; i < d; ++i) CHECK(std::abs(mean.data[i]) <= 0.02 * c);
}

TEST_CASE("rge: ||z||^2 at e1 with q=1e4 lands within 5% of (2,0,...,0)") {
    const int d = 5;
    auto loss = [](const Tensor& z) {
        double s = 0.0;
        for (double v : z.data) s += v * v;
        return s;
    };
    Tensor z0({d});
    z0.data[0] = 1.0;
    ZOConfig cfg;
    cfg.q = 10000;
    cfg.xi = 1e-4;
    cfg.seed = 123;
    const GradientEstimate est = rge_estimate(loss, z0, cfg);
    CHECK(est.queries_spent == 10001);
    Tensor truth({d});
    truth.data[0] = 2.0;
    CHECK(l2_norm(sub(est.vector, truth)) / 2.0 <= 0.05);
}

TEST_CASE("rge: normal-direction variant remains a consistent estimator") {
    const int d = 8;
    std::vector<double> a = {0.3, -1.1, 0.7, 2.0, -0.4, 0.9, -1.5, 0.2};
    auto loss = [&](const Tensor& z) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += a[i] * z.data[i];
        return s;
    };
    Tensor z0({d});
    ZOConfig cfg;
    cfg.q = 200;
    cfg.xi = 1e-3;
    cfg.direction_dist = DirectionDist::Normal;
    Rng rng(7);
    Tensor mean({d});
    const int m = 500;
    for (int rep = 0; rep < m; ++rep) {
        const GradientEstimate est = rge_estimate(loss, z0, cfg, rng);
        for (int i = 0; i < d; ++i) mean.data[i] += est.vector.data[i] / static_cast<double>(m);
    }
    for (int i = 0; i < d; ++i) CHECK(mean.data[i] == doctest::Approx(a[i]).epsilon(0.05));
}

TEST_CASE("rge: aborts on non-finite loss") {
    auto loss = [](const Tensor& z) { return z.data[0] > 0.0 ? std::nan("") : 0.0; };
    ZOConfig cfg;
    cfg.q = 8;
    cfg.xi = 0.5;
    cfg.seed = 3;
    Tensor z0({3});
    CHECK_THROWS_AS(rge_estimate(loss, z0, cfg), NumericalError);
}

TEST_CASE("cge: exact on affine functions") {
    const std::vector<double> a = {2.0, -3.0, 0.5, 4.0};
    auto loss = [&](const Tensor& z) {
        double s = 1.0;
        for (int i = 0; i < 4; ++i) s += a[i] * z.data[i];
        return s;
    };
    Tensor z0 = Tensor::from({4}, {0.3, -0.2, 1.0, 0.0});
    ZOConfig cfg;
    cfg.method = ZOMethod::CGE;
    cfg.xi = 0.005;
    const GradientEstimate est = cge_estimate(loss, z0, cfg);
    CHECK(est.queries_spent == 9);
    for (int i = 0; i < 4; ++i) CHECK(est.vector.data[i] == doctest::Approx(a[i]).epsilon(1e-12));
}

TEST_CASE("cge: quadratic gives 2*z0 within 1e-9; latent dim 48 spends 97 queries") {
    auto loss = [](const Tensor& z) {
        double s = 0.0;
        for (double v : z.data) s += v * v;
        return s;
    };
    Rng rng(31);
    Tensor z0 = random_tensor({48}, rng);
    ZOConfig cfg;
    cfg.method = ZOMethod::CGE;
    cfg.xi = 0.005;
    const GradientEstimate est = cge_estimate(loss, z0, cfg);
    CHECK(est.queries_spent == 97);  // 2 * d_r + 1
    for (int i = 0; i < 48; ++i) CHECK(std::abs(est.vector.data[i] - 2.0 * z0.data[i]) <= 1e-9);
}

TEST_CASE("cge: cubic Taylor check, 3 + xi^2 at xi = 0.005") {
    auto loss = [](const Tensor& z) { return z.data[0] * z.data[0] * z.data[0]; };
    Tensor z0 = Tensor::from({2}, {1.0, 0.0});
    ZOConfig cfg;
    cfg.method = ZOMethod::CGE;
    cfg.xi = 0.005;
    const GradientEstimate est = cge_estimate(loss, z0, cfg);
    CHECK(est.vector.data[0] == doctest::Approx(3.000025).epsilon(1e-10));
}

TEST_CASE("cge: paper-literal divisor doubles the estimate") {
    auto loss = [](const Tensor& z) { return 5.0 * z.data[0]; };
    Tensor z0({1});
    ZOConfig cfg;
    cfg.method = ZOMethod::CGE;
    cfg.xi = 0.01;
    const GradientEstimate half = cge_estimate(loss, z0, cfg);
    cfg.paper_literal_cge = true;
    const GradientEstimate full = cge_estimate(loss, z0, cfg);
    CHECK(full.vector.data[0] == doctest::Approx(2.0 * half.vector.data[0]).epsilon(1e-14));
}

TEST_CASE("chain_to_params: zero estimate gives zero parameter gradients") {
    RDUNet dn(tiny_dcfg());
    Rng rng(41);
    dn.init(rng);
    Tensor x({1, 1, 8, 8}, 0.3);
    chain_to_params(dn, x, Tensor({1, 1, 8, 8}, 0.0));
    for (auto& p : dn.state()) {
        if (!p.trainable) continue;
        for (double g : p.tensor->grad) CHECK(g == 0.0);
    }
}

TEST_CASE("chain_to_params: residual-identity head bias gradient is -sum(g_z)") {
    // with a zeroed head, denoised = x* - (W_head * feat + b); d denoised / d b_c = -1
    RDUNet dn(tiny_dcfg());
    Rng rng(43);
    dn.init(rng);
    Tensor x({2, 1, 8, 8}, 0.4);
    Rng grng(44);
    const Tensor g_z = random_tensor({2, 1, 8, 8}, grng);
    chain_to_params(dn, x, g_z);
    double gsum = 0.0;
    for (double v : g_z.data) gsum += v;
    for (auto& p : dn.state()) {
        if (p.name == "denoiser.head.bias") {
            CHECK(p.tensor->grad[0] == doctest::Approx(-gsum).epsilon(1e-12));
        }
    }
}

TEST_CASE("scheduled_lr drops by 10 at one third and two thirds of the budget") {
    CHECK(scheduled_lr(1.0, 1, 30) == doctest::Approx(1.0));
    CHECK(scheduled_lr(1.0, 10, 30) == doctest::Approx(1.0));
    CHECK(scheduled_lr(1.0, 11, 30) == doctest::Approx(0.1));
    CHECK(scheduled_lr(1.0, 20, 30) == doctest::Approx(0.1));
    CHECK(scheduled_lr(1.0, 21, 30) == doctest::Approx(0.01));
    CHECK(scheduled_lr(1.0, 30, 30) == doctest::Approx(0.01));
}

TEST_CASE("train_zo_ruds: 0 epochs leaves parameters untouched and spends 0 queries") {
    SyntheticSpec spec{2, 1, 8, 0.02};
    const Dataset train = generate_synthetic(2, spec, 3, "train");
    RDUNet dn(tiny_dcfg());
    Rng rng(51);
    dn.init(rng);
    std::vector<std::vector<double>> before;
    for (auto& p : dn.state()) before.push_back(p.tensor->data);

    ProbeBox box;
    ZOConfig zo;
    TrainSchedule sched;
    sched.epochs = 0;
    const TrainResult res = train_zo_ruds(train, dn, box, LossWeights{}, zo, sched, 1);
    CHECK(res.log.empty());
    CHECK(box.counter().total() == 0);
    std::size_t i = 0;
    for (auto& p : dn.state()) CHECK(p.tensor->data == before[i++]);
}

TEST_CASE("train_zo_ruds: 1 epoch, N=8, B=4, q=20 runs 2 steps and 168 training queries") {
    SyntheticSpec spec{2, 1, 8, 0.02};
    const Dataset train = generate_synthetic(4, spec, 5, "train");  // N = 8
    RDUNet dn(tiny_dcfg());
    Rng rng(53);
    dn.init(rng);
    ProbeBox box;
    ZOConfig zo;
    zo.q = 20;
    TrainSchedule sched;
    sched.epochs = 1;
    sched.batch_size = 4;
    sched.learning_rate = 1e-4;
    sched.sigma = 0.5;
    const TrainResult res = train_zo_ruds(train, dn, box, LossWeights{}, zo, sched, 7);
    CHECK(res.log.size() == 2);
    CHECK(box.counter().training() == 168);  // 8 * (20 + 1)
}

TEST_CASE("zeroed residual head at init: the first queried x_hat equals x_star exactly") {
    SyntheticSpec spec{2, 1, 8, 0.02};
    const Dataset train = generate_synthetic(2, spec, 5, "train");  // N = 4
    const std::uint64_t root = 19;

    RDUNet dn(tiny_dcfg());
    Rng rng(55);
    dn.init(rng);
    ProbeBox box;
    ZOConfig zo;
    zo.q = 1;
    TrainSchedule sched;
    sched.epochs = 1;
    sched.batch_size = 4;
    sched.learning_rate = 0.0;  // keep the identity through the whole epoch
    sched.sigma = 0.5;
    train_zo_ruds(train, dn, box, LossWeights{}, zo, sched, root);

    REQUIRE(box.seen.size() >= 4);
    // training queries arrive base-first per batch; batch order comes from the
    // epoch-1 shuffle, compare against x + eta for each dataset index
    int matched = 0;
    for (int i = 0; i < train.size(); ++i) {
        const NoisySample s = make_noisy(slice_batch(train.images, i), sched.sigma, root, 1, i);
        const Tensor expected = clamp(s.x_star, 0.0, 1.0);
        for (const auto& q : box.seen) {
            if (q.data == expected.data) {
                ++matched;
                break;
            }
        }
    }
    CHECK(matched == train.size());
}

TEST_CASE("fixed seed gives bit-identical run logs; the noise stream ignores the estimator") {
    SyntheticSpec spec{2, 1, 8, 0.02};
    const Dataset train = generate_synthetic(2, spec, 5, "train");
    auto run_once = [&](ZOMethod method) {
        RDUNet dn(tiny_dcfg());
        Rng rng(57);
        dn.init(rng);
        ProbeBox box;
        ZOConfig zo;
        zo.q = 3;
        zo.method = method;
        TrainSchedule sched;
        sched.epochs = 1;
        sched.batch_size = 4;
        sched.learning_rate = 0.0;
        sched.sigma = 0.5;
        TrainResult res = train_zo_ruds(train, dn, box, LossWeights{}, zo, sched, 23);
        return std::make_pair(res, box.seen);
    };
    const auto [log_a, seen_a] = run_once(ZOMethod::RGE);
    const auto [log_b, seen_b] = run_once(ZOMethod::RGE);
    REQUIRE(log_a.log.size() == log_b.log.size());
    for (std::size_t i = 0; i < log_a.log.size(); ++i) {
        CHECK(log_a.log[i].total == log_b.log[i].total);
        CHECK(log_a.log[i].ce == log_b.log[i].ce);
        CHECK(log_a.log[i].queries_total == log_b.log[i].queries_total);
    }
    // paired comparison: a CGE run sees the same noisy base points (x_hat = x*
    // at lr 0 with the identity init), i.e. the eta stream is estimator-free
    const auto [log_c, seen_c] = run_once(ZOMethod::CGE);
    REQUIRE(!seen_a.empty());
    CHECK(seen_a.front().data == seen_c.front().data);
}

TEST_CASE("train_zo_ae_ruds: trains without divergence and logs every loss component") {
    SyntheticSpec spec{2, 1, 8, 0.02};
    const Dataset train = generate_synthetic(2, spec, 5, "train");
    RDUNet dn(tiny_dcfg());
    AEConfig acfg;
    acfg.input_channels = 1;
    acfg.image_size = 8;
    acfg.latent_dim = 6;
    acfg.enc_channels[0] = 2;
    acfg.enc_channels[1] = 3;
    Encoder enc(acfg);
    Decoder dec(acfg);
    Rng rng(61);
    dn.init(rng);
    enc.init(rng);
    dec.init(rng);
    ProbeBox box;
    ZOConfig zo;
    zo.method = ZOMethod::CGE;
    TrainSchedule sched;
    sched.epochs = 2;
    sched.batch_size = 4;
    sched.learning_rate = 1e-3;
    sched.sigma = 0.5;
    const TrainResult res = train_zo_ae_ruds(train, dn, enc, dec, box, LossWeights{}, zo, sched, 29);
    CHECK_FALSE(res.diverged);
    CHECK(res.log.size() == 2);
    for (const auto& row : res.log) {
        CHECK(std::isfinite(row.ce));
        CHECK(std::isfinite(row.cs));
        CHECK(std::isfinite(row.mmd));
        CHECK(std::abs(row.total - (row.ce + row.cs + row.mmd)) <= 1e-12);
    }
    CHECK(box.counter().training() == 2ULL * 4ULL * 13ULL);  // E * N * (2 d_r + 1)
}

TEST_CASE("train_fo_ds: identity denoiser on noiseless input has zero MSE term") {
    SyntheticSpec spec{2, 1, 8, 0.0};
    const Dataset train = generate_synthetic(2, spec, 5, "train");
    RDUNet dn(tiny_dcfg());
    Rng rng(63);
    dn.init(rng);

    ClassifierConfig ccfg;
    ccfg.input_channels = 1;
    ccfg.image_size = 8;
    ccfg.conv_channels = {4};
    ccfg.num_classes = 2;
    Classifier cls(ccfg);
    cls.init(rng);
    WhiteBoxHandle wb(cls);

    TrainSchedule sched;
    sched.epochs = 1;
    sched.batch_size = 4;
    sched.learning_rate = 0.0;
    sched.sigma = 0.0;  // noiseless: x* = x and D(x*) = x
    const TrainResult res = train_fo_ds(train, dn, wb, sched, 31);
    REQUIRE(!res.log.empty());
    for (const auto& row : res.log) {
        CHECK(row.total - row.ce == doctest::Approx(0.0).epsilon(1e-12));  // MSE term is total - ce
        CHECK(row.queries_total == 0);  // white-box baseline: zero black-box queries
    }
}

TEST_CASE("fo-ds objective: MSE + stability CE gradient matches finite differences") {
    // the exact objective and backward seeds used by train_fo_ds, checked on
    // one small batch relative to every denoiser parameter
    Rng rng(67);
    RDUNet dn(tiny_dcfg());
    dn.init(rng);
    for (auto& p : dn.state()) {
        if (p.name.rfind("denoiser.head", 0) == 0) {
            for (double& v : p.tensor->data) v = 0.05 * rng.normal();
        }
    }
    ClassifierConfig ccfg;
    ccfg.input_channels = 1;
    ccfg.image_size = 8;
    ccfg.conv_channels = {4};
    ccfg.num_classes = 2;
    Classifier cls(ccfg);
    cls.init(rng);
    WhiteBoxHandle wb(cls);

    const Tensor x_clean = clamp(random_tensor({2, 1, 8, 8}, rng, 0.2), 0.05, 0.95);
    const Tensor xs = add(x_clean, random_tensor({2, 1, 8, 8}, rng, 0.3));
    const std::vector<std::vector<double>> targets = {{0.7, 0.3}, {0.2, 0.8}};

    auto state = dn.state();
    std::vector<double> flat;
    std::vector<char> trainable;
    for (auto& p : state) {
        flat.insert(flat.end(), p.tensor->data.begin(), p.tensor->data.end());
        trainable.insert(trainable.end(), p.tensor->data.size(), p.trainable ? 1 : 0);
    }
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
        const Tensor x_hat = dn.forward(xs, Mode::Train);
        const Tensor probs = softmax_rows(wb.forward_logits(clamp(x_hat, 0.0, 1.0)));
        double mse = 0.0;
        for (std::size_t i = 0; i < x_hat.data.size(); ++i) {
            const double di = x_hat.data[i] - x_clean.data[i];
            mse += di * di;
        }
        mse /= static_cast<double>(x_hat.numel());
        double ce = 0.0;
        for (int b = 0; b < 2; ++b) {
            std::vector<double> row(probs.data.begin() + b * 2, probs.data.begin() + (b + 1) * 2);
            ce += soft_cross_entropy(targets[b], row);
        }
        ce /= 2.0;
        return mse + ce;
    };
    auto gradient = [&](const std::vector<double>& v) {
        scatter(v);
        zero_grads(state);
        const Tensor x_hat = dn.forward(xs, Mode::Train);
        const Tensor mask = clamp_mask(x_hat, 0.0, 1.0);
        const Tensor probs = softmax_rows(wb.forward_logits(clamp(x_hat, 0.0, 1.0)));
        const Tensor g_logits = soft_ce_logit_grad(probs, targets);
        Tensor g_hat = wb.backward_to_input(g_logits);
        const double mse_scale = 2.0 / static_cast<double>(x_hat.numel());
        for (std::size_t i = 0; i < g_hat.data.size(); ++i) {
            g_hat.data[i] = g_hat.data[i] * mask.data[i] + mse_scale * (x_hat.data[i] - x_clean.data[i]);
        }
        dn.backward(g_hat);
        std::vector<double> g;
        for (auto& p : state) {
            if (p.trainable) g.insert(g.end(), p.tensor->grad.begin(), p.tensor->grad.end());
            else g.insert(g.end(), p.tensor->data.size(), 0.0);
        }
        return g;
    };

    const std::vector<double> g = gradient(flat);
    double scale = 1e-12;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (trainable[i]) scale = std::max(scale, std::abs(g[i]));
    double worst = 0.0;
    std::vector<double> point = flat;
    for (std::size_t i = 0; i < point.size(); ++i) {
        if (!trainable[i]) continue;
        const double keep = point[i];
        point[i] = keep + 1e-5;
        const double plus = objective(point);
        point[i] = keep - 1e-5;
        const double minus = objective(point);
        point[i] = keep;
        worst = std::max(worst, std::abs(g[i] - (plus - minus) / 2e-5));
    }
    CHECK(worst / scale <= 1e-3);
}
