#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "test_util.hpp"
#include "zocert/checkpoint.hpp"
#include "zocert/models.hpp"

using namespace zocert;
using namespace zocert::testutil;

namespace {

RDUNetConfig small_rdunet_cfg() {
    RDUNetConfig cfg;
    cfg.input_channels = 3;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.image_size = 16;
    return cfg;
}

}  // namespace

TEST_CASE("rdunet: zeroed residual head makes the denoiser an exact identity") {
    RDUNet net(small_rdunet_cfg());
    Rng rng(1);
    net.init(rng);  // init zeroes the head
    Rng data_rng(2);
    const Tensor x = random_tensor({2, 3, 16, 16}, data_rng);
    const Tensor out = net.forward(x, Mode::Eval);
    CHECK(out.data == x.data);  // bitwise: denoised = x_star - 0
    CHECK(l2_norm(net.last_residual()) == 0.0);
}

TEST_CASE("rdunet: output shape equals input shape (3x16x16, depth 2)") {
    RDUNet net(small_rdunet_cfg());
    Rng rng(3);
    net.init(rng);
    const Tensor x = random_tensor({1, 3, 16, 16}, rng);
    const Tensor out = net.forward(x, Mode::Eval);
    CHECK(out.shape == x.shape);
}

TEST_CASE("rdunet: feedforward resolutions strictly decrease, feedback strictly increase to input size") {
    RDUNetConfig cfg = small_rdunet_cfg();
    cfg.depth = 3;
    cfg.image_size = 16;
    RDUNet net(cfg);
    Rng rng(4);
    net.init(rng);
    net.forward(random_tensor({2, 3, 16, 16}, rng), Mode::Train);
    const auto& ff = net.feedforward_sizes();
    const auto& fb = net.feedback_sizes();
    REQUIRE(ff.size() == 4);  // stem + 3 pooled stages
    for (std::size_t i = 1; i < ff.size(); ++i) CHECK(ff[i] < ff[i - 1]);
    REQUIRE(fb.size() == 3);
    for (std::size_t i = 1; i < fb.size(); ++i) CHECK(fb[i] > fb[i - 1]);
    CHECK(fb.back() == cfg.image_size);
}

TEST_CASE("rdunet: rejects inputs and configs that do not line up") {
    RDUNet net(small_rdunet_cfg());
    CHECK_THROWS_AS(net.forward(Tensor({1, 3, 8, 8}), Mode::Eval), ValidationError);
    CHECK_THROWS_AS(net.forward(Tensor({1, 1, 16, 16}), Mode::Eval), ValidationError);
    RDUNetConfig bad = small_rdunet_cfg();
    bad.image_size = 10;  // 10 / 2 = 5, second halving impossible
    CHECK_THROWS_AS(RDUNet{bad}, ValidationError);
}

TEST_CASE("rdunet: parameter count is a pure function of the config") {
    auto param_count = [](const RDUNetConfig& cfg) {
        RDUNet net(cfg);
        std::size_t n = 0;
        for (auto& p : net.state()) n += p.tensor->numel();
        return n;
    };
    const std::size_t a = param_count(small_rdunet_cfg());
    const std::size_t b = param_count(small_rdunet_cfg());
    CHECK(a == b);
    RDUNetConfig wider = small_rdunet_cfg();
    wider.base_channels *= 2;
    CHECK(param_count(wider) > a);
}

TEST_CASE("rdunet: checkpoint round-trip reproduces outputs bit-exactly") {
    RDUNet net(small_rdunet_cfg());
    Rng rng(5);
    net.init(rng);
    // make the head non-trivial so the checkpoint actually matters
    for (auto& p : net.state())
        if (p.name.rfind("denoiser.head", 0) == 0)
            for (double& v : p.tensor->data) v = 0.1 * rng.normal();
    Rng data_rng(6);
    const Tensor x = random_tensor({2, 3, 16, 16}, data_rng);
    const Tensor before = net.forward(x, Mode::Eval);

    const std::string path = "/tmp/zocert_test_rdunet.ckpt";
    save_state(path, net.state());
    RDUNet reloaded(small_rdunet_cfg());
    load_state(path, reloaded.state());
    const Tensor after = reloaded.forward(x, Mode::Eval);
    CHECK(before.data == after.data);
    std::remove(path.c_str());
}

TEST_CASE("encoder/decoder: 3x16x16 -> z(48) -> 3x16x16 and the latent is a true reduction") {
    AEConfig cfg;
    cfg.input_channels = 3;
    cfg.image_size = 16;
    cfg.latent_dim = 48;
    Encoder enc(cfg);
    Decoder dec(cfg);
    Rng rng(7);
    enc.init(rng);
    dec.init(rng);
    const Tensor x = random_tensor({2, 3, 16, 16}, rng);
    const Tensor z = enc.forward(x, Mode::Eval);
    CHECK(z.shape == std::vector<int>{2, 48});
    CHECK(z.numel() / 2 < x.numel() / 2);  // d_r < d per example
    const Tensor back = dec.forward(z);
    CHECK(back.shape == std::vector<int>{2, 3, 16, 16});

    AEConfig too_big = cfg;
    too_big.latent_dim = 3 * 16 * 16;
    CHECK_THROWS_AS(Encoder{too_big}, ValidationError);

    // d_r mismatch at the decoder
    Tensor wrong_z({2, 13});
    CHECK_THROWS_AS(dec.forward(wrong_z), ValidationError);
}

TEST_CASE("classifier: zeroed final layer yields uniform probabilities") {
    ClassifierConfig cfg;
    cfg.input_channels = 3;
    cfg.image_size = 16;
    cfg.conv_channels = {4, 8};
    cfg.num_classes = 4;
    Classifier cls(cfg);
    Rng rng(8);
    cls.init(rng);
    for (auto& p : cls.state()) {
        if (p.name.rfind("classifier.fc", 0) == 0) {
            std::fill(p.tensor->data.begin(), p.tensor->data.end(), 0.0);
        }
    }
    const Tensor x = random_tensor({1, 3, 16, 16}, rng, 0.2);
    const Tensor probs = softmax_rows(cls.forward_logits(x, Mode::Eval));
    for (double v : probs.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("classifier: probabilities sum to 1 within 1e-9 and eval mode is deterministic") {
    ClassifierConfig cfg;
    cfg.input_channels = 1;
    cfg.image_size = 8;
    cfg.conv_channels = {4};
    cfg.num_classes = 3;
    Classifier cls(cfg);
    Rng rng(9);
    cls.init(rng);
    const Tensor x = random_tensor({3, 1, 8, 8}, rng, 0.5);
    const Tensor p1 = softmax_rows(cls.forward_logits(x, Mode::Eval));
    const Tensor p2 = softmax_rows(cls.forward_logits(x, Mode::Eval));
    CHECK(p1.data == p2.data);
    for (int r = 0; r < 3; ++r) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += p1.at2(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    CHECK_THROWS_AS(cls.forward_logits(Tensor({1, 2, 8, 8}), Mode::Eval), ValidationError);
}
