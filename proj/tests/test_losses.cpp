#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "zocert/layers.hpp"
#include "zocert/losses.hpp"

using namespace zocert;
using namespace zocert::testutil;

namespace {

std::vector<double> random_simplex(int n, Rng& rng) {
    std::vector<double> p(n);
    double s = 0.0;
    for (double& v : p) {
        v = -std::log(rng.uniform01_open());
        s += v;
    }
    for (double& v : p) v /= s;
    return p;
}

}  // namespace

TEST_CASE("soft_cross_entropy: one-hot match is 0, uniform mismatch is ln L") {
    const std::vector<double> hot = {0.0, 1.0, 0.0, 0.0};
    CHECK(soft_cross_entropy(hot, hot) == doctest::Approx(0.0).epsilon(1e-12));

    const std::vector<double> uniform(4, 0.25);
    CHECK(soft_cross_entropy(hot, uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(soft_cross_entropy(hot, uniform) == doctest::Approx(1.3863).epsilon(1e-4));
}

TEST_CASE("soft_cross_entropy: rejects negatives and non-normalized inputs; floors the log") {
    CHECK_THROWS_AS(soft_cross_entropy({-0.1, 1.1}, {0.5, 0.5}), ValidationError);
    CHECK_THROWS_AS(soft_cross_entropy({0.7, 0.7}, {0.5, 0.5}), ValidationError);
    // an exactly-zero denoised entry must not produce inf
    const double v = soft_cross_entropy({0.5, 0.5}, {1.0, 0.0});
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(0.5 * -std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("soft_cross_entropy(p, p) equals entropy(p); CE >= entropy") {
    Rng rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        const auto p = random_simplex(6, rng);
        CHECK(std::abs(soft_cross_entropy(p, p) - entropy(p)) <= 1e-9);
        const auto q = random_simplex(6, rng);
        CHECK(soft_cross_entropy(p, q) >= entropy(p) - 1e-9);  // Gibbs
    }
}

TEST_CASE("soft_ce gradient wrt logits matches finite differences") {
    Rng rng(7);
    Tensor logits = random_tensor({2, 5}, rng);
    std::vector<std::vector<double>> targets = {random_simplex(5, rng), random_simplex(5, rng)};
    auto objective = [&](const std::vector<double>& v) {
        Tensor l = logits;
        l.data = v;
        const Tensor p = softmax_rows(l);
        double total = 0.0;
        for (int r = 0; r < 2; ++r) {
            std::vector<double> row(p.data.begin() + r * 5, p.data.begin() + (r + 1) * 5);
            total += soft_cross_entropy(targets[r], row);
        }
        return total / 2.0;
    };
    const Tensor probs = softmax_rows(logits);
    const Tensor grad = soft_ce_logit_grad(probs, targets);
    double worst = 0.0;
    std::vector<double> point = logits.data;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double keep = point[i];
        point[i] = keep + 1e-6;
        const double plus = objective(point);
        point[i] = keep - 1e-6;
        const double minus = objective(point);
        point[i] = keep;
        worst = std::max(worst, std::abs(grad.data[i] - (plus - minus) / 2e-6));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("cosine_loss: aligned 0, opposed 2, 45 degrees, zero-norm fallback") {
    CHECK(cosine_loss({1.0, 2.0}, {1.0, 2.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_loss({1.0, 2.0}, {-1.0, -2.0}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cosine_loss({1.0, 0.0}, {1.0, 1.0}) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(cosine_loss({1.0, 0.0}, {1.0, 1.0}) == doctest::Approx(0.2929).epsilon(1e-4));
    CHECK(cosine_loss({0.0, 0.0}, {1.0, 1.0}) == 1.0);
}

TEST_CASE("cosine_loss: scale invariance and range") {
    Rng rng(9);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> v(4), w(4);
        for (auto& e : v) e = rng.normal();
        for (auto& e : w) e = rng.normal();
        const double base = cosine_loss(v, w);
        CHECK(base >= 0.0);
        CHECK(base <= 2.0);
        const double a = 0.1 + 5.0 * rng.uniform01();
        const double b = 0.1 + 5.0 * rng.uniform01();
        std::vector<double> va = v, wb = w;
        for (auto& e : va) e *= a;
        for (auto& e : wb) e *= b;
        CHECK(std::abs(cosine_loss(va, wb) - base) <= 1e-12);
    }
}

TEST_CASE("mmd_rbf: identical multisets give 0") {
    Rng rng(11);
    std::vector<std::vector<double>> X;
    for (int i = 0; i < 6; ++i) X.push_back(random_simplex(4, rng));
    CHECK(mmd_rbf(X, X) <= 1e-12);
}

TEST_CASE("mmd_rbf: singleton closed form 2 - 2 exp(-m^2/2)") {
    const std::vector<std::vector<double>> X = {{0.0}};
    const std::vector<std::vector<double>> Y = {{2.0}};
    const double got = mmd_rbf(X, Y, 1.0);
    CHECK(got == doctest::Approx(2.0 - 2.0 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(got == doctest::Approx(1.7293).epsilon(1e-4));
}

TEST_CASE("mmd_rbf: dimension mismatch rejected; identical points fall back to bandwidth 1") {
    CHECK_THROWS_AS(mmd_rbf({{1.0, 2.0}}, {{1.0}}), ValidationError);
    // all points identical: median distance is 0, fallback h = 1, MMD = 0
    const std::vector<std::vector<double>> same = {{0.5, 0.5}, {0.5, 0.5}};
    CHECK(mmd_rbf(same, same) == doctest::Approx(0.0));
}

TEST_CASE("mmd_rbf: symmetric and permutation invariant") {
    Rng rng(13);
    std::vector<std::vector<double>> X, Y;
    for (int i = 0; i < 5; ++i) X.push_back(random_simplex(3, rng));
    for (int i = 0; i < 7; ++i) Y.push_back(random_simplex(3, rng));
    const double xy = mmd_rbf(X, Y);
    CHECK(mmd_rbf(Y, X) == doctest::Approx(xy).epsilon(1e-14));
    auto Xp = X;
    std::reverse(Xp.begin(), Xp.end());
    CHECK(mmd_rbf(Xp, Y) == doctest::Approx(xy).epsilon(1e-14));
}

TEST_CASE("mmd_rbf: same-distribution samples stay below the permutation-test 95th percentile") {
    Rng rng(17);
    const int n = 200, dim = 3;
    std::vector<std::vector<double>> X, Y;
    for (int i = 0; i < n; ++i) {
        std::vector<double> a(dim), b(dim);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        X.push_back(a);
        Y.push_back(b);
    }
    const double observed = mmd_rbf(X, Y);

    // permutation oracle: pool, reshuffle, split
    std::vector<std::vector<double>> pool = X;
    pool.insert(pool.end(), Y.begin(), Y.end());
    std::vector<double> null_stats;
    Rng perm_rng(18);
    for (int rep = 0; rep < 200; ++rep) {
        for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(perm_rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(pool[i], pool[j]);
        }
        std::vector<std::vector<double>> A(pool.begin(), pool.begin() + n);
        std::vector<std::vector<double>> B(pool.begin() + n, pool.end());
        null_stats.push_back(mmd_rbf(A, B));
    }
    std::sort(null_stats.begin(), null_stats.end());
    const double p95 = null_stats[static_cast<std::size_t>(0.95 * null_stats.size())];
    CHECK(observed < p95);
}

TEST_CASE("total_loss: weight (0,0) reduces to CE; perfect denoising leaves only entropy") {
    Rng rng(19);
    std::vector<std::vector<double>> clean, den;
    for (int i = 0; i < 4; ++i) {
        clean.push_back(random_simplex(3, rng));
        den.push_back(random_simplex(3, rng));
    }
    const LossBreakdown zero = total_loss(clean, den, {0.0, 0.0});
    CHECK(zero.total == doctest::Approx(zero.ce).epsilon(1e-15));

    const LossBreakdown perfect = total_loss(clean, clean, {1.0, 1.0});
    CHECK(perfect.cs == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(perfect.mmd == doctest::Approx(0.0).epsilon(1e-12));
    double mean_entropy = 0.0;
    for (const auto& p : clean) mean_entropy += entropy(p) / 4.0;
    CHECK(perfect.total == doctest::Approx(mean_entropy).epsilon(1e-9));
}

TEST_CASE("total_loss: breakdown identity and linearity in each weight") {
    Rng rng(23);
    std::vector<std::vector<double>> clean, den;
    for (int i = 0; i < 5; ++i) {
        clean.push_back(random_simplex(4, rng));
        den.push_back(random_simplex(4, rng));
    }
    for (const LossWeights w : {LossWeights{1.0, 1.0}, LossWeights{0.5, 2.0}, LossWeights{3.0, 0.0}}) {
        const LossBreakdown b = total_loss(clean, den, w);
        CHECK(std::abs(b.total - (b.ce + w.lambda_cs * b.cs + w.lambda_mmd * b.mmd)) <= 1e-12);
    }
    // the per-term values do not depend on the weights
    const LossBreakdown b1 = total_loss(clean, den, {1.0, 1.0});
    const LossBreakdown b2 = total_loss(clean, den, {0.25, 4.0});
    CHECK(b1.ce == b2.ce);
    CHECK(b1.cs == b2.cs);
    CHECK(b1.mmd == b2.mmd);

    CHECK_THROWS_AS(total_loss({}, {}, LossWeights{}), ValidationError);
}
