#include "zocert/losses.hpp"

#include <algorithm>
#include <cmath>

namespace zocert {

namespace {

constexpr double kLogFloor = 1e-12;

void check_probability(const std::vector<double>& p, const char* who) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw ValidationError(std::string(who) + ": negative probability entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw ValidationError(std::string(who) + ": probabilities sum to " + std::to_string(sum) + ", expected 1");
    }
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

double soft_cross_entropy(const std::vector<double>& p_clean, const std::vector<double>& p_denoised) {
    if (p_clean.size() != p_denoised.size()) {
        throw ValidationError("soft_cross_entropy: length mismatch " + std::to_string(p_clean.size()) + " vs " +
                              std::to_string(p_denoised.size()));
    }
    check_probability(p_clean, "soft_cross_entropy");
    check_probability(p_denoised, "soft_cross_entropy");
    double loss = 0.0;
    for (std::size_t i = 0; i < p_clean.size(); ++i) {
        loss -= p_clean[i] * std::log(std::max(p_denoised[i], kLogFloor));
    }
    return loss;
}

double cosine_loss(const std::vector<double>& v, const std::vector<double>& w) {
    if (v.size() != w.size()) {
        throw ValidationError("cosine_loss: length mismatch " + std::to_string(v.size()) + " vs " +
                              std::to_string(w.size()));
    }
    double vv = 0.0, ww = 0.0, vw = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        vv += v[i] * v[i];
        ww += w[i] * w[i];
        vw += v[i] * w[i];
    }
    if (vv <= 0.0 || ww <= 0.0) return 1.0;  // zero-norm vector: orthogonal-equivalent
    return 1.0 - vw / std::sqrt(vv * ww);
}

double mmd_rbf(const std::vector<std::vector<double>>& X, const std::vector<std::vector<double>>& Y,
               std::optional<double> bandwidth) {
    if (X.empty() || Y.empty()) throw ValidationError("mmd_rbf: need non-empty sample sets");
    const std::size_t dim = X[0].size();
    for (const auto& v : X)
        if (v.size() != dim) throw ValidationError("mmd_rbf: dimension mismatch inside X");
    for (const auto& v : Y)
        if (v.size() != dim) throw ValidationError("mmd_rbf: dimension mismatch between X and Y");
    if (bandwidth && *bandwidth <= 0.0) throw ValidationError("mmd_rbf: bandwidth must be positive");

    double h;
    if (bandwidth) {
        h = *bandwidth;
    } else {
        // median pairwise distance over the pooled sample
        std::vector<const std::vector<double>*> pool;
        for (const auto& v : X) pool.push_back(&v);
        for (const auto& v : Y) pool.push_back(&v);
        std::vector<double> dists;
        for (std::size_t i = 0; i < pool.size(); ++i)
            for (std::size_t j = i + 1; j < pool.size(); ++j)
                dists.push_back(std::sqrt(sq_dist(*pool[i], *pool[j])));
        if (dists.empty()) {
            h = 1.0;
        } else {
            std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
            h = dists[dists.size() / 2];
            if (h <= 0.0) h = 1.0;  // all points coincide
        }
    }

    const double inv = 1.0 / (2.0 * h * h);
    const double nx = static_cast<double>(X.size());
    const double ny = static_cast<double>(Y.size());
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (const auto& a : X)
        for (const auto& b : X) kxx += std::exp(-sq_dist(a, b) * inv);
    for (const auto& a : Y)
        for (const auto& b : Y) kyy += std::exp(-sq_dist(a, b) * inv);
    for (const auto& a : X)
        for (const auto& b : Y) kxy += std::exp(-sq_dist(a, b) * inv);
    const double mmd2 = kxx / (nx * nx) + kyy / (ny * ny) - 2.0 * kxy / (nx * ny);
    return std::max(mmd2, 0.0);  // V-statistic is non-negative up to roundoff
}

LossBreakdown total_loss(const std::vector<std::vector<double>>& clean_probs,
                         const std::vector<std::vector<double>>& denoised_probs, const LossWeights& weights) {
    if (clean_probs.empty() || clean_probs.size() != denoised_probs.size()) {
        throw ValidationError("total_loss: batch sizes " + std::to_string(clean_probs.size()) + " vs " +
                              std::to_string(denoised_probs.size()) + " (need equal, non-empty)");
    }
    if (!(weights.lambda_cs >= 0.0) || !(weights.lambda_mmd >= 0.0)) {
        throw ValidationError("total_loss: loss weights must be finite and non-negative");
    }
    LossBreakdown out;
    const double n = static_cast<double>(clean_probs.size());
    for (std::size_t i = 0; i < clean_probs.size(); ++i) {
        out.ce += soft_cross_entropy(clean_probs[i], denoised_probs[i]);
        out.cs += cosine_loss(clean_probs[i], denoised_probs[i]);
    }
    out.ce /= n;
    out.cs /= n;
    out.mmd = mmd_rbf(clean_probs, denoised_probs);
    out.total = out.ce + weights.lambda_cs * out.cs + weights.lambda_mmd * out.mmd;
    return out;
}

Tensor soft_ce_logit_grad(const Tensor& probs, const std::vector<std::vector<double>>& targets) {
    const int L = probs.shape.back();
    const int n = static_cast<int>(probs.numel()) / L;
    if (static_cast<std::size_t>(n) != targets.size()) {
        throw ValidationError("soft_ce_logit_grad: batch mismatch");
    }
    Tensor grad(probs.shape);
    for (int r = 0; r < n; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * L;
        double active_mass = 0.0;  // sum of target mass whose log term is above the floor
        for (int l = 0; l < L; ++l) {
            if (probs.data[off + l] > kLogFloor) active_mass += targets[r][l];
        }
        for (int j = 0; j < L; ++j) {
            double g = probs.data[off + j] * active_mass;
            if (probs.data[off + j] > kLogFloor) g -= targets[r][j];
            grad.data[off + j] = g / static_cast<double>(n);
        }
    }
    return grad;
}

}  // namespace zocert
