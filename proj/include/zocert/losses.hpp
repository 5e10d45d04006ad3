#pragma once

#include <optional>
#include <vector>

#include "zocert/tensor.hpp"

namespace zocert {

struct LossWeights {
    double lambda_cs = 1.0;
    double lambda_mmd = 1.0;
};

struct LossBreakdown {
    double ce = 0.0;
    double cs = 0.0;
    double mmd = 0.0;
    double total = 0.0;
};

// -sum_l p_clean[l] * log(p_denoised[l]), log floored at 1e-12. Both inputs
// must be probability vectors (non-negative, summing to 1 within 1e-6).
double soft_cross_entropy(const std::vector<double>& p_clean, const std::vector<double>& p_denoised);

// 1 - cos(v, w) in [0, 2]; a zero-norm argument counts as orthogonal (loss 1).
double cosine_loss(const std::vector<double>& v, const std::vector<double>& w);

// Biased V-statistic MMD^2 with Gaussian kernel exp(-||a-b||^2 / (2 h^2)).
// Without an explicit bandwidth, h is the median pairwise distance over the
// pooled sample (fallback 1 when all points coincide).
double mmd_rbf(const std::vector<std::vector<double>>& X, const std::vector<std::vector<double>>& Y,
               std::optional<double> bandwidth = std::nullopt);

// CE and CS averaged over the batch; MMD once over the batch as two sample
// sets; total = ce + lambda_cs*cs + lambda_mmd*mmd.
LossBreakdown total_loss(const std::vector<std::vector<double>>& clean_probs,
                         const std::vector<std::vector<double>>& denoised_probs, const LossWeights& weights);

// Gradient of mean_i soft_cross_entropy(target_i, softmax(logits_i)) wrt the
// logits, with the same 1e-12 floor masked out. Used by the first-order paths.
Tensor soft_ce_logit_grad(const Tensor& probs, const std::vector<std::vector<double>>& targets);

double entropy(const std::vector<double>& p);

}  // namespace zocert
