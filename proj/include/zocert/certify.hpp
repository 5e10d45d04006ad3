#pragma once

#include <cstdint>
#include <vector>

#include "zocert/data.hpp"
#include "zocert/tensor.hpp"

namespace zocert {

inline constexpr int kAbstain = -1;

struct CertifyConfig {
    double sigma = 0.5;
    int n0 = 100;    // selection samples
    int n = 1000;    // estimation samples
    double alpha = 0.001;
    std::vector<double> radii_grid = {0.0, 0.25, 0.5, 0.75};
};

struct CertificationResult {
    int label = kAbstain;
    double radius = 0.0;
    double p_lower = 0.0;
    std::vector<int> counts;  // per-class tallies over both stages; sums to n0 + n
    std::uint64_t queries_spent = 0;
};

// Phi^{-1}: rational initial approximation refined by Halley steps on the
// erfc-based Gaussian CDF. Absolute error <= 1e-9 over [1e-12, 1 - 1e-12].
double gaussian_quantile(double p);
double gaussian_cdf(double x);

// One-sided exact lower confidence bound at level 1 - alpha for a binomial
// proportion, via the Beta-quantile characterization solved by bisection on
// the regularized incomplete beta function.
double clopper_pearson_lower(int k, int n, double alpha);

// Regularized incomplete beta I_x(a, b) (continued fraction).
double reg_inc_beta(double a, double b, double x);

// Anything that maps a noise-perturbed input to a black-box label.
class NoisyLabeler {
public:
    virtual ~NoisyLabeler() = default;
    virtual int label(const Tensor& x_star) = 0;
    virtual int num_classes() const = 0;
};

// Draws `count` i.i.d. eta ~ N(0, sigma^2 I) and tallies the labels of
// model(x + eta). Spends exactly `count` queries.
std::vector<int> sample_under_noise(NoisyLabeler& model, const Tensor& x, int count, double sigma,
                                    std::uint64_t seed);

// Two-stage Monte-Carlo certification: selection with n0 samples, one-sided
// bound with n fresh samples; radius = sigma * Phi^{-1}(p_lower) via the
// p_bar_s = 1 - p_lower collapse, ABSTAIN when p_lower <= 1/2.
CertificationResult certify(NoisyLabeler& model, const Tensor& x, const CertifyConfig& cfg, std::uint64_t seed);

struct CurvePoint {
    double radius = 0.0;
    double certified_accuracy = 0.0;
    int n_examples = 0;
};

// Fraction of examples certified correct with radius >= r, per grid point.
// Non-increasing in r by construction; the r = 0 entry is the SCA.
std::vector<CurvePoint> certified_accuracy_curve(const std::vector<CertificationResult>& results,
                                                 const std::vector<int>& true_labels,
                                                 const std::vector<double>& radii_grid);

void validate_certify_config(const CertifyConfig& cfg);

}  // namespace zocert
