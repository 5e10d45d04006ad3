#include "zocert/certify.hpp"

#include <algorithm>
#include <cmath>

#include "zocert/blackbox.hpp"
#include "zocert/rng.hpp"

namespace zocert {

double gaussian_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

namespace {

// Acklam's rational approximation to the normal quantile (~1e-9 relative).
double quantile_seed(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double beta_cont_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

namespace {

// Solves Phi(x) = q for q in (0, 0.5]. With x <= 0 the erfc argument is
// non-negative, so the CDF keeps full relative precision in the tail.
double quantile_lower_half(double q) {
    double x = quantile_seed(q);
    for (int i = 0; i < 3; ++i) {
        const double err = gaussian_cdf(x) - q;
        const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
        if (pdf <= 0.0) break;
        const double u = err / pdf;
        x -= u / (1.0 + 0.5 * x * u);  // Halley step
    }
    return x;
}

}  // namespace

double gaussian_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("gaussian_quantile: p must be in (0,1), got " + std::to_string(p));
    }
    if (p == 0.5) return 0.0;
    // mirror the upper half: 1 - p is exact for p >= 0.5, and the identity
    // quantile(p) = -quantile(1 - p) then holds to the last bit
    if (p > 0.5) return -quantile_lower_half(1.0 - p);
    return quantile_lower_half(p);
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                            b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cont_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) + b * std::log(1.0 - x) +
                          a * std::log(x)) *
                     beta_cont_fraction(b, a, 1.0 - x) / b;
}

double clopper_pearson_lower(int k, int n, double alpha) {
    if (n < 1) throw ValidationError("clopper_pearson_lower: n must be >= 1");
    if (k < 0 || k > n) {
        throw ValidationError("clopper_pearson_lower: k=" + std::to_string(k) + " outside [0," +
                              std::to_string(n) + "]");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("clopper_pearson_lower: alpha must be in (0,1)");
    if (k == 0) return 0.0;
    if (k == n) return std::exp(std::log(alpha) / static_cast<double>(n));
    // solve I_p(k, n-k+1) = alpha; the left side is P[Bin(n,p) >= k], increasing in p
    const double a = static_cast<double>(k), b = static_cast<double>(n - k + 1);
    double lo = 0.0, hi = static_cast<double>(k) / static_cast<double>(n);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (reg_inc_beta(a, b, mid) < alpha) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<int> sample_under_noise(NoisyLabeler& model, const Tensor& x, int count, double sigma,
                                    std::uint64_t seed) {
    if (count < 1) throw ValidationError("sample_under_noise: count must be >= 1");
    std::vector<int> tally(model.num_classes(), 0);
    Rng rng(seed);
    Tensor x_star(x.shape);
    for (int s = 0; s < count; ++s) {
        for (std::size_t i = 0; i < x.data.size(); ++i) x_star.data[i] = x.data[i] + sigma * rng.normal();
        const int label = model.label(x_star);
        if (label < 0 || label >= model.num_classes()) {
            throw NumericalError("sample_under_noise: label " + std::to_string(label) + " out of range");
        }
        ++tally[label];
    }
    return tally;
}

void validate_certify_config(const CertifyConfig& cfg) {
    if (!(cfg.sigma > 0.0)) throw ValidationError("certify: sigma must be > 0");
    if (cfg.n0 < 1 || cfg.n < 1) throw ValidationError("certify: n0 and n must be >= 1");
    if (cfg.n < cfg.n0) throw ValidationError("certify: n must be >= n0");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ValidationError("certify: alpha must be in (0,1)");
    if (cfg.radii_grid.empty() || cfg.radii_grid.front() != 0.0) {
        throw ValidationError("certify: radii_grid must start at 0");
    }
    if (!std::is_sorted(cfg.radii_grid.begin(), cfg.radii_grid.end())) {
        throw ValidationError("certify: radii_grid must be sorted ascending");
    }
}

CertificationResult certify(NoisyLabeler& model, const Tensor& x, const CertifyConfig& cfg, std::uint64_t seed) {
    validate_certify_config(cfg);
    const auto sel = sample_under_noise(model, x, cfg.n0, cfg.sigma,
                                        derive_seed(seed, {stream::kCertifySelect}));
    int c_hat = 0;
    for (int i = 1; i < static_cast<int>(sel.size()); ++i) {
        if (sel[i] > sel[c_hat]) c_hat = i;
    }
    const auto est = sample_under_noise(model, x, cfg.n, cfg.sigma,
                                        derive_seed(seed, {stream::kCertifyEstimate}));
    CertificationResult res;
    res.counts.resize(sel.size());
    for (std::size_t i = 0; i < sel.size(); ++i) res.counts[i] = sel[i] + est[i];
    res.queries_spent = static_cast<std::uint64_t>(cfg.n0) + static_cast<std::uint64_t>(cfg.n);
    res.p_lower = clopper_pearson_lower(est[c_hat], cfg.n, cfg.alpha);
    if (res.p_lower > 0.5) {
        res.label = c_hat;
        res.radius = cfg.sigma * gaussian_quantile(res.p_lower);
    } else {
        res.label = kAbstain;
        res.radius = 0.0;
    }
    return res;
}

std::vector<CurvePoint> certified_accuracy_curve(const std::vector<CertificationResult>& results,
                                                 const std::vector<int>& true_labels,
                                                 const std::vector<double>& radii_grid) {
    if (results.empty()) throw ValidationError("certified_accuracy_curve: empty result set");
    if (results.size() != true_labels.size()) {
        throw ValidationError("certified_accuracy_curve: results/labels size mismatch");
    }
    std::vector<CurvePoint> curve;
    for (double r : radii_grid) {
        int hits = 0;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].label != kAbstain && results[i].label == true_labels[i] && results[i].radius >= r) {
                ++hits;
            }
        }
        curve.push_back({r, static_cast<double>(hits) / static_cast<double>(results.size()),
                         static_cast<int>(results.size())});
    }
    return curve;
}

}  // namespace zocert
