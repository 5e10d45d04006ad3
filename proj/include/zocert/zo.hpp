#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zocert/blackbox.hpp"
#include "zocert/data.hpp"
#include "zocert/losses.hpp"
#include "zocert/models.hpp"

namespace zocert {

enum class ZOMethod { RGE, CGE };
enum class DirectionDist { Sphere, Normal };

struct ZOConfig {
    ZOMethod method = ZOMethod::RGE;
    int q = 20;                                         // RGE directions
    double xi = 0.005;                                  // smoothing step
    std::uint64_t seed = 0;
    DirectionDist direction_dist = DirectionDist::Sphere;
    bool paper_literal_cge = false;                     // divide central difference by xi instead of 2*xi
};

struct GradientEstimate {
    Tensor vector;
    ZOMethod method = ZOMethod::RGE;
    std::uint64_t queries_spent = 0;
    double xi = 0.0;
};

using LossAt = std::function<double(const Tensor&)>;

// Random gradient estimate: sum_k (d / (xi q)) (L(z0 + xi u_k) - L(z0)) u_k
// with u_k uniform on the unit sphere of dimension d = numel(z0). Exactly
// q + 1 loss evaluations. With Normal directions the scale drops the factor d
// (E[u u^T] = I already), keeping the estimator consistent.
GradientEstimate rge_estimate(const LossAt& loss_at, const Tensor& z0, const ZOConfig& cfg, Rng& rng);
GradientEstimate rge_estimate(const LossAt& loss_at, const Tensor& z0, const ZOConfig& cfg);

// Coordinate-wise estimate: g[k] = (L(z0 + xi e_k) - L(z0 - xi e_k)) / (2 xi).
// Exactly 2*dim + 1 evaluations (the base point is kept for logging).
GradientEstimate cge_estimate(const LossAt& loss_at, const Tensor& z0, const ZOConfig& cfg);

// Jacobian-transpose of the white-box path applied to g_z: runs the path
// forward at x_star (eval mode) and seeds its reverse pass with g_z. Gradients
// land in the models' parameter buffers.
void chain_to_params(RDUNet& denoiser, const Tensor& x_star, const Tensor& g_z);
void chain_to_params(RDUNet& denoiser, Encoder& encoder, const Tensor& x_star, const Tensor& g_z);

struct TrainSchedule {
    int epochs = 30;
    int batch_size = 4;
    double learning_rate = 1e-3;
    double sigma = 0.5;               // noise std; sigma^2 = 0.25 by default
    double decoder_recon_lr = 1e-2;   // white-box reconstruction step for the decoder
    bool freeze_decoder = false;
    // White-box autoencoder reconstruction epochs before any ZO step. Costs no
    // queries; the denoiser stays frozen. Breaks the cold start of training
    // the AE pair from scratch jointly with the ZO objective.
    int ae_warmup_epochs = 0;
};

struct RunLogRow {
    int step = 0;
    int epoch = 0;
    double ce = 0.0, cs = 0.0, mmd = 0.0, total = 0.0;
    std::uint64_t queries_total = 0;
    std::int64_t wall_ms = 0;  // written as 0: run logs must be byte-identical under a fixed seed
};

struct TrainResult {
    std::vector<RunLogRow> log;
    bool diverged = false;
    std::string divergence_note;
    double final_loss = 0.0;
};

// Learning rate divided by 10 at 1/3 and 2/3 of the epoch budget.
double scheduled_lr(double base_lr, int epoch, int total_epochs);

// Alg. 1: RGE at the denoised output x_hat = D(x + eta), chained through the
// denoiser, plain SGD. Black-box queries per batch: B * (q + 1); clean-image
// replies are cached once under the Setup phase.
TrainResult train_zo_ruds(const Dataset& train, RDUNet& denoiser, BlackBox& f, const LossWeights& weights,
                          const ZOConfig& zo, const TrainSchedule& sched, std::uint64_t root_seed);

// Alg. 2: estimate at the latent z = E(D(x + eta)) through the decoder-side
// composite, chain to denoiser + encoder; the decoder trains on a white-box
// reconstruction of the denoised image (freeze flag available). CGE spends
// 2*d_r + 1 queries per example; the RGE variant spends q + 1.
TrainResult train_zo_ae_ruds(const Dataset& train, RDUNet& denoiser, Encoder& encoder, Decoder& decoder,
                             BlackBox& f, const LossWeights& weights, const ZOConfig& zo,
                             const TrainSchedule& sched, std::uint64_t root_seed);

// First-order denoised-smoothing baseline: MSE + cross-entropy stability term
// with full backprop through a white-box classifier handle. No black-box
// queries.
TrainResult train_fo_ds(const Dataset& train, RDUNet& denoiser, WhiteBoxHandle& f, const TrainSchedule& sched,
                        std::uint64_t root_seed);

}  // namespace zocert
