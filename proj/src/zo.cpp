#include "zocert/zo.hpp"

#include <algorithm>
#include <cmath>

namespace zocert {

namespace {

Tensor sample_direction(Rng& rng, const std::vector<int>& shape, DirectionDist dist) {
    Tensor u(shape);
    double norm_sq;
    do {
        norm_sq = 0.0;
        for (double& v : u.data) {
            v = rng.normal();
            norm_sq += v * v;
        }
    } while (norm_sq < 1e-24);
    if (dist == DirectionDist::Sphere) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (double& v : u.data) v *= inv;
    }
    return u;
}

double checked_loss(const LossAt& loss_at, const Tensor& z, const char* who) {
    const double value = loss_at(z);
    if (!std::isfinite(value)) {
        throw NumericalError(std::string(who) + ": non-finite loss value; estimate aborted");
    }
    return value;
}

// RGE perturbations with the base loss already evaluated by the caller.
GradientEstimate rge_perturbations(const LossAt& loss_at, const Tensor& z0, double base_loss,
                                   const ZOConfig& cfg, Rng& rng) {
    if (cfg.q < 1) throw ValidationError("rge_estimate: q must be >= 1");
    if (!(cfg.xi > 0.0)) throw ValidationError("rge_estimate: xi must be > 0");
    const double d = static_cast<double>(z0.numel());
    const double dim_scale = (cfg.direction_dist == DirectionDist::Sphere) ? d : 1.0;
    GradientEstimate est;
    est.vector = Tensor(z0.shape);
    est.method = ZOMethod::RGE;
    est.xi = cfg.xi;
    est.queries_spent = static_cast<std::uint64_t>(cfg.q) + 1;
    Tensor pert(z0.shape);
    for (int k = 0; k < cfg.q; ++k) {
        const Tensor u = sample_direction(rng, z0.shape, cfg.direction_dist);
        for (std::size_t i = 0; i < pert.data.size(); ++i) pert.data[i] = z0.data[i] + cfg.xi * u.data[i];
        const double value = checked_loss(loss_at, pert, "rge_estimate");
        const double coeff = dim_scale / (cfg.xi * static_cast<double>(cfg.q)) * (value - base_loss);
        for (std::size_t i = 0; i < est.vector.data.size(); ++i) est.vector.data[i] += coeff * u.data[i];
    }
    return est;
}

GradientEstimate cge_perturbations(const LossAt& loss_at, const Tensor& z0, const ZOConfig& cfg) {
    if (!(cfg.xi > 0.0)) throw ValidationError("cge_estimate: xi must be > 0");
    GradientEstimate est;
    est.vector = Tensor(z0.shape);
    est.method = ZOMethod::CGE;
    est.xi = cfg.xi;
    est.queries_spent = 2 * static_cast<std::uint64_t>(z0.numel()) + 1;
    const double divisor = cfg.paper_literal_cge ? cfg.xi : 2.0 * cfg.xi;
    Tensor pert = z0;
    for (std::size_t k = 0; k < z0.numel(); ++k) {
        pert.data[k] = z0.data[k] + cfg.xi;
        const double plus = checked_loss(loss_at, pert, "cge_estimate");
        pert.data[k] = z0.data[k] - cfg.xi;
        const double minus = checked_loss(loss_at, pert, "cge_estimate");
        pert.data[k] = z0.data[k];
        est.vector.data[k] = (plus - minus) / divisor;
    }
    return est;
}

std::vector<std::vector<double>> snapshot_params(const std::vector<ParamRef>& state) {
    std::vector<std::vector<double>> snap;
    snap.reserve(state.size());
    for (const auto& p : state) snap.push_back(p.tensor->data);
    return snap;
}

void restore_params(const std::vector<ParamRef>& state, const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < state.size(); ++i) state[i].tensor->data = snap[i];
}

std::vector<int> epoch_order(int n, std::uint64_t root_seed, int epoch) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(root_seed, {stream::kShuffle, static_cast<std::uint64_t>(epoch)}));
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    return order;
}

std::vector<std::vector<double>> cache_clean_probs(const Dataset& train, BlackBox& f) {
    f.set_phase(QueryPhase::Setup);
    std::vector<std::vector<double>> probs(train.size());
    for (int i = 0; i < train.size(); ++i) probs[i] = f.query(slice_batch(train.images, i)).probabilities;
    f.set_phase(QueryPhase::Training);
    return probs;
}

void check_batching(int n, int batch_size) {
    if (batch_size < 2) throw ValidationError("train: batch_size must be >= 2 (batch norm)");
    if (n < batch_size) throw ValidationError("train: dataset smaller than one batch");
    if (n % batch_size == 1) {
        throw ValidationError("train: dataset size " + std::to_string(n) + " leaves a trailing batch of 1 "
                              "(batch norm needs >= 2); adjust batch_size");
    }
}

}  // namespace

GradientEstimate rge_estimate(const LossAt& loss_at, const Tensor& z0, const ZOConfig& cfg, Rng& rng) {
    const double base = checked_loss(loss_at, z0, "rge_estimate");
    return rge_perturbations(loss_at, z0, base, cfg, rng);
}

GradientEstimate rge_estimate(const LossAt& loss_at, const Tensor& z0, const ZOConfig& cfg) {
    Rng rng(cfg.seed);
    return rge_estimate(loss_at, z0, cfg, rng);
}

GradientEstimate cge_estimate(const LossAt& loss_at, const Tensor& z0, const ZOConfig& cfg) {
    checked_loss(loss_at, z0, "cge_estimate");  // base evaluation, kept for abort checks and accounting
    return cge_perturbations(loss_at, z0, cfg);
}

void chain_to_params(RDUNet& denoiser, const Tensor& x_star, const Tensor& g_z) {
    zero_grads(denoiser.state());
    const Tensor out = denoiser.forward(x_star, Mode::Eval);
    require_same_shape(out, g_z, "chain_to_params");
    denoiser.backward(g_z);
}

void chain_to_params(RDUNet& denoiser, Encoder& encoder, const Tensor& x_star, const Tensor& g_z) {
    zero_grads(denoiser.state());
    zero_grads(encoder.state());
    const Tensor x_hat = denoiser.forward(x_star, Mode::Eval);
    const Tensor z = encoder.forward(x_hat, Mode::Eval);
    require_same_shape(z, g_z, "chain_to_params");
    denoiser.backward(encoder.backward(g_z));
}

double scheduled_lr(double base_lr, int epoch, int total_epochs) {
    const int e0 = epoch - 1;
    double lr = base_lr;
    if (total_epochs >= 3 && 3 * e0 >= total_epochs) lr /= 10.0;
    if (total_epochs >= 3 && 3 * e0 >= 2 * total_epochs) lr /= 10.0;
    return lr;
}

TrainResult train_zo_ruds(const Dataset& train, RDUNet& denoiser, BlackBox& f, const LossWeights& weights,
                          const ZOConfig& zo, const TrainSchedule& sched, std::uint64_t root_seed) {
    TrainResult result;
    if (sched.epochs == 0) return result;
    check_batching(train.size(), sched.batch_size);
    const auto clean_probs = cache_clean_probs(train, f);
    const auto state = denoiser.state();
    auto last_good = snapshot_params(state);
    int step = 0;

    for (int epoch = 1; epoch <= sched.epochs && !result.diverged; ++epoch) {
        const double lr = scheduled_lr(sched.learning_rate, epoch, sched.epochs);
        const auto order = epoch_order(train.size(), root_seed, epoch);
        for (std::size_t start = 0; start < order.size(); start += sched.batch_size) {
            const int bsize = static_cast<int>(std::min<std::size_t>(sched.batch_size, order.size() - start));
            std::vector<int> idx(order.begin() + start, order.begin() + start + bsize);

            std::vector<Tensor> x_stars;
            std::vector<std::vector<double>> clean_batch;
            for (int i : idx) {
                x_stars.push_back(make_noisy(slice_batch(train.images, i), sched.sigma, root_seed, epoch, i).x_star);
                clean_batch.push_back(clean_probs[i]);
            }
            const Tensor xs = stack_batch(x_stars);

            zero_grads(state);
            const Tensor x_hat = denoiser.forward(xs, Mode::Train);

            std::vector<std::vector<double>> den_batch(bsize);
            for (int b = 0; b < bsize; ++b) {
                den_batch[b] = f.query(clamp(slice_batch(x_hat, b), 0.0, 1.0)).probabilities;
            }
            const LossBreakdown base = total_loss(clean_batch, den_batch, weights);
            if (!std::isfinite(base.total)) {
                restore_params(state, last_good);
                result.diverged = true;
                result.divergence_note = "non-finite loss at step " + std::to_string(step + 1);
                break;
            }
            last_good = snapshot_params(state);

            try {
                Tensor g_xhat(x_hat.shape);
                for (int b = 0; b < bsize; ++b) {
                    const Tensor z0 = slice_batch(x_hat, b);
                    auto loss_at = [&](const Tensor& z_pert) {
                        auto probe = den_batch;
                        probe[b] = f.query(clamp(z_pert, 0.0, 1.0)).probabilities;
                        return total_loss(clean_batch, probe, weights).total;
                    };
                    GradientEstimate est;
                    if (zo.method == ZOMethod::RGE) {
                        Rng rng(derive_seed(root_seed, {stream::kEstimator, static_cast<std::uint64_t>(epoch),
                                                        static_cast<std::uint64_t>(idx[b])}));
                        est = rge_perturbations(loss_at, z0, base.total, zo, rng);
                    } else {
                        est = cge_perturbations(loss_at, z0, zo);
                    }
                    set_batch_slice(g_xhat, b, est.vector);
                }
                denoiser.backward(g_xhat);
                sgd_step(state, lr);
            } catch (const NumericalError& e) {
                result.diverged = true;
                result.divergence_note = e.what();
                break;
            }

            ++step;
            result.log.push_back({step, epoch, base.ce, base.cs, base.mmd, base.total,
                                  f.counter().training(), 0});
            result.final_loss = base.total;
        }
    }
    return result;
}

TrainResult train_zo_ae_ruds(const Dataset& train, RDUNet& denoiser, Encoder& encoder, Decoder& decoder,
                             BlackBox& f, const LossWeights& weights, const ZOConfig& zo,
                             const TrainSchedule& sched, std::uint64_t root_seed) {
    TrainResult result;
    if (sched.epochs == 0) return result;
    check_batching(train.size(), sched.batch_size);
    const auto clean_probs = cache_clean_probs(train, f);

    std::vector<ParamRef> chained = denoiser.state();
    for (auto& p : encoder.state()) chained.push_back(p);
    const auto dec_state = decoder.state();
    std::vector<ParamRef> everything = chained;
    for (auto& p : dec_state) everything.push_back(p);

    std::vector<ParamRef> ae_state = encoder.state();
    for (auto& p : dec_state) ae_state.push_back(p);
    for (int warm = 1; warm <= sched.ae_warmup_epochs; ++warm) {
        const auto order = epoch_order(train.size(), root_seed, 1000000 + warm);
        for (std::size_t start = 0; start < order.size(); start += sched.batch_size) {
            const int bsize = static_cast<int>(std::min<std::size_t>(sched.batch_size, order.size() - start));
            std::vector<Tensor> x_stars;
            for (int b = 0; b < bsize; ++b) {
                const int i = order[start + b];
                x_stars.push_back(
                    make_noisy(slice_batch(train.images, i), sched.sigma, root_seed, 1000000 + warm, i).x_star);
            }
            const Tensor xs = stack_batch(x_stars);
            const Tensor x_hat = denoiser.forward(xs, Mode::Eval);  // frozen during warmup
            zero_grads(ae_state);
            const Tensor recon = decoder.forward(encoder.forward(x_hat, Mode::Train));
            Tensor g(recon.shape);
            const double scale_mse = 2.0 / static_cast<double>(recon.numel());
            for (std::size_t i = 0; i < recon.data.size(); ++i) {
                g.data[i] = scale_mse * (recon.data[i] - x_hat.data[i]);
            }
            encoder.backward(decoder.backward(g));
            sgd_step(ae_state, sched.decoder_recon_lr);
        }
    }

    auto last_good = snapshot_params(everything);
    int step = 0;

    for (int epoch = 1; epoch <= sched.epochs && !result.diverged; ++epoch) {
        const double lr = scheduled_lr(sched.learning_rate, epoch, sched.epochs);
        const double dec_lr = scheduled_lr(sched.decoder_recon_lr, epoch, sched.epochs);
        const auto order = epoch_order(train.size(), root_seed, epoch);
        for (std::size_t start = 0; start < order.size(); start += sched.batch_size) {
            const int bsize = static_cast<int>(std::min<std::size_t>(sched.batch_size, order.size() - start));
            std::vector<int> idx(order.begin() + start, order.begin() + start + bsize);

            std::vector<Tensor> x_stars;
            std::vector<std::vector<double>> clean_batch;
            for (int i : idx) {
                x_stars.push_back(make_noisy(slice_batch(train.images, i), sched.sigma, root_seed, epoch, i).x_star);
                clean_batch.push_back(clean_probs[i]);
            }
            const Tensor xs = stack_batch(x_stars);

            zero_grads(chained);
            const Tensor x_hat = denoiser.forward(xs, Mode::Train);
            const Tensor z = encoder.forward(x_hat, Mode::Train);

            auto query_through_decoder = [&](const Tensor& z_single) {
                Tensor zz = z_single;
                zz.shape = {1, static_cast<int>(z_single.numel())};
                const Tensor img = decoder.forward(zz);
                return f.query(clamp(slice_batch(img, 0), 0.0, 1.0)).probabilities;
            };

            std::vector<std::vector<double>> den_batch(bsize);
            for (int b = 0; b < bsize; ++b) den_batch[b] = query_through_decoder(slice_batch(z, b));
            const LossBreakdown base = total_loss(clean_batch, den_batch, weights);
            if (!std::isfinite(base.total)) {
                restore_params(everything, last_good);
                result.diverged = true;
                result.divergence_note = "non-finite loss at step " + std::to_string(step + 1);
                break;
            }
            last_good = snapshot_params(everything);

            try {
                Tensor g_z(z.shape);
                for (int b = 0; b < bsize; ++b) {
                    const Tensor z0 = slice_batch(z, b);
                    auto loss_at = [&](const Tensor& z_pert) {
                        auto probe = den_batch;
                        probe[b] = query_through_decoder(z_pert);
                        return total_loss(clean_batch, probe, weights).total;
                    };
                    GradientEstimate est;
                    if (zo.method == ZOMethod::CGE) {
                        est = cge_perturbations(loss_at, z0, zo);
                    } else {
                        Rng rng(derive_seed(root_seed, {stream::kEstimator, static_cast<std::uint64_t>(epoch),
                                                        static_cast<std::uint64_t>(idx[b])}));
                        est = rge_perturbations(loss_at, z0, base.total, zo, rng);
                    }
                    set_batch_slice(g_z, b, est.vector);
                }
                denoiser.backward(encoder.backward(g_z));
                sgd_step(chained, lr);

                if (!sched.freeze_decoder) {
                    // decoder trains on its own side of the composite: reconstruct
                    // the denoised image from the (detached) latent
                    zero_grads(dec_state);
                    const Tensor recon = decoder.forward(z);
                    Tensor g_rec(recon.shape);
                    const double scale_mse = 2.0 / static_cast<double>(recon.numel());
                    for (std::size_t i = 0; i < recon.data.size(); ++i) {
                        g_rec.data[i] = scale_mse * (recon.data[i] - x_hat.data[i]);
                    }
                    decoder.backward(g_rec);
                    sgd_step(dec_state, dec_lr);
                }
            } catch (const NumericalError& e) {
                result.diverged = true;
                result.divergence_note = e.what();
                break;
            }

            ++step;
            result.log.push_back({step, epoch, base.ce, base.cs, base.mmd, base.total,
                                  f.counter().training(), 0});
            result.final_loss = base.total;
        }
    }
    return result;
}

TrainResult train_fo_ds(const Dataset& train, RDUNet& denoiser, WhiteBoxHandle& f, const TrainSchedule& sched,
                        std::uint64_t root_seed) {
    TrainResult result;
    if (sched.epochs == 0) return result;
    check_batching(train.size(), sched.batch_size);
    const auto state = denoiser.state();
    auto last_good = snapshot_params(state);
    int step = 0;

    // clean-probability targets are constant across epochs
    std::vector<std::vector<double>> clean_probs(train.size());
    for (int i = 0; i < train.size(); ++i) {
        Tensor x = slice_batch(train.images, i);
        x.shape = {1, x.shape[0], x.shape[1], x.shape[2]};
        clean_probs[i] = softmax_rows(f.forward_logits(x)).data;
    }

    for (int epoch = 1; epoch <= sched.epochs && !result.diverged; ++epoch) {
        const double lr = scheduled_lr(sched.learning_rate, epoch, sched.epochs);
        const auto order = epoch_order(train.size(), root_seed, epoch);
        for (std::size_t start = 0; start < order.size(); start += sched.batch_size) {
            const int bsize = static_cast<int>(std::min<std::size_t>(sched.batch_size, order.size() - start));
            std::vector<int> idx(order.begin() + start, order.begin() + start + bsize);

            std::vector<Tensor> xs_items, x_items;
            std::vector<std::vector<double>> targets;
            for (int i : idx) {
                const Tensor x = slice_batch(train.images, i);
                xs_items.push_back(make_noisy(x, sched.sigma, root_seed, epoch, i).x_star);
                x_items.push_back(x);
                targets.push_back(clean_probs[i]);
            }
            const Tensor xs = stack_batch(xs_items);
            const Tensor x_clean = stack_batch(x_items);

            zero_grads(state);
            const Tensor x_hat = denoiser.forward(xs, Mode::Train);
            const Tensor x_in = clamp(x_hat, 0.0, 1.0);
            const Tensor mask = clamp_mask(x_hat, 0.0, 1.0);
            const Tensor probs = softmax_rows(f.forward_logits(x_in));

            double mse = 0.0, ce = 0.0;
            for (std::size_t i = 0; i < x_hat.data.size(); ++i) {
                const double d = x_hat.data[i] - x_clean.data[i];
                mse += d * d;
            }
            mse /= static_cast<double>(x_hat.numel());
            for (int b = 0; b < bsize; ++b) {
                std::vector<double> row(probs.data.begin() + static_cast<std::ptrdiff_t>(b) * f.num_classes(),
                                        probs.data.begin() + static_cast<std::ptrdiff_t>(b + 1) * f.num_classes());
                ce += soft_cross_entropy(targets[b], row);
            }
            ce /= static_cast<double>(bsize);
            const double total = mse + ce;
            if (!std::isfinite(total)) {
                restore_params(state, last_good);
                result.diverged = true;
                result.divergence_note = "non-finite loss at step " + std::to_string(step + 1);
                break;
            }
            last_good = snapshot_params(state);

            try {
                const Tensor g_logits = soft_ce_logit_grad(probs, targets);
                Tensor g_hat = f.backward_to_input(g_logits);
                const double mse_scale = 2.0 / static_cast<double>(x_hat.numel());
                for (std::size_t i = 0; i < g_hat.data.size(); ++i) {
                    g_hat.data[i] = g_hat.data[i] * mask.data[i] +
                                    mse_scale * (x_hat.data[i] - x_clean.data[i]);
                }
                denoiser.backward(g_hat);
                sgd_step(state, lr);
            } catch (const NumericalError& e) {
                result.diverged = true;
                result.divergence_note = e.what();
                break;
            }

            ++step;
            // run-log schema is shared across trainers: FO-DS has no CS/MMD
            // terms, so total = mse + ce and mse is recoverable as total - ce
            result.log.push_back({step, epoch, ce, 0.0, 0.0, total, 0, 0});
            result.final_loss = total;
        }
    }
    return result;
}

}  // namespace zocert
