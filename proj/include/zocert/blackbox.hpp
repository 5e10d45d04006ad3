#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "zocert/models.hpp"
#include "zocert/tensor.hpp"

namespace zocert {

// The only information that ever crosses the black-box boundary: softmax
// probabilities and the predicted label. No gradients, by construction.
struct BlackBoxReply {
    std::vector<double> probabilities;
    int predicted_label = 0;
};

enum class QueryPhase { Setup, Training, Certification };

// Monotone atomic query accounting with a per-phase breakdown. One increment
// per single-input evaluation.
class QueryCounter {
public:
    void record(QueryPhase phase, std::uint64_t k = 1) {
        switch (phase) {
            case QueryPhase::Setup: setup_ += k; break;
            case QueryPhase::Training: training_ += k; break;
            case QueryPhase::Certification: certification_ += k; break;
        }
    }
    std::uint64_t setup() const { return setup_.load(); }
    std::uint64_t training() const { return training_.load(); }
    std::uint64_t certification() const { return certification_.load(); }
    std::uint64_t total() const { return setup() + training() + certification(); }

private:
    std::atomic<std::uint64_t> setup_{0}, training_{0}, certification_{0};
};

// Query-only interface. Everything the defense trainers and the certifier
// may reach: inputs in, labels and probabilities out, plus the counter.
class BlackBox {
public:
    virtual ~BlackBox() = default;
    virtual BlackBoxReply query(const Tensor& x) = 0;
    virtual std::vector<BlackBoxReply> query_batch(const Tensor& x_nchw);
    virtual const QueryCounter& counter() const = 0;
    virtual void set_phase(QueryPhase phase) = 0;
    virtual int num_classes() const = 0;
};

// Production black box: owns the target classifier privately and exposes only
// query(). Inputs must be in [0,1] and match the configured shape; violations
// are rejected without incrementing the counter. Copies share the counter, so
// per-thread clones aggregate into one total.
class SealedClassifier : public BlackBox {
public:
    explicit SealedClassifier(Classifier classifier);

    BlackBoxReply query(const Tensor& x) override;
    const QueryCounter& counter() const override { return *counter_; }
    void set_phase(QueryPhase phase) override { phase_ = phase; }
    int num_classes() const override { return net_.config().num_classes; }

private:
    Classifier net_;  // never exposed
    std::shared_ptr<QueryCounter> counter_;
    QueryPhase phase_ = QueryPhase::Setup;
};

// First-order access for the FO-DS baseline only. Constructed directly from a
// Classifier; there is deliberately no way to obtain one from a BlackBox.
class WhiteBoxHandle {
public:
    explicit WhiteBoxHandle(Classifier& classifier) : net_(classifier) {}

    Tensor forward_logits(const Tensor& x) { return net_.forward_logits(x, Mode::Eval); }
    // Backprop to the classifier input; classifier parameters stay frozen
    // (their grads are scratch space, never stepped).
    Tensor backward_to_input(const Tensor& grad_logits) { return net_.backward_logits(grad_logits); }
    int num_classes() const { return net_.config().num_classes; }

private:
    Classifier& net_;
};

int argmax_first(const std::vector<double>& v);

}  // namespace zocert
