#include "zocert/blackbox.hpp"

namespace zocert {

int argmax_first(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

std::vector<BlackBoxReply> BlackBox::query_batch(const Tensor& x_nchw) {
    std::vector<BlackBoxReply> replies;
    replies.reserve(x_nchw.shape[0]);
    for (int i = 0; i < x_nchw.shape[0]; ++i) replies.push_back(query(slice_batch(x_nchw, i)));
    return replies;
}

SealedClassifier::SealedClassifier(Classifier classifier)
    : net_(std::move(classifier)), counter_(std::make_shared<QueryCounter>()) {}

BlackBoxReply SealedClassifier::query(const Tensor& x) {
    const auto& cfg = net_.config();
    const std::vector<int> expect = {cfg.input_channels, cfg.image_size, cfg.image_size};
    if (x.shape != expect) {
        throw ValidationError("blackbox: input " + x.shape_str() + " does not match expected " +
                              shape_to_string(expect));
    }
    for (double v : x.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("blackbox: input pixel outside the valid range [0,1]");
        }
    }
    Tensor batched = x;
    batched.shape = {1, cfg.input_channels, cfg.image_size, cfg.image_size};
    const Tensor probs = softmax_rows(net_.forward_logits(batched, Mode::Eval));
    counter_->record(phase_, 1);
    BlackBoxReply reply;
    reply.probabilities = probs.data;
    reply.predicted_label = argmax_first(reply.probabilities);
    return reply;
}

}  // namespace zocert
