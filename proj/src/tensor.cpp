#include "zocert/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace zocert {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ValidationError("tensor shape has non-positive dimension " + shape_to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    data.assign(shape_numel(shape), fill);
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(s);
    if (shape_numel(t.shape) != values.size()) {
        throw ValidationError("tensor data length " + std::to_string(values.size()) +
                              " does not match shape " + shape_to_string(t.shape));
    }
    t.data = std::move(values);
    return t;
}

void Tensor::alloc_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& where) {
    if (!a.same_shape(b)) {
        throw ValidationError(where + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

void require_shape(const Tensor& t, const std::vector<int>& expect, const std::string& where) {
    if (t.shape != expect) {
        throw ValidationError(where + ": expected shape " + shape_to_string(expect) + ", got " + t.shape_str());
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor scale(const Tensor& a, double k) {
    Tensor out = a;
    for (double& v : out.data) v *= k;
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

Tensor clamp(const Tensor& a, double lo, double hi) {
    Tensor out = a;
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return out;
}

Tensor clamp_mask(const Tensor& a, double lo, double hi) {
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = (a.data[i] > lo && a.data[i] < hi) ? 1.0 : 0.0;
    return out;
}

Tensor slice_batch(const Tensor& batch, int index) {
    if (batch.rank() < 2) throw ValidationError("slice_batch: need rank >= 2, got " + batch.shape_str());
    std::vector<int> item_shape(batch.shape.begin() + 1, batch.shape.end());
    const std::size_t stride = shape_numel(item_shape);
    Tensor out(item_shape);
    std::copy_n(batch.data.begin() + static_cast<std::ptrdiff_t>(stride) * index, stride, out.data.begin());
    return out;
}

void set_batch_slice(Tensor& batch, int index, const Tensor& item) {
    std::vector<int> item_shape(batch.shape.begin() + 1, batch.shape.end());
    if (item.shape != item_shape) {
        throw ValidationError("set_batch_slice: expected " + shape_to_string(item_shape) + ", got " + item.shape_str());
    }
    std::copy(item.data.begin(), item.data.end(),
              batch.data.begin() + static_cast<std::ptrdiff_t>(item.numel()) * index);
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    if (items.empty()) throw ValidationError("stack_batch: empty batch");
    std::vector<int> shape;
    shape.push_back(static_cast<int>(items.size()));
    shape.insert(shape.end(), items[0].shape.begin(), items[0].shape.end());
    Tensor out(shape);
    for (std::size_t i = 0; i < items.size(); ++i) set_batch_slice(out, static_cast<int>(i), items[i]);
    return out;
}

}  // namespace zocert
