#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "zocert/common.hpp"

namespace zocert {

// Dense row-major real tensor. 64-bit everywhere: desk scale makes speed
// secondary to verifiable gradient checks. `grad`, when allocated, always
// matches `data` in length.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty unless alloc_grad() was called

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0);
    static Tensor from(std::vector<int> s, std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
    int rank() const { return static_cast<int>(shape.size()); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    void alloc_grad();
    void zero_grad();
    bool has_grad() const { return !grad.empty(); }

    bool all_finite() const;

    double& at4(int n, int c, int h, int w) {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at4(int n, int c, int h, int w) const {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double& at2(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    double at2(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

    std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Throws ValidationError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& where);
void require_shape(const Tensor& t, const std::vector<int>& expect, const std::string& where);

// Elementwise helpers used across modules.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

// Clamp to [lo, hi]; mask(x) reports which entries were inside the open
// interval (gradient passes only there).
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor clamp_mask(const Tensor& a, double lo, double hi);

// Rows of an NCHW batch as single-example CHW tensors and back.
Tensor slice_batch(const Tensor& batch, int index);
void set_batch_slice(Tensor& batch, int index, const Tensor& item);
Tensor stack_batch(const std::vector<Tensor>& items);

}  // namespace zocert
