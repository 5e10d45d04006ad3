#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zocert/tensor.hpp"

namespace zocert {

struct Dataset {
    Tensor images;            // [N, C, H, W], values in [0, 1]
    std::vector<int> labels;  // in [0, L)
    int num_classes = 0;
    std::string split;  // "train" or "test"
    std::uint64_t seed = 0;

    int size() const { return images.rank() >= 1 ? images.shape[0] : 0; }
};

struct NoisySample {
    Tensor x;
    Tensor eta;
    Tensor x_star;  // x + eta, exactly
    double sigma = 0.0;
};

struct SyntheticSpec {
    int classes = 3;
    int channels = 3;
    int image_size = 16;
    double jitter = 0.05;
    double contrast = 0.7;  // foreground minus background intensity
};

// L geometric pattern classes (horizontal bar / vertical bar / disk / cross /
// frame) with randomized position and scale plus additive pixel jitter.
// Deterministic under (spec, seed, split); train and test draw from disjoint
// seed streams.
Dataset generate_synthetic(int n_per_class, const SyntheticSpec& spec, std::uint64_t seed,
                           const std::string& split);

// IDX ingestion (big-endian magic 0x00000803 for images, 0x00000801 for
// labels); pixels scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// i.i.d. N(0, sigma^2) entries, deterministic under seed.
Tensor gaussian_noise(const std::vector<int>& shape, double sigma, std::uint64_t seed);

// Noise for a given (epoch, example) pair, derived from the root seed with a
// counter-based substream so it is independent of iteration order and of the
// training method consuming it.
NoisySample make_noisy(const Tensor& x, double sigma, std::uint64_t root_seed, int epoch, int example_index);

}  // namespace zocert
