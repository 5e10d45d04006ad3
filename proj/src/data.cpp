#include "zocert/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "zocert/rng.hpp"

namespace zocert {

namespace {

void paint(Tensor& img, int c_count, int size, int klass, Rng& rng, double fg) {
    auto set_px = [&](int y, int x) {
        for (int c = 0; c < c_count; ++c) img.data[(static_cast<std::size_t>(c) * size + y) * size + x] = fg;
    };
    const int mid = size / 2;
    switch (klass % 5) {
        case 0: {  // horizontal bar near the middle rows
            const int t = 2 + static_cast<int>(rng.below(2));
            const int r0 = mid - 2 + static_cast<int>(rng.below(3));
            for (int y = r0; y < r0 + t; ++y)
                for (int x = 0; x < size; ++x) set_px(y, x);
            break;
        }
        case 1: {  // vertical bar near the middle columns
            const int t = 2 + static_cast<int>(rng.below(2));
            const int c0 = mid - 2 + static_cast<int>(rng.below(3));
            for (int x = c0; x < c0 + t; ++x)
                for (int y = 0; y < size; ++y) set_px(y, x);
            break;
        }
        case 2: {  // filled disk around the center
            const int cy = mid - 1 + static_cast<int>(rng.below(3));
            const int cx = mid - 1 + static_cast<int>(rng.below(3));
            const int r = 3 + static_cast<int>(rng.below(3));
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) set_px(y, x);
            break;
        }
        case 3: {  // cross
            const int r0 = mid - 1 + static_cast<int>(rng.below(2));
            for (int y = r0; y < r0 + 2; ++y)
                for (int x = 0; x < size; ++x) set_px(y, x);
            for (int x = r0; x < r0 + 2; ++x)
                for (int y = 0; y < size; ++y) set_px(y, x);
            break;
        }
        default: {  // frame
            const int m = 1 + static_cast<int>(rng.below(2));
            for (int y = m; y < size - m; ++y)
                for (int x = m; x < size - m; ++x)
                    if (y < m + 2 || y >= size - m - 2 || x < m + 2 || x >= size - m - 2) set_px(y, x);
            break;
        }
    }
}

std::uint32_t read_be32(std::ifstream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw ValidationError("idx: " + path + ": truncated while reading " + what);
    }
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

Dataset generate_synthetic(int n_per_class, const SyntheticSpec& spec, std::uint64_t seed,
                           const std::string& split) {
    if (spec.image_size < 8) throw ValidationError("synthetic: image_size must be >= 8");
    if (spec.classes < 2 || spec.classes > 5) throw ValidationError("synthetic: classes must be in [2,5]");
    if (n_per_class < 1) throw ValidationError("synthetic: n_per_class must be >= 1");
    if (!(spec.contrast > 0.0 && spec.contrast <= 1.0)) {
        throw ValidationError("synthetic: contrast must be in (0, 1]");
    }

    const std::uint64_t split_tag = (split == "train") ? stream::kDataTrain : stream::kDataTest;
    const int n = n_per_class * spec.classes;
    Dataset ds;
    ds.images = Tensor({n, spec.channels, spec.image_size, spec.image_size});
    ds.labels.resize(n);
    ds.num_classes = spec.classes;
    ds.split = split;
    ds.seed = seed;

    const double bg = 0.5 - spec.contrast / 2.0, fg = 0.5 + spec.contrast / 2.0;
    int idx = 0;
    for (int k = 0; k < spec.classes; ++k) {
        for (int j = 0; j < n_per_class; ++j, ++idx) {
            Rng rng(derive_seed(seed, {split_tag, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)}));
            Tensor img({spec.channels, spec.image_size, spec.image_size}, bg);
            paint(img, spec.channels, spec.image_size, k, rng, fg);
            for (double& v : img.data) {
                v += rng.uniform(-spec.jitter, spec.jitter);
                v = std::min(1.0, std::max(0.0, v));
            }
            set_batch_slice(ds.images, idx, img);
            ds.labels[idx] = k;
        }
    }
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw ValidationError("idx: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw ValidationError("idx: cannot open " + labels_path);

    const std::uint32_t img_magic = read_be32(imgs, images_path, "magic");
    if (img_magic != 0x00000803u) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "0x%08x (expected 0x00000803) at offset 0", img_magic);
        throw ValidationError("idx: " + images_path + ": bad image magic " + buf);
    }
    const std::uint32_t n_images = read_be32(imgs, images_path, "count");
    const std::uint32_t rows = read_be32(imgs, images_path, "rows");
    const std::uint32_t cols = read_be32(imgs, images_path, "cols");

    const std::uint32_t lab_magic = read_be32(labs, labels_path, "magic");
    if (lab_magic != 0x00000801u) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "0x%08x (expected 0x00000801) at offset 0", lab_magic);
        throw ValidationError("idx: " + labels_path + ": bad label magic " + buf);
    }
    const std::uint32_t n_labels = read_be32(labs, labels_path, "count");
    if (n_images != n_labels) {
        throw ValidationError("idx: count mismatch: " + images_path + " has " + std::to_string(n_images) +
                              " images, " + labels_path + " has " + std::to_string(n_labels) + " labels");
    }

    const std::size_t expect_bytes = static_cast<std::size_t>(n_images) * rows * cols;
    std::vector<unsigned char> pixels(expect_bytes);
    imgs.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(expect_bytes));
    if (static_cast<std::size_t>(imgs.gcount()) != expect_bytes) {
        throw ValidationError("idx: " + images_path + ": expected " + std::to_string(expect_bytes + 16) +
                              " bytes total, got " + std::to_string(16 + imgs.gcount()));
    }
    std::vector<unsigned char> raw_labels(n_labels);
    labs.read(reinterpret_cast<char*>(raw_labels.data()), n_labels);
    if (static_cast<std::size_t>(labs.gcount()) != n_labels) {
        throw ValidationError("idx: " + labels_path + ": expected " + std::to_string(n_labels + 8) +
                              " bytes total, got " + std::to_string(8 + labs.gcount()));
    }

    Dataset ds;
    ds.images = Tensor({static_cast<int>(n_images), 1, static_cast<int>(rows), static_cast<int>(cols)});
    for (std::size_t i = 0; i < expect_bytes; ++i) ds.images.data[i] = pixels[i] / 255.0;
    ds.labels.resize(n_labels);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        ds.labels[i] = raw_labels[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    ds.split = "idx";
    return ds;
}

Tensor gaussian_noise(const std::vector<int>& shape, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ValidationError("gaussian_noise: sigma must be >= 0");
    Tensor out(shape);
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (double& v : out.data) v = sigma * rng.normal();
    return out;
}

NoisySample make_noisy(const Tensor& x, double sigma, std::uint64_t root_seed, int epoch, int example_index) {
    NoisySample s;
    s.x = x;
    s.sigma = sigma;
    s.eta = gaussian_noise(x.shape, sigma,
                           derive_seed(root_seed, {stream::kNoise, static_cast<std::uint64_t>(epoch),
                                                   static_cast<std::uint64_t>(example_index)}));
    s.x_star = add(x, s.eta);
    return s;
}

}  // namespace zocert
