#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zocert/certify.hpp"
#include "zocert/losses.hpp"
#include "zocert/zo.hpp"

namespace zocert {

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | idx
    int classes = 3;
    int channels = 3;
    int image_size = 16;
    int train_per_class = 20;
    int test_per_class = 20;
    double jitter = 0.05;
    double contrast = 0.7;
    std::uint64_t seed = 42;
    std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
};

struct TargetTrainConfig {
    int epochs = 40;
    int batch_size = 8;
    double learning_rate = 0.05;
};

// Model configs hold only their own hyperparameters; input channels and image
// size come from the dataset section when models are built.
struct ExperimentConfig {
    DatasetConfig dataset;
    int rdunet_base_channels = 8;
    int rdunet_depth = 2;
    int ae_latent_dim = 48;
    int ae_enc_channels[2] = {8, 16};
    std::vector<int> classifier_channels = {8, 16};
    ZOConfig zo;
    LossWeights loss;
    TrainSchedule train;
    TargetTrainConfig target;
    CertifyConfig certify;
    std::string classifier_checkpoint = "target/classifier.ckpt";
    std::uint64_t seed = 1;
    std::string out_dir = "runs/out";
    int threads = 2;
};

// Parses the line-oriented "[section]" / "key = value" format. Unknown
// sections or keys and malformed values are all collected and reported
// together.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Cross-field validation; returns every detected inconsistency (empty means
// valid). load_config_file already runs this and throws with the full list.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

// Exact resolved-config rendering, written next to every run's outputs.
std::string render_config(const ExperimentConfig& cfg);

}  // namespace zocert
