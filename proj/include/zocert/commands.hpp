#pragma once

#include <string>
#include <vector>

#include "zocert/config.hpp"

namespace zocert {

// Exit codes shared with the CLI: 0 success, 2 validation error, 3 numerical
// failure. Commands throw ValidationError / NumericalError; the CLI maps them.

// Trains the target classifier on the configured dataset, then writes
// classifier.ckpt, dataset.ckpt, accuracy.csv and the resolved config into
// out_dir. Returns test accuracy.
double cmd_train_target(const ExperimentConfig& cfg, const std::string& out_dir);

// Trains a defense. method: zo-ruds | zo-ae-ruds | fo-ds; estimator: rge |
// cge | "" (method default). Writes denoiser.ckpt and runlog.csv. Returns the
// final training loss; throws NumericalError on divergence after writing the
// last finite checkpoint.
double cmd_defend(const ExperimentConfig& cfg, const std::string& method, const std::string& estimator,
                  const std::string& out_dir);

// Certifies the test set through the defense checkpoint (empty path =
// identity-denoiser passthrough baseline). Writes report.csv and curve.csv.
// Returns the SCA (certified accuracy at radius 0).
double cmd_certify(const ExperimentConfig& cfg, const std::string& defense_checkpoint,
                   const std::string& out_dir);

// Runs the gradient/estimator oracle suite; prints one line per check.
// Returns false if any check fails.
bool cmd_gradcheck(const std::string& out_dir);

// Consolidates certification runs into table.csv + plotdata.csv. Every run
// directory must share the same radii grid.
void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// Resolved method/estimator pair (validates against the supported matrix).
struct DefenseSelection {
    std::string method;
    ZOMethod estimator;
};
DefenseSelection resolve_defense(const std::string& method, const std::string& estimator);

}  // namespace zocert
