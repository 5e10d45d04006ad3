#include <CLI11.hpp>

#include <iostream>

#include "zocert/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

zocert::ExperimentConfig load_with_overrides(const std::string& config_path, std::int64_t seed_override,
                                             int threads_override, const std::string& out_override) {
    zocert::ExperimentConfig cfg = zocert::load_config_file(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (threads_override > 0) cfg.threads = threads_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zocertify: black-box denoised-smoothing defense training and certification"};
    app.require_subcommand(1);

    std::string config_path, out_dir, method, estimator, checkpoint;
    std::int64_t seed = -1;
    int threads = 0;
    bool passthrough = false;
    std::vector<std::string> run_dirs;

    auto add_common = [&](CLI::App* cmd, bool need_config) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config file");
        if (need_config) opt->required();
        cmd->add_option("--seed", seed, "override [run] seed");
        cmd->add_option("--threads", threads, "override [run] threads");
        cmd->add_option("--out", out_dir, "override [run] out_dir");
    };

    auto* train_target = app.add_subcommand("train-target", "train the target classifier to be sealed");
    add_common(train_target, true);

    auto* defend = app.add_subcommand("defend", "train a denoiser defense against the sealed classifier");
    add_common(defend, true);
    defend->add_option("--method", method, "zo-ruds | zo-ae-ruds | fo-ds")->required();
    defend->add_option("--estimator", estimator, "rge | cge (method default when omitted)");

    auto* certify = app.add_subcommand("certify", "Monte-Carlo certification of the smoothed defense");
    add_common(certify, true);
    certify->add_option("--checkpoint", checkpoint, "defense checkpoint from `defend`");
    certify->add_flag("--passthrough", passthrough, "identity-denoiser baseline (no defense checkpoint)");

    auto* gradcheck = app.add_subcommand("gradcheck", "run the gradient and estimator oracle suite");
    gradcheck->add_option("--out", out_dir, "also write gradcheck.csv here");

    auto* report = app.add_subcommand("report", "consolidate certification runs into a comparison table");
    report->add_option("--out", out_dir, "output directory")->required();
    report->add_option("rundirs", run_dirs, "certification run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train_target)) {
            const auto cfg = load_with_overrides(config_path, seed, threads, out_dir);
            zocert::cmd_train_target(cfg, cfg.out_dir);
            return kExitOk;
        }
        if (app.got_subcommand(defend)) {
            const auto cfg = load_with_overrides(config_path, seed, threads, out_dir);
            zocert::cmd_defend(cfg, method, estimator, cfg.out_dir);
            return kExitOk;
        }
        if (app.got_subcommand(certify)) {
            const auto cfg = load_with_overrides(config_path, seed, threads, out_dir);
            if (passthrough != checkpoint.empty()) {
                throw zocert::ValidationError("certify: pass either --checkpoint PATH or --passthrough");
            }
            zocert::cmd_certify(cfg, passthrough ? "" : checkpoint, cfg.out_dir);
            return kExitOk;
        }
        if (app.got_subcommand(gradcheck)) {
            return zocert::cmd_gradcheck(out_dir) ? kExitOk : kExitNumerical;
        }
        if (app.got_subcommand(report)) {
            zocert::cmd_report(run_dirs, out_dir);
            return kExitOk;
        }
    } catch (const zocert::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const zocert::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
