#include "zocert/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "zocert/checkpoint.hpp"
#include "zocert/csv.hpp"
#include "zocert/gradcheck.hpp"

namespace zocert {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot write " + path);
    os << text;
}

void write_run_metadata(const std::string& out_dir, const ExperimentConfig& cfg,
                        const std::vector<std::string>& consumed_checkpoints) {
    write_text(out_dir + "/config.resolved.cfg", render_config(cfg));
    std::string inputs;
    for (const auto& path : consumed_checkpoints) {
        inputs += path + " sha256:" + file_sha256_hex(path) + "\n";
    }
    write_text(out_dir + "/inputs.txt", inputs);
}

Dataset build_dataset(const ExperimentConfig& cfg, const std::string& split) {
    if (cfg.dataset.kind == "synthetic") {
        SyntheticSpec spec{cfg.dataset.classes, cfg.dataset.channels, cfg.dataset.image_size,
                           cfg.dataset.jitter, cfg.dataset.contrast};
        const int per_class = split == "train" ? cfg.dataset.train_per_class : cfg.dataset.test_per_class;
        return generate_synthetic(per_class, spec, cfg.dataset.seed, split);
    }
    Dataset ds = split == "train" ? load_idx(cfg.dataset.idx_train_images, cfg.dataset.idx_train_labels)
                                  : load_idx(cfg.dataset.idx_test_images, cfg.dataset.idx_test_labels);
    if (ds.images.shape[1] != cfg.dataset.channels || ds.images.shape[2] != cfg.dataset.image_size) {
        throw ValidationError("dataset: IDX dims " + ds.images.shape_str() + " do not match config channels=" +
                              std::to_string(cfg.dataset.channels) + " image_size=" +
                              std::to_string(cfg.dataset.image_size));
    }
    return ds;
}

ClassifierConfig classifier_config(const ExperimentConfig& cfg) {
    ClassifierConfig c;
    c.conv_channels = cfg.classifier_channels;
    c.num_classes = cfg.dataset.classes;
    c.input_channels = cfg.dataset.channels;
    c.image_size = cfg.dataset.image_size;
    return c;
}

RDUNetConfig rdunet_config(const ExperimentConfig& cfg) {
    RDUNetConfig c;
    c.input_channels = cfg.dataset.channels;
    c.base_channels = cfg.rdunet_base_channels;
    c.depth = cfg.rdunet_depth;
    c.image_size = cfg.dataset.image_size;
    return c;
}

AEConfig ae_config(const ExperimentConfig& cfg) {
    AEConfig c;
    c.latent_dim = cfg.ae_latent_dim;
    c.enc_channels[0] = cfg.ae_enc_channels[0];
    c.enc_channels[1] = cfg.ae_enc_channels[1];
    c.input_channels = cfg.dataset.channels;
    c.image_size = cfg.dataset.image_size;
    return c;
}

double accuracy(Classifier& cls, const Dataset& ds) {
    int hits = 0;
    for (int i = 0; i < ds.size(); ++i) {
        Tensor x = slice_batch(ds.images, i);
        x.shape = {1, x.shape[0], x.shape[1], x.shape[2]};
        const Tensor logits = cls.forward_logits(x, Mode::Eval);
        if (argmax_first(logits.data) == ds.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

void train_classifier(Classifier& cls, const Dataset& train, int epochs, int batch_size, double lr,
                      std::uint64_t seed) {
    const auto state = cls.state();
    const int L = cls.config().num_classes;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        std::vector<int> order(train.size());
        for (int i = 0; i < train.size(); ++i) order[i] = i;
        Rng rng(derive_seed(seed, {stream::kShuffle, 9000ULL + static_cast<std::uint64_t>(epoch)}));
        for (int i = train.size() - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        const double lr_e = scheduled_lr(lr, epoch, epochs);
        for (std::size_t start = 0; start + 1 < order.size(); start += batch_size) {
            const int bsize = static_cast<int>(std::min<std::size_t>(batch_size, order.size() - start));
            if (bsize < 2) break;
            std::vector<Tensor> xs;
            std::vector<int> ys;
            for (int b = 0; b < bsize; ++b) {
                xs.push_back(slice_batch(train.images, order[start + b]));
                ys.push_back(train.labels[order[start + b]]);
            }
            zero_grads(state);
            const Tensor probs = softmax_rows(cls.forward_logits(stack_batch(xs), Mode::Train));
            Tensor g(probs.shape);
            for (int b = 0; b < bsize; ++b) {
                for (int l = 0; l < L; ++l) {
                    g.at2(b, l) = (probs.at2(b, l) - (l == ys[b] ? 1.0 : 0.0)) / static_cast<double>(bsize);
                }
            }
            cls.backward_logits(g);
            sgd_step(state, lr_e);
        }
    }
}

Classifier load_classifier(const ExperimentConfig& cfg) {
    Classifier cls(classifier_config(cfg));
    load_state(cfg.classifier_checkpoint, cls.state());
    return cls;
}

std::vector<std::string> run_log_header() {
    return {"step", "epoch", "ce", "cs", "mmd", "total", "queries_total", "wall_ms"};
}

void write_run_log(const std::string& path, const std::vector<RunLogRow>& rows) {
    std::vector<std::vector<std::string>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.push_back({std::to_string(r.step), std::to_string(r.epoch), fmt_double(r.ce), fmt_double(r.cs),
                       fmt_double(r.mmd), fmt_double(r.total), std::to_string(r.queries_total),
                       std::to_string(r.wall_ms)});
    }
    write_csv(path, run_log_header(), out);
}

// The smoothed model under certification: optional denoiser, optional
// autoencoder, clamp to the pixel range, then one black-box query per sample.
struct DefensePipeline : NoisyLabeler {
    enum class Kind { Passthrough, Denoiser, DenoiserAE };
    Kind kind = Kind::Passthrough;
    RDUNet denoiser;
    Encoder encoder;
    Decoder decoder;
    SealedClassifier box;

    DefensePipeline(Kind k, RDUNet dn, Encoder enc, Decoder dec, SealedClassifier f)
        : kind(k), denoiser(std::move(dn)), encoder(std::move(enc)), decoder(std::move(dec)), box(std::move(f)) {}

    int label(const Tensor& x_star) override {
        Tensor item = x_star;
        item.shape = {1, x_star.shape[0], x_star.shape[1], x_star.shape[2]};
        if (kind != Kind::Passthrough) {
            item = denoiser.forward(item, Mode::Eval);
            if (kind == Kind::DenoiserAE) {
                item = decoder.forward(encoder.forward(item, Mode::Eval));
            }
        }
        return box.query(clamp(slice_batch(item, 0), 0.0, 1.0)).predicted_label;
    }
    int num_classes() const override { return box.num_classes(); }
};

struct LoadedDefense {
    DefensePipeline::Kind kind = DefensePipeline::Kind::Passthrough;
    RDUNet denoiser;
    Encoder encoder;
    Decoder decoder;
};

LoadedDefense load_defense(const ExperimentConfig& cfg, const std::string& checkpoint) {
    LoadedDefense d{DefensePipeline::Kind::Passthrough, RDUNet(rdunet_config(cfg)), Encoder(ae_config(cfg)),
                    Decoder(ae_config(cfg))};
    if (checkpoint.empty()) return d;
    const auto names = checkpoint_names(checkpoint);
    const bool has_ae = std::any_of(names.begin(), names.end(),
                                    [](const std::string& n) { return n.rfind("encoder.", 0) == 0; });
    std::vector<ParamRef> state = d.denoiser.state();
    if (has_ae) {
        for (auto& p : d.encoder.state()) state.push_back(p);
        for (auto& p : d.decoder.state()) state.push_back(p);
        d.kind = DefensePipeline::Kind::DenoiserAE;
    } else {
        d.kind = DefensePipeline::Kind::Denoiser;
    }
    load_state(checkpoint, state);
    return d;
}

}  // namespace

DefenseSelection resolve_defense(const std::string& method, const std::string& estimator) {
    static const char* matrix =
        "valid method/estimator pairs:\n"
        "  zo-ruds    : rge (default), cge\n"
        "  zo-ae-ruds : cge (default), rge\n"
        "  fo-ds      : (no estimator)";
    DefenseSelection sel;
    sel.method = method;
    if (method == "zo-ruds") {
        if (estimator.empty() || estimator == "rge") sel.estimator = ZOMethod::RGE;
        else if (estimator == "cge") sel.estimator = ZOMethod::CGE;
        else throw ValidationError("defend: unknown estimator '" + estimator + "'\n" + matrix);
    } else if (method == "zo-ae-ruds") {
        if (estimator.empty() || estimator == "cge") sel.estimator = ZOMethod::CGE;
        else if (estimator == "rge") sel.estimator = ZOMethod::RGE;
        else throw ValidationError("defend: unknown estimator '" + estimator + "'\n" + matrix);
    } else if (method == "fo-ds") {
        if (!estimator.empty()) {
            throw ValidationError("defend: method fo-ds takes no estimator (got '" + estimator + "')\n" + matrix);
        }
        sel.estimator = ZOMethod::RGE;  // unused
    } else {
        throw ValidationError("defend: unknown method '" + method + "'\n" + matrix);
    }
    return sel;
}

double cmd_train_target(const ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const Dataset train = build_dataset(cfg, "train");
    const Dataset test = build_dataset(cfg, "test");

    Classifier cls(classifier_config(cfg));
    Rng init_rng(derive_seed(cfg.seed, {stream::kInit, 1}));
    cls.init(init_rng);
    train_classifier(cls, train, cfg.target.epochs, cfg.target.batch_size, cfg.target.learning_rate, cfg.seed);

    const double train_acc = accuracy(cls, train);
    const double test_acc = accuracy(cls, test);

    save_state(out_dir + "/classifier.ckpt", cls.state());
    {
        std::vector<CheckpointEntry> entries;
        entries.push_back({"train.images", train.images});
        Tensor tl({std::max(1, train.size())});
        for (int i = 0; i < train.size(); ++i) tl.data[i] = train.labels[i];
        entries.push_back({"train.labels", tl});
        entries.push_back({"test.images", test.images});
        Tensor sl({std::max(1, test.size())});
        for (int i = 0; i < test.size(); ++i) sl.data[i] = test.labels[i];
        entries.push_back({"test.labels", sl});
        save_checkpoint(out_dir + "/dataset.ckpt", entries);
    }
    write_csv(out_dir + "/accuracy.csv", {"split", "accuracy", "n_examples"},
              {{"train", fmt_double(train_acc), std::to_string(train.size())},
               {"test", fmt_double(test_acc), std::to_string(test.size())}});
    write_run_metadata(out_dir, cfg, {});
    std::cerr << "[train-target] train_acc=" << train_acc << " test_acc=" << test_acc << "\n";
    return test_acc;
}

double cmd_defend(const ExperimentConfig& cfg, const std::string& method, const std::string& estimator,
                  const std::string& out_dir) {
    const DefenseSelection sel = resolve_defense(method, estimator);
    ensure_dir(out_dir);
    const Dataset train = build_dataset(cfg, "train");
    Classifier cls = load_classifier(cfg);

    RDUNet denoiser(rdunet_config(cfg));
    Rng init_rng(derive_seed(cfg.seed, {stream::kInit, 2}));
    denoiser.init(init_rng);

    ZOConfig zo = cfg.zo;
    zo.method = sel.estimator;
    zo.seed = cfg.seed;

    TrainResult result;
    std::vector<ParamRef> ckpt_state = denoiser.state();
    Encoder encoder(ae_config(cfg));
    Decoder decoder(ae_config(cfg));

    if (sel.method == "fo-ds") {
        WhiteBoxHandle handle(cls);
        result = train_fo_ds(train, denoiser, handle, cfg.train, cfg.seed);
    } else {
        SealedClassifier box(std::move(cls));
        if (sel.method == "zo-ruds") {
            result = train_zo_ruds(train, denoiser, box, cfg.loss, zo, cfg.train, cfg.seed);
        } else {
            encoder.init(init_rng);
            decoder.init(init_rng);
            result = train_zo_ae_ruds(train, denoiser, encoder, decoder, box, cfg.loss, zo, cfg.train, cfg.seed);
            for (auto& p : encoder.state()) ckpt_state.push_back(p);
            for (auto& p : decoder.state()) ckpt_state.push_back(p);
        }
        std::cerr << "[defend " << sel.method << "] queries: setup=" << box.counter().setup()
                  << " training=" << box.counter().training() << "\n";
    }

    save_state(out_dir + "/denoiser.ckpt", ckpt_state);
    write_run_log(out_dir + "/runlog.csv", result.log);
    write_run_metadata(out_dir, cfg, {cfg.classifier_checkpoint});
    if (result.diverged) {
        throw NumericalError("defend " + sel.method + " diverged: " + result.divergence_note +
                             " (last finite checkpoint written to " + out_dir + ")");
    }
    std::cerr << "[defend " << sel.method << "] steps=" << result.log.size()
              << " final_loss=" << result.final_loss << "\n";
    return result.final_loss;
}

double cmd_certify(const ExperimentConfig& cfg, const std::string& defense_checkpoint,
                   const std::string& out_dir) {
    ensure_dir(out_dir);
    validate_certify_config(cfg.certify);
    const Dataset test = build_dataset(cfg, "test");
    Classifier cls = load_classifier(cfg);
    const LoadedDefense defense = load_defense(cfg, defense_checkpoint);
    SealedClassifier box(std::move(cls));
    box.set_phase(QueryPhase::Certification);

    const int n_examples = test.size();
    std::vector<CertificationResult> results(n_examples);
    const int threads = std::max(1, std::min(cfg.threads, n_examples));
    auto worker = [&](int t) {
        // per-thread pipeline clone; the sealed classifier copies share one counter
        DefensePipeline pipe(defense.kind, defense.denoiser, defense.encoder, defense.decoder, box);
        for (int i = t; i < n_examples; i += threads) {
            const Tensor x = slice_batch(test.images, i);
            results[i] = certify(pipe, x, cfg.certify,
                                 derive_seed(cfg.seed, {77, static_cast<std::uint64_t>(i)}));
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }

    std::vector<std::vector<std::string>> report_rows;
    for (int i = 0; i < n_examples; ++i) {
        const auto& r = results[i];
        report_rows.push_back({std::to_string(i), std::to_string(test.labels[i]),
                               r.label == kAbstain ? "ABSTAIN" : std::to_string(r.label), fmt_double(r.radius),
                               fmt_double(r.p_lower), std::to_string(r.queries_spent)});
    }
    write_csv(out_dir + "/report.csv", {"example_id", "true_label", "predicted", "radius", "p_lower", "queries"},
              report_rows);

    const auto curve = certified_accuracy_curve(results, test.labels, cfg.certify.radii_grid);
    std::vector<std::vector<std::string>> curve_rows;
    for (const auto& pt : curve) {
        curve_rows.push_back({fmt_double(pt.radius), fmt_double(pt.certified_accuracy),
                              std::to_string(pt.n_examples)});
    }
    write_csv(out_dir + "/curve.csv", {"radius", "certified_accuracy", "n_examples"}, curve_rows);

    std::vector<std::string> consumed = {cfg.classifier_checkpoint};
    if (!defense_checkpoint.empty()) consumed.push_back(defense_checkpoint);
    write_run_metadata(out_dir, cfg, consumed);
    std::cerr << "[certify] examples=" << n_examples << " sca=" << curve.front().certified_accuracy
              << " queries=" << box.counter().certification() << "\n";
    return curve.front().certified_accuracy;
}

bool cmd_gradcheck(const std::string& out_dir) {
    const auto results = run_gradcheck();
    bool all_pass = true;
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : results) {
        all_pass = all_pass && r.pass;
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " error=" << fmt_double(r.max_rel_error)
                  << " tol=" << fmt_double(r.tolerance) << "\n";
        rows.push_back({r.name, fmt_double(r.max_rel_error), fmt_double(r.tolerance), r.pass ? "pass" : "fail"});
    }
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_csv(out_dir + "/gradcheck.csv", {"check", "error", "tolerance", "status"}, rows);
    }
    return all_pass;
}

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw ValidationError("report: need at least one certification run directory");
    ensure_dir(out_dir);

    std::vector<double> grid;
    std::vector<std::vector<std::string>> table_rows;
    std::vector<std::vector<std::string>> plot_rows;
    std::vector<std::string> header = {"run"};

    for (const auto& dir : run_dirs) {
        const auto curve = read_csv(dir + "/curve.csv");
        if (curve.size() < 2) throw ValidationError("report: " + dir + "/curve.csv has no data rows");
        std::vector<double> radii;
        std::vector<std::string> accs;
        for (std::size_t i = 1; i < curve.size(); ++i) {
            radii.push_back(std::stod(curve[i][0]));
            accs.push_back(curve[i][1]);
        }
        if (grid.empty()) {
            grid = radii;
            for (double r : grid) header.push_back(r == 0.0 ? "sca" : "rca@" + fmt_fixed(r, 2));
            header.push_back("queries_total");
            header.push_back("wall_ms");
        } else if (radii != grid) {
            throw ValidationError("report: " + dir + " uses a different radii grid than the first run");
        }
        std::uint64_t queries = 0;
        const auto report = read_csv(dir + "/report.csv");
        for (std::size_t i = 1; i < report.size(); ++i) queries += std::stoull(report[i][5]);

        std::string run_name = fs::path(dir).filename().string();
        if (run_name.empty()) run_name = dir;
        std::vector<std::string> row = {run_name};
        for (std::size_t i = 0; i < accs.size(); ++i) {
            row.push_back(accs[i]);
            plot_rows.push_back({fmt_double(grid[i]), accs[i], run_name});
        }
        row.push_back(std::to_string(queries));
        row.push_back("0");
        table_rows.push_back(row);
    }
    write_csv(out_dir + "/table.csv", header, table_rows);
    write_csv(out_dir + "/plotdata.csv", {"x", "y", "series"}, plot_rows);
}

}  // namespace zocert
