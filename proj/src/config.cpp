#include "zocert/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "zocert/csv.hpp"

namespace zocert {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct Parser {
    std::vector<std::string> errors;

    bool to_int(const std::string& key, const std::string& v, int& out) {
        try {
            std::size_t pos = 0;
            const long val = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            out = static_cast<int>(val);
            return true;
        } catch (...) {
            errors.push_back(key + ": expected integer, got '" + v + "'");
            return false;
        }
    }
    bool to_u64(const std::string& key, const std::string& v, std::uint64_t& out) {
        try {
            std::size_t pos = 0;
            out = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return true;
        } catch (...) {
            errors.push_back(key + ": expected unsigned integer, got '" + v + "'");
            return false;
        }
    }
    bool to_double(const std::string& key, const std::string& v, double& out) {
        try {
            std::size_t pos = 0;
            out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return true;
        } catch (...) {
            errors.push_back(key + ": expected real number, got '" + v + "'");
            return false;
        }
    }
    bool to_bool(const std::string& key, const std::string& v, bool& out) {
        if (v == "true" || v == "1") { out = true; return true; }
        if (v == "false" || v == "0") { out = false; return true; }
        errors.push_back(key + ": expected true/false, got '" + v + "'");
        return false;
    }
    template <typename T, typename F>
    void to_list(const std::string& key, const std::string& v, std::vector<T>& out, F&& conv) {
        out.clear();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            T value{};
            if (!conv(key, item, value)) return;
            out.push_back(value);
        }
        if (out.empty()) errors.push_back(key + ": expected a comma-separated list, got '" + v + "'");
    }
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    Parser p;
    std::string section;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;

    std::vector<int> enc_list;
    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                p.errors.push_back("line " + std::to_string(line_no) + ": malformed section header '" + line + "'");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            static const char* known[] = {"dataset", "rdunet", "ae", "classifier", "zo",
                                          "loss", "train", "certify", "paths", "run"};
            bool ok = false;
            for (const char* k : known) ok = ok || section == k;
            if (!ok) p.errors.push_back("unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            p.errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qkey = section + "." + key;

        bool handled = true;
        if (section == "dataset") {
            if (key == "kind") cfg.dataset.kind = value;
            else if (key == "classes") p.to_int(qkey, value, cfg.dataset.classes);
            else if (key == "channels") p.to_int(qkey, value, cfg.dataset.channels);
            else if (key == "image_size") p.to_int(qkey, value, cfg.dataset.image_size);
            else if (key == "train_per_class") p.to_int(qkey, value, cfg.dataset.train_per_class);
            else if (key == "test_per_class") p.to_int(qkey, value, cfg.dataset.test_per_class);
            else if (key == "jitter") p.to_double(qkey, value, cfg.dataset.jitter);
            else if (key == "contrast") p.to_double(qkey, value, cfg.dataset.contrast);
            else if (key == "seed") p.to_u64(qkey, value, cfg.dataset.seed);
            else if (key == "idx_train_images") cfg.dataset.idx_train_images = value;
            else if (key == "idx_train_labels") cfg.dataset.idx_train_labels = value;
            else if (key == "idx_test_images") cfg.dataset.idx_test_images = value;
            else if (key == "idx_test_labels") cfg.dataset.idx_test_labels = value;
            else handled = false;
        } else if (section == "rdunet") {
            if (key == "base_channels") p.to_int(qkey, value, cfg.rdunet_base_channels);
            else if (key == "depth") p.to_int(qkey, value, cfg.rdunet_depth);
            else handled = false;
        } else if (section == "ae") {
            if (key == "latent_dim") p.to_int(qkey, value, cfg.ae_latent_dim);
            else if (key == "enc_channels") {
                p.to_list<int>(qkey, value, enc_list,
                               [&](const std::string& k, const std::string& v, int& o) { return p.to_int(k, v, o); });
                if (enc_list.size() == 2) {
                    cfg.ae_enc_channels[0] = enc_list[0];
                    cfg.ae_enc_channels[1] = enc_list[1];
                } else if (!enc_list.empty()) {
                    p.errors.push_back(qkey + ": expected exactly 2 widths");
                }
            } else handled = false;
        } else if (section == "classifier") {
            if (key == "conv_channels") {
                p.to_list<int>(qkey, value, cfg.classifier_channels,
                               [&](const std::string& k, const std::string& v, int& o) { return p.to_int(k, v, o); });
            } else handled = false;
        } else if (section == "zo") {
            if (key == "method") {
                if (value == "rge") cfg.zo.method = ZOMethod::RGE;
                else if (value == "cge") cfg.zo.method = ZOMethod::CGE;
                else p.errors.push_back(qkey + ": expected rge|cge, got '" + value + "'");
            } else if (key == "q") p.to_int(qkey, value, cfg.zo.q);
            else if (key == "xi") p.to_double(qkey, value, cfg.zo.xi);
            else if (key == "direction_dist") {
                if (value == "sphere") cfg.zo.direction_dist = DirectionDist::Sphere;
                else if (value == "normal") cfg.zo.direction_dist = DirectionDist::Normal;
                else p.errors.push_back(qkey + ": expected sphere|normal, got '" + value + "'");
            } else if (key == "paper_literal_cge") p.to_bool(qkey, value, cfg.zo.paper_literal_cge);
            else handled = false;
        } else if (section == "loss") {
            if (key == "lambda_cs") p.to_double(qkey, value, cfg.loss.lambda_cs);
            else if (key == "lambda_mmd") p.to_double(qkey, value, cfg.loss.lambda_mmd);
            else handled = false;
        } else if (section == "train") {
            if (key == "epochs") p.to_int(qkey, value, cfg.train.epochs);
            else if (key == "batch_size") p.to_int(qkey, value, cfg.train.batch_size);
            else if (key == "learning_rate") p.to_double(qkey, value, cfg.train.learning_rate);
            else if (key == "sigma") p.to_double(qkey, value, cfg.train.sigma);
            else if (key == "decoder_recon_lr") p.to_double(qkey, value, cfg.train.decoder_recon_lr);
            else if (key == "freeze_decoder") p.to_bool(qkey, value, cfg.train.freeze_decoder);
            else if (key == "ae_warmup_epochs") p.to_int(qkey, value, cfg.train.ae_warmup_epochs);
            else if (key == "target_epochs") p.to_int(qkey, value, cfg.target.epochs);
            else if (key == "target_batch") p.to_int(qkey, value, cfg.target.batch_size);
            else if (key == "target_lr") p.to_double(qkey, value, cfg.target.learning_rate);
            else handled = false;
        } else if (section == "certify") {
            if (key == "sigma") p.to_double(qkey, value, cfg.certify.sigma);
            else if (key == "n0") p.to_int(qkey, value, cfg.certify.n0);
            else if (key == "n") p.to_int(qkey, value, cfg.certify.n);
            else if (key == "alpha") p.to_double(qkey, value, cfg.certify.alpha);
            else if (key == "radii") {
                p.to_list<double>(qkey, value, cfg.certify.radii_grid,
                                  [&](const std::string& k, const std::string& v, double& o) {
                                      return p.to_double(k, v, o);
                                  });
            } else handled = false;
        } else if (section == "paths") {
            if (key == "classifier_checkpoint") cfg.classifier_checkpoint = value;
            else handled = false;
        } else if (section == "run") {
            if (key == "seed") p.to_u64(qkey, value, cfg.seed);
            else if (key == "out_dir") cfg.out_dir = value;
            else if (key == "threads") p.to_int(qkey, value, cfg.threads);
            else handled = false;
        } else {
            handled = false;
            if (section.empty()) p.errors.push_back("line " + std::to_string(line_no) + ": key outside any section");
        }
        if (!handled && !section.empty()) p.errors.push_back("unknown key '" + qkey + "'");
    }

    if (!p.errors.empty()) {
        std::string msg = "config parse errors:";
        for (const auto& e : p.errors) msg += "\n  - " + e;
        throw ValidationError(msg);
    }
    return cfg;
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> errors;
    auto bad = [&](const std::string& m) { errors.push_back(m); };

    const auto& d = cfg.dataset;
    if (d.kind != "synthetic" && d.kind != "idx") bad("dataset.kind: must be synthetic|idx, got '" + d.kind + "'");
    if (d.kind == "synthetic") {
        if (d.classes < 2 || d.classes > 5) bad("dataset.classes: synthetic generator supports 2..5 classes");
        if (d.channels < 1) bad("dataset.channels: must be >= 1");
        if (d.image_size < 8) bad("dataset.image_size: must be >= 8");
        if (d.train_per_class < 1) bad("dataset.train_per_class: must be >= 1");
        if (d.test_per_class < 1) bad("dataset.test_per_class: must be >= 1");
        if (d.jitter < 0.0 || d.jitter > 0.5) bad("dataset.jitter: must be in [0, 0.5]");
        if (!(d.contrast > 0.0 && d.contrast <= 1.0)) bad("dataset.contrast: must be in (0, 1]");
    } else if (d.kind == "idx") {
        if (d.idx_train_images.empty()) bad("dataset.idx_train_images: required for kind = idx");
        if (d.idx_train_labels.empty()) bad("dataset.idx_train_labels: required for kind = idx");
        if (d.idx_test_images.empty()) bad("dataset.idx_test_images: required for kind = idx");
        if (d.idx_test_labels.empty()) bad("dataset.idx_test_labels: required for kind = idx");
    }

    if (cfg.rdunet_base_channels < 1) bad("rdunet.base_channels: must be >= 1");
    if (cfg.rdunet_depth < 1) bad("rdunet.depth: must be >= 1");
    int s = d.image_size;
    bool divisible = true;
    for (int i = 0; i < cfg.rdunet_depth; ++i) {
        if (s % 2 != 0) divisible = false;
        s /= 2;
    }
    if (!divisible || s < 1) {
        bad("rdunet.depth: image_size " + std::to_string(d.image_size) + " not divisible by 2^depth");
    }

    const int input_dim = d.channels * d.image_size * d.image_size;
    if (cfg.ae_latent_dim < 1) bad("ae.latent_dim: must be >= 1");
    if (cfg.ae_latent_dim >= input_dim) {
        bad("ae.latent_dim: must be < input dimension " + std::to_string(input_dim));
    }
    if (d.image_size % 4 != 0) bad("ae: image_size must be divisible by 4");
    if (cfg.ae_enc_channels[0] < 1 || cfg.ae_enc_channels[1] < 1) bad("ae.enc_channels: widths must be >= 1");

    if (cfg.classifier_channels.empty()) bad("classifier.conv_channels: need at least one width");
    for (int w : cfg.classifier_channels)
        if (w < 1) bad("classifier.conv_channels: widths must be >= 1");
    int cs = d.image_size;
    for (std::size_t i = 0; i < cfg.classifier_channels.size(); ++i) {
        if (cs % 2 != 0) bad("classifier.conv_channels: image_size not divisible by 2^blocks");
        cs /= 2;
    }

    if (cfg.zo.q < 1) bad("zo.q: must be >= 1");
    if (!(cfg.zo.xi > 0.0)) bad("zo.xi: must be > 0");

    if (!(cfg.loss.lambda_cs >= 0.0) || !std::isfinite(cfg.loss.lambda_cs)) bad("loss.lambda_cs: must be finite and >= 0");
    if (!(cfg.loss.lambda_mmd >= 0.0) || !std::isfinite(cfg.loss.lambda_mmd)) bad("loss.lambda_mmd: must be finite and >= 0");

    if (cfg.train.epochs < 0) bad("train.epochs: must be >= 0");
    if (cfg.train.batch_size < 2) bad("train.batch_size: must be >= 2 (batch norm)");
    if (!(cfg.train.learning_rate > 0.0)) bad("train.learning_rate: must be > 0");
    if (!(cfg.train.sigma > 0.0)) bad("train.sigma: must be > 0");
    if (!(cfg.train.decoder_recon_lr >= 0.0)) bad("train.decoder_recon_lr: must be >= 0");
    if (cfg.train.ae_warmup_epochs < 0) bad("train.ae_warmup_epochs: must be >= 0");
    if (cfg.target.epochs < 1) bad("train.target_epochs: must be >= 1");
    if (cfg.target.batch_size < 2) bad("train.target_batch: must be >= 2");
    if (!(cfg.target.learning_rate > 0.0)) bad("train.target_lr: must be > 0");

    const int n_train = d.train_per_class * d.classes;
    if (d.kind == "synthetic" && cfg.train.epochs > 0 && n_train % cfg.train.batch_size == 1) {
        bad("train.batch_size: leaves a trailing batch of 1 example (batch norm needs >= 2)");
    }

    if (!(cfg.certify.sigma > 0.0)) bad("certify.sigma: must be > 0");
    if (cfg.certify.n0 < 1) bad("certify.n0: must be >= 1");
    if (cfg.certify.n < cfg.certify.n0) bad("certify.n: must be >= n0");
    if (!(cfg.certify.alpha > 0.0 && cfg.certify.alpha < 1.0)) bad("certify.alpha: must be in (0,1)");
    if (cfg.certify.radii_grid.empty() || cfg.certify.radii_grid.front() != 0.0) {
        bad("certify.radii: grid must start at 0");
    } else {
        for (std::size_t i = 1; i < cfg.certify.radii_grid.size(); ++i) {
            if (cfg.certify.radii_grid[i] < cfg.certify.radii_grid[i - 1]) {
                bad("certify.radii: grid must be sorted ascending");
                break;
            }
        }
    }

    if (cfg.classifier_checkpoint.empty()) bad("paths.classifier_checkpoint: required");
    if (cfg.out_dir.empty()) bad("run.out_dir: required");
    if (cfg.threads < 1) bad("run.threads: must be >= 1");
    return errors;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    ExperimentConfig cfg = parse_config(ss.str());
    const auto errors = validate_config(cfg);
    if (!errors.empty()) {
        std::string msg = "config validation errors:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ValidationError(msg);
    }
    return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "[dataset]\n";
    os << "kind = " << cfg.dataset.kind << "\n";
    os << "classes = " << cfg.dataset.classes << "\n";
    os << "channels = " << cfg.dataset.channels << "\n";
    os << "image_size = " << cfg.dataset.image_size << "\n";
    os << "train_per_class = " << cfg.dataset.train_per_class << "\n";
    os << "test_per_class = " << cfg.dataset.test_per_class << "\n";
    os << "jitter = " << fmt_double(cfg.dataset.jitter) << "\n";
    os << "contrast = " << fmt_double(cfg.dataset.contrast) << "\n";
    os << "seed = " << cfg.dataset.seed << "\n";
    if (cfg.dataset.kind == "idx") {
        os << "idx_train_images = " << cfg.dataset.idx_train_images << "\n";
        os << "idx_train_labels = " << cfg.dataset.idx_train_labels << "\n";
        os << "idx_test_images = " << cfg.dataset.idx_test_images << "\n";
        os << "idx_test_labels = " << cfg.dataset.idx_test_labels << "\n";
    }
    os << "\n[rdunet]\n";
    os << "base_channels = " << cfg.rdunet_base_channels << "\n";
    os << "depth = " << cfg.rdunet_depth << "\n";
    os << "\n[ae]\n";
    os << "latent_dim = " << cfg.ae_latent_dim << "\n";
    os << "enc_channels = " << cfg.ae_enc_channels[0] << ", " << cfg.ae_enc_channels[1] << "\n";
    os << "\n[classifier]\n";
    os << "conv_channels = ";
    for (std::size_t i = 0; i < cfg.classifier_channels.size(); ++i) {
        if (i) os << ", ";
        os << cfg.classifier_channels[i];
    }
    os << "\n";
    os << "\n[zo]\n";
    os << "method = " << (cfg.zo.method == ZOMethod::RGE ? "rge" : "cge") << "\n";
    os << "q = " << cfg.zo.q << "\n";
    os << "xi = " << fmt_double(cfg.zo.xi) << "\n";
    os << "direction_dist = " << (cfg.zo.direction_dist == DirectionDist::Sphere ? "sphere" : "normal") << "\n";
    os << "paper_literal_cge = " << (cfg.zo.paper_literal_cge ? "true" : "false") << "\n";
    os << "\n[loss]\n";
    os << "lambda_cs = " << fmt_double(cfg.loss.lambda_cs) << "\n";
    os << "lambda_mmd = " << fmt_double(cfg.loss.lambda_mmd) << "\n";
    os << "\n[train]\n";
    os << "epochs = " << cfg.train.epochs << "\n";
    os << "batch_size = " << cfg.train.batch_size << "\n";
    os << "learning_rate = " << fmt_double(cfg.train.learning_rate) << "\n";
    os << "sigma = " << fmt_double(cfg.train.sigma) << "\n";
    os << "decoder_recon_lr = " << fmt_double(cfg.train.decoder_recon_lr) << "\n";
    os << "freeze_decoder = " << (cfg.train.freeze_decoder ? "true" : "false") << "\n";
    os << "ae_warmup_epochs = " << cfg.train.ae_warmup_epochs << "\n";
    os << "target_epochs = " << cfg.target.epochs << "\n";
    os << "target_batch = " << cfg.target.batch_size << "\n";
    os << "target_lr = " << fmt_double(cfg.target.learning_rate) << "\n";
    os << "\n[certify]\n";
    os << "sigma = " << fmt_double(cfg.certify.sigma) << "\n";
    os << "n0 = " << cfg.certify.n0 << "\n";
    os << "n = " << cfg.certify.n << "\n";
    os << "alpha = " << fmt_double(cfg.certify.alpha) << "\n";
    os << "radii = ";
    for (std::size_t i = 0; i < cfg.certify.radii_grid.size(); ++i) {
        if (i) os << ", ";
        os << fmt_double(cfg.certify.radii_grid[i]);
    }
    os << "\n";
    os << "\n[paths]\n";
    os << "classifier_checkpoint = " << cfg.classifier_checkpoint << "\n";
    os << "\n[run]\n";
    os << "seed = " << cfg.seed << "\n";
    os << "out_dir = " << cfg.out_dir << "\n";
    os << "threads = " << cfg.threads << "\n";
    return os.str();
}

}  // namespace zocert
