#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "test_util.hpp"
#include "zocert/checkpoint.hpp"
#include "zocert/config.hpp"
#include "zocert/csv.hpp"

using namespace zocert;
using namespace zocert::testutil;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("csv: RFC quoting round-trips commas, quotes and newlines") {
    const std::vector<std::string> header = {"a", "b"};
    const std::vector<std::vector<std::string>> rows = {
        {"plain", "with,comma"},
        {"with \"quote\"", "multi\nline"},
        {"", "trailing"},
    };
    write_csv("/tmp/zc_csv_test.csv", header, rows);
    const auto back = read_csv("/tmp/zc_csv_test.csv");
    REQUIRE(back.size() == 4);
    CHECK(back[0] == header);
    CHECK(back[1] == rows[0]);
    CHECK(back[2] == rows[1]);
    CHECK(back[3] == rows[2]);
    std::remove("/tmp/zc_csv_test.csv");
}

TEST_CASE("csv: fmt_double survives a parse round-trip to the last bit") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double v = rng.normal() * std::pow(10.0, static_cast<double>(i % 17) - 8.0);
        CHECK(std::stod(fmt_double(v)) == v);
    }
}

TEST_CASE("checkpoint: byte-exact round trip and exact re-save") {
    Rng rng(5);
    std::vector<CheckpointEntry> entries;
    entries.push_back({"alpha.weight", random_tensor({3, 2, 3, 3}, rng)});
    entries.push_back({"alpha.bias", random_tensor({3}, rng)});
    entries.push_back({"running.var", random_tensor({7}, rng, 0.3)});
    save_checkpoint("/tmp/zc_ckpt_a", entries);
    const auto loaded = load_checkpoint("/tmp/zc_ckpt_a");
    REQUIRE(loaded.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(loaded[i].name == entries[i].name);
        CHECK(loaded[i].tensor.shape == entries[i].tensor.shape);
        CHECK(loaded[i].tensor.data == entries[i].tensor.data);
    }
    save_checkpoint("/tmp/zc_ckpt_b", loaded);
    CHECK(slurp("/tmp/zc_ckpt_a") == slurp("/tmp/zc_ckpt_b"));  // byte-exact
    CHECK(file_sha256_hex("/tmp/zc_ckpt_a") == file_sha256_hex("/tmp/zc_ckpt_b"));
    std::remove("/tmp/zc_ckpt_a");
    std::remove("/tmp/zc_ckpt_b");
}

TEST_CASE("checkpoint: bad magic, truncation, and mismatched state are rejected") {
    {
        std::ofstream os("/tmp/zc_ckpt_bad", std::ios::binary);
        os << "NOTMAGIC garbage";
    }
    CHECK_THROWS_AS(load_checkpoint("/tmp/zc_ckpt_bad"), ValidationError);

    Rng rng(7);
    save_checkpoint("/tmp/zc_ckpt_c", {{"w", random_tensor({4}, rng)}});
    Tensor other({5});
    other.alloc_grad();
    std::vector<ParamRef> state = {{"w", &other, true}};
    CHECK_THROWS_AS(load_state("/tmp/zc_ckpt_c", state), ValidationError);  // shape mismatch
    Tensor right({4});
    std::vector<ParamRef> wrong_name = {{"v", &right, true}};
    CHECK_THROWS_AS(load_state("/tmp/zc_ckpt_c", wrong_name), ValidationError);
    std::remove("/tmp/zc_ckpt_bad");
    std::remove("/tmp/zc_ckpt_c");
}

TEST_CASE("sha256 matches the NIST 'abc' vector") {
    {
        std::ofstream os("/tmp/zc_sha_abc", std::ios::binary);
        os << "abc";
    }
    CHECK(file_sha256_hex("/tmp/zc_sha_abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    std::remove("/tmp/zc_sha_abc");
}

TEST_CASE("config: defaults parse, render, and re-parse to the same values") {
    const ExperimentConfig cfg;
    const std::string text = render_config(cfg);
    const ExperimentConfig back = parse_config(text);
    CHECK(back.dataset.classes == cfg.dataset.classes);
    CHECK(back.zo.q == cfg.zo.q);
    CHECK(back.train.learning_rate == cfg.train.learning_rate);
    CHECK(back.certify.radii_grid == cfg.certify.radii_grid);
    CHECK(back.seed == cfg.seed);
    CHECK(validate_config(back).empty());
}

TEST_CASE("config: unknown keys, malformed values and sections are all reported together") {
    const std::string text =
        "[dataset]\n"
        "classes = banana\n"
        "mystery_key = 1\n"
        "[nonsense]\n"
        "x = 2\n";
    try {
        parse_config(text);
        FAIL("expected parse errors");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dataset.classes") != std::string::npos);
        CHECK(msg.find("mystery_key") != std::string::npos);
        CHECK(msg.find("[nonsense]") != std::string::npos);
    }
}

TEST_CASE("config: validation collects every inconsistency, not just the first") {
    ExperimentConfig cfg;
    cfg.dataset.classes = 9;        // synthetic supports 2..5
    cfg.dataset.image_size = 10;    // not divisible by 2^depth
    cfg.zo.q = 0;
    cfg.certify.n0 = 500;
    cfg.certify.n = 100;            // n < n0
    cfg.train.batch_size = 1;
    const auto errors = validate_config(cfg);
    CHECK(errors.size() >= 5);
    auto has = [&](const std::string& needle) {
        for (const auto& e : errors)
            if (e.find(needle) != std::string::npos) return true;
        return false;
    };
    CHECK(has("dataset.classes"));
    CHECK(has("zo.q"));
    CHECK(has("certify.n"));
    CHECK(has("train.batch_size"));
}

TEST_CASE("config: idx kind requires every path, naming the missing fields") {
    ExperimentConfig cfg;
    cfg.dataset.kind = "idx";
    cfg.dataset.idx_train_images = "some/file";
    const auto errors = validate_config(cfg);
    auto has = [&](const std::string& needle) {
        for (const auto& e : errors)
            if (e.find(needle) != std::string::npos) return true;
        return false;
    };
    CHECK(has("dataset.idx_train_labels"));
    CHECK(has("dataset.idx_test_images"));
    CHECK(has("dataset.idx_test_labels"));
    CHECK_FALSE(has("dataset.idx_train_images"));
}

TEST_CASE("config: comments and whitespace are tolerated") {
    const std::string text =
        "# experiment\n"
        "[zo]\n"
        "  q = 37   # directions\n"
        "\n"
        "[run]\n"
        "seed = 99\n";
    const ExperimentConfig cfg = parse_config(text);
    CHECK(cfg.zo.q == 37);
    CHECK(cfg.seed == 99);
}
