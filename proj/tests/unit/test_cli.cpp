#include "doctest.h"
#include "support.hpp"

#include "thzdiff/checkpoint.hpp"
#include "thzdiff/cli.hpp"
#include "thzdiff/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace thz;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "geometry": {"n_tx": 8, "n_rx": 8, "k_tx": 2, "k_rx": 2},
  "dit": {"embed_dim": 16, "depth": 1, "n_heads": 2},
  "schedule": {"n_steps": 10},
  "training": {"epochs": 2, "batch_size": 4, "lr": 0.001},
  "split": {"test_fraction": 0.2},
  "seed": 3
})";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig tiny() { return parse_run_config(kTinyConfig); }

// block/key -> values in file order
std::map<std::string, std::vector<double>> read_long_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "block,key,index,value");
    std::map<std::string, std::vector<double>> out;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string block, key, index, value;
        std::getline(ss, block, ',');
        std::getline(ss, key, ',');
        std::getline(ss, index, ',');
        std::getline(ss, value, ',');
        out[block + "/" + key].push_back(std::stod(value));
    }
    return out;
}

int run(std::vector<std::string> args) {
    std::vector<char*> argv;
    static std::string prog = "thzgen";
    argv.push_back(prog.data());
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("gen-data is byte-deterministic under a seed") {
    auto dir = test::temp_dir("cli_gen");
    GenDataSummary a = cmd_gen_data(tiny(), (dir / "a").string(), 60, 11);
    cmd_gen_data(tiny(), (dir / "b").string(), 60, 11);
    cmd_gen_data(tiny(), (dir / "c").string(), 60, 12);
    CHECK(a.sample_count == 60);
    CHECK(a.train_count + a.test_count == 60);
    CHECK(a.test_count >= 11);
    CHECK(a.test_count <= 13);
    CHECK(slurp(dir / "a/train.thzc") == slurp(dir / "b/train.thzc"));
    CHECK(slurp(dir / "a/test.thzc") == slurp(dir / "b/test.thzc"));
    CHECK(slurp(dir / "a/train.thzc") != slurp(dir / "c/train.thzc"));

    Dataset tr = read_dataset((dir / "a/train.thzc").string());
    CHECK(tr.header.n_rx == 8);
    CHECK(tr.header.master_seed == 11);
    CHECK(tr.header.normalization_scalar == doctest::Approx(a.normalization_scalar));
}

TEST_CASE("train and sample are byte-deterministic") {
    auto dir = test::temp_dir("cli_train");
    cmd_gen_data(tiny(), (dir / "data").string(), 40, 5);
    RunConfig cfg = tiny();
    cmd_train(cfg, (dir / "data").string(), (dir / "a.ckpt").string(), (dir / "a.csv").string());
    cmd_train(cfg, (dir / "data").string(), (dir / "b.ckpt").string(), (dir / "b.csv").string());
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

    std::ifstream csv(dir / "a.csv");
    std::string header, row1, row2, extra;
    std::getline(csv, header);
    std::getline(csv, row1);
    std::getline(csv, row2);
    CHECK(header == "epoch,train_loss,test_loss");
    CHECK(row1.rfind("1,", 0) == 0);
    CHECK(row2.rfind("2,", 0) == 0);
    CHECK_FALSE(std::getline(csv, extra));

    Checkpoint ck = read_checkpoint((dir / "a.ckpt").string());
    Dataset tr = read_dataset((dir / "data/train.thzc").string());
    CHECK(ck.meta.normalization_scalar == doctest::Approx(tr.header.normalization_scalar).epsilon(1e-12));
    CHECK(ck.config.embed_dim == 16);
    CHECK(ck.meta.schedule.n_steps == 10);
    CHECK(ck.adam.step > 0);

    Vec3 pos(5.0, 0.5, 0.0);
    Dataset s1 = cmd_sample((dir / "a.ckpt").string(), pos, 3, 9, (dir / "s1.thzc").string());
    cmd_sample((dir / "a.ckpt").string(), pos, 3, 9, (dir / "s2.thzc").string());
    cmd_sample((dir / "a.ckpt").string(), pos, 3, 10, (dir / "s3.thzc").string());
    CHECK(slurp(dir / "s1.thzc") == slurp(dir / "s2.thzc"));
    CHECK(slurp(dir / "s1.thzc") != slurp(dir / "s3.thzc"));
    REQUIRE(s1.samples.size() == 3);
    CHECK(s1.header.normalization_scalar == 1.0);
    CHECK(s1.samples[0].condition.p[1] == doctest::Approx(5.0));
    CHECK(s1.samples[0].condition.p[2] == doctest::Approx(0.5));
    CHECK(s1.samples[0].tensor != s1.samples[1].tensor);
    CHECK(s1.samples[0].tensor.allFinite());
}

TEST_CASE("dimension mismatch between config and data is reported") {
    auto dir = test::temp_dir("cli_mismatch");
    cmd_gen_data(tiny(), (dir / "data").string(), 30, 5);
    RunConfig other = parse_run_config(R"({"geometry": {"n_tx": 8, "n_rx": 4, "k_tx": 2, "k_rx": 2},
                                          "dit": {"embed_dim": 16, "depth": 1, "n_heads": 2}})");
    try {
        cmd_train(other, (dir / "data").string(), (dir / "x.ckpt").string(), (dir / "x.csv").string());
        FAIL("expected a mismatch error");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("n_rx = 8") != std::string::npos);
        CHECK(msg.find("geometry.n_rx = 4") != std::string::npos);
    }
    CHECK_FALSE(fs::exists(dir / "x.ckpt"));
}

TEST_CASE("metric parsing") {
    CHECK(parse_metrics("ssim,nmse") == std::vector<std::string>{"ssim", "nmse"});
    CHECK(parse_metrics("angular") == std::vector<std::string>{"angular"});
    try {
        parse_metrics("ssim,psnr");
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("psnr") != std::string::npos);
        for (const auto& name : kMetricNames) CHECK(msg.find(name) != std::string::npos);
    }
    CHECK_THROWS_AS(parse_metrics(""), std::invalid_argument);
}

TEST_CASE("evaluating a dataset against itself") {
    auto dir = test::temp_dir("cli_eval");
    cmd_gen_data(tiny(), (dir / "data").string(), 40, 8);
    const std::string test_file = (dir / "data/test.thzc").string();
    const std::size_t n_test = read_dataset(test_file).samples.size();
    EvalOptions opt;
    opt.ssim.window = 7;
    std::size_t pairs = cmd_eval(test_file, test_file, opt, (dir / "eval.csv").string());
    CHECK(pairs == n_test);

    auto csv = read_long_csv(dir / "eval.csv");
    CHECK(csv["pairs/count"].at(0) == doctest::Approx(double(n_test)));
    CHECK(csv["ssim/mean"].at(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(csv["ssim/pair"].size() == n_test);
    CHECK(csv["nmse/mean"].at(0) == 0.0);
    CHECK(csv["nmse/max"].at(0) == 0.0);
    CHECK(csv["angular/tx_tv_distance"].at(0) == 0.0);
    CHECK(csv["angular/rx_cosine_similarity"].at(0) == doctest::Approx(1.0));
    CHECK(csv["angular/tx_argmax_match"].at(0) == 1.0);
    CHECK(csv["angular/gen_tx"] == csv["angular/ref_tx"]);
    CHECK(csv["ssim_cdf/cdf"].back() == doctest::Approx(1.0));

    opt.metrics = {"nmse"};
    cmd_eval(test_file, test_file, opt, (dir / "nmse.csv").string());
    auto only = read_long_csv(dir / "nmse.csv");
    CHECK(only.count("ssim/mean") == 0);
    CHECK(only.count("nmse/mean") == 1);

    opt.max_pair_distance = -1.0;
    CHECK_THROWS_AS(cmd_eval(test_file, test_file, opt, (dir / "none.csv").string()), InsufficientDataError);
}

TEST_CASE("command line entry point") {
    auto dir = test::temp_dir("cli_entry");
    std::ofstream(dir / "tiny.json") << kTinyConfig;
    const std::string cfg = (dir / "tiny.json").string();
    CHECK(run({"gen-data", "--config", cfg, "--out", (dir / "d").string(), "--count", "30", "--seed", "4"}) == 0);
    CHECK(fs::exists(dir / "d/train.thzc"));
    CHECK(run({"eval", "--gen", (dir / "d/test.thzc").string(), "--ref", (dir / "d/test.thzc").string(),
               "--metrics", "bogus", "--out-csv", (dir / "e.csv").string()}) == 1);
    CHECK(run({"sample", "--ckpt", cfg, "--pos", "1,2", "--out", (dir / "s.thzc").string()}) == 1);
    CHECK(run({"frobnicate"}) != 0);

#ifdef THZGEN_PATH
    const std::string cmd = std::string(THZGEN_PATH) + " gen-data --config " + cfg + " --out " +
                            (dir / "bin").string() + " --count 30 --seed 4 > " + (dir / "log.txt").string();
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(slurp(dir / "bin/train.thzc") == slurp(dir / "d/train.thzc"));
    CHECK(slurp(dir / "log.txt").find("sample_count 30") != std::string::npos);
    const std::string bad = std::string(THZGEN_PATH) + " eval --gen " + (dir / "d/test.thzc").string() + " --ref " +
                            (dir / "d/test.thzc").string() + " --metrics ssim,foo --out-csv " +
                            (dir / "x.csv").string() + " 2> " + (dir / "err.txt").string();
    CHECK(std::system(bad.c_str()) != 0);
    CHECK(slurp(dir / "err.txt").find("valid metrics: ssim, angular, nmse") != std::string::npos);
#endif
}
