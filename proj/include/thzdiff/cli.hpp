#pragma once

#include "thzdiff/config.hpp"
#include "thzdiff/evaluation.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace thz {

struct GenDataSummary {
    std::uint64_t sample_count;
    std::uint64_t train_count;
    std::uint64_t test_count;
    std::uint32_t n_rx;
    std::uint32_t n_tx;
    double normalization_scalar;
    std::uint64_t seed;
};

// Build, normalize and split a dataset; writes <out_dir>/train.thzc and <out_dir>/test.thzc.
GenDataSummary cmd_gen_data(const RunConfig& config, const std::string& out_dir, std::size_t count,
                            std::uint64_t seed);

// Trains on <data>/train.thzc (and <data>/test.thzc when present; a plain file path trains without a test set).
// Writes the checkpoint and an `epoch,train_loss,test_loss` CSV. Progress lines go to `log` when non-null.
TrainResult cmd_train(const RunConfig& config, const std::string& data, const std::string& ckpt_path,
                      const std::string& loss_csv, std::ostream* log = nullptr);

// `num` Euler samples at one absolute Rx position with the checkpoint's EMA weights. Sample i uses
// stream_rng(seed, i). Tensors are de-normalized, so the written header scalar is 1.
Dataset cmd_sample(const std::string& ckpt_path, const Vec3& rx_position, std::size_t num, std::uint64_t seed,
                   const std::string& out_path, std::optional<int> n_steps = std::nullopt);

inline const std::vector<std::string> kMetricNames = {"ssim", "angular", "nmse"};

struct EvalOptions {
    std::vector<std::string> metrics = kMetricNames;
    double max_pair_distance = 0.5;  // meters, between relative Rx positions
    SsimParams ssim;
    SsimMode ssim_mode = SsimMode::magnitude;
};

// Throws std::invalid_argument listing the valid names when one is unknown.
std::vector<std::string> parse_metrics(const std::string& list);

// Long-format CSV `block,key,index,value`. Every generated sample is paired with the nearest reference
// condition; pairs farther apart than max_pair_distance are dropped. Returns the number of pairs.
std::size_t cmd_eval(const std::string& gen_path, const std::string& ref_path, const EvalOptions& options,
                     const std::string& out_csv);

// Entry point behind the thzgen executable. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace thz
