#include "thzdiff/cli.hpp"

#include "thzdiff/checkpoint.hpp"
#include "thzdiff/errors.hpp"
#include "thzdiff/parallel.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace thz {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    return out;
}

void check_dataset_dims(const Dataset& d, const RunConfig& config, const std::string& path) {
    if (static_cast<int>(d.header.n_rx) != config.geometry.n_rx) {
        throw std::invalid_argument(path + ": dataset n_rx = " + std::to_string(d.header.n_rx) +
                                    " but config geometry.n_rx = " + std::to_string(config.geometry.n_rx));
    }
    if (static_cast<int>(d.header.n_tx) != config.geometry.n_tx) {
        throw std::invalid_argument(path + ": dataset n_tx = " + std::to_string(d.header.n_tx) +
                                    " but config geometry.n_tx = " + std::to_string(config.geometry.n_tx));
    }
}

Vec3 parse_position(const std::string& text) {
    std::stringstream ss(text);
    std::string item;
    std::vector<double> v;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::invalid_argument("--pos: '" + item + "' is not a number");
        }
    }
    if (v.size() != 3) throw std::invalid_argument("--pos: expected x,y,z");
    return {v[0], v[1], v[2]};
}

CMatrix channel_of(const Dataset& d, std::size_t i) {
    return unstack_channel(d.samples[i].tensor * d.header.normalization_scalar, static_cast<int>(d.header.n_rx),
                           static_cast<int>(d.header.n_tx));
}

}  // namespace

GenDataSummary cmd_gen_data(const RunConfig& config, const std::string& out_dir, std::size_t count,
                            std::uint64_t seed) {
    config.validate();
    if (count < 1) throw std::invalid_argument("--count: must be >= 1");
    fs::create_directories(out_dir);
    Dataset all = build_dataset(seed, ArrayGeometry(config.geometry), config.gscm, config.region, count);
    normalize(all);
    auto [train_set, test_set] = split(all, config.split.test_fraction, config.split.cell_edge);
    write_dataset(train_set, (fs::path(out_dir) / "train.thzc").string());
    write_dataset(test_set, (fs::path(out_dir) / "test.thzc").string());
    return {all.header.sample_count,   train_set.header.sample_count, test_set.header.sample_count,
            all.header.n_rx,           all.header.n_tx,               all.header.normalization_scalar,
            seed};
}

TrainResult cmd_train(const RunConfig& config, const std::string& data, const std::string& ckpt_path,
                      const std::string& loss_csv, std::ostream* log) {
    config.validate();
    Dataset train_set, test_set;
    if (fs::is_directory(data)) {
        const std::string train_path = (fs::path(data) / "train.thzc").string();
        const std::string test_path = (fs::path(data) / "test.thzc").string();
        train_set = read_dataset(train_path);
        check_dataset_dims(train_set, config, train_path);
        if (fs::exists(test_path)) {
            test_set = read_dataset(test_path);
            check_dataset_dims(test_set, config, test_path);
            if (test_set.header.normalization_scalar != train_set.header.normalization_scalar) {
                throw std::invalid_argument("train and test sets carry different normalization scalars");
            }
        }
    } else {
        train_set = read_dataset(data);
        check_dataset_dims(train_set, config, data);
    }

    TrainResult result = train(train_set, test_set, config.dit, config.schedule, config.training,
                               [&](const EpochReport& r) {
                                   if (log) {
                                       *log << "epoch " << r.epoch << " train " << fmt(r.train_loss) << " test "
                                            << fmt(r.test_loss) << "\n";
                                       log->flush();
                                   }
                               });

    Checkpoint ckpt;
    ckpt.config = config.dit;
    ckpt.meta.k_rx = static_cast<std::uint32_t>(config.geometry.k_rx);
    ckpt.meta.k_tx = static_cast<std::uint32_t>(config.geometry.k_tx);
    ckpt.meta.normalization_scalar = train_set.header.normalization_scalar;
    ckpt.meta.schedule = config.schedule;
    ckpt.meta.tx_origin = config.geometry.tx_origin;
    ckpt.params = result.params;
    ckpt.ema = result.ema;
    ckpt.adam = result.adam;
    write_checkpoint(ckpt, ckpt_path);

    std::ofstream csv = open_output(loss_csv);
    csv << "epoch,train_loss,test_loss\n";
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
        csv << e + 1 << "," << fmt(result.train_loss[e]) << "," << fmt(result.test_loss[e]) << "\n";
    }
    if (!csv) throw std::runtime_error("write to " + loss_csv + " failed");
    return result;
}

Dataset cmd_sample(const std::string& ckpt_path, const Vec3& rx_position, std::size_t num, std::uint64_t seed,
                   const std::string& out_path, std::optional<int> n_steps) {
    if (num < 1) throw std::invalid_argument("--num: must be >= 1");
    Checkpoint ckpt = read_checkpoint(ckpt_path);
    DiffusionSchedule schedule = ckpt.meta.schedule;
    if (n_steps) schedule.n_steps = *n_steps;
    schedule.validate();
    const GeometryCondition condition = condition_vector(ckpt.meta.tx_origin, rx_position);
    const DitModel model(ckpt.config, std::move(ckpt.ema));

    Dataset out;
    out.header.n_rx = static_cast<std::uint32_t>(ckpt.config.n_rx);
    out.header.n_tx = static_cast<std::uint32_t>(ckpt.config.n_tx);
    out.header.k_rx = ckpt.meta.k_rx;
    out.header.k_tx = ckpt.meta.k_tx;
    out.header.sample_count = num;
    out.header.normalization_scalar = 1.0;
    out.header.master_seed = seed;
    out.samples.resize(num);
    parallel_for(num, [&](std::size_t i) {
        Rng rng = stream_rng(seed, i);
        out.samples[i].condition = condition;
        out.samples[i].tensor =
            ckpt.meta.normalization_scalar * euler_sample(model, condition, schedule, rng, ckpt.config.tensor_size());
    });
    write_dataset(out, out_path);
    return out;
}

std::vector<std::string> parse_metrics(const std::string& list) {
    std::vector<std::string> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (std::find(kMetricNames.begin(), kMetricNames.end(), item) == kMetricNames.end()) {
            throw std::invalid_argument("unknown metric '" + item + "'; valid metrics: ssim, angular, nmse");
        }
        if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
    }
    if (out.empty()) throw std::invalid_argument("no metrics requested; valid metrics: ssim, angular, nmse");
    return out;
}

std::size_t cmd_eval(const std::string& gen_path, const std::string& ref_path, const EvalOptions& options,
                     const std::string& out_csv) {
    for (const auto& m : options.metrics) parse_metrics(m);
    const Dataset gen = read_dataset(gen_path);
    const Dataset ref = read_dataset(ref_path);
    if (gen.header.n_rx != ref.header.n_rx || gen.header.n_tx != ref.header.n_tx) {
        throw std::invalid_argument("dimension mismatch: generated " + std::to_string(gen.header.n_rx) + "x" +
                                    std::to_string(gen.header.n_tx) + " vs reference " +
                                    std::to_string(ref.header.n_rx) + "x" + std::to_string(ref.header.n_tx));
    }
    if (gen.samples.empty() || ref.samples.empty()) throw InsufficientDataError("eval: empty input file");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t g = 0; g < gen.samples.size(); ++g) {
        const Vec3 pg = gen.samples[g].condition.relative_position();
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < ref.samples.size(); ++r) {
            const double d = (ref.samples[r].condition.relative_position() - pg).norm();
            if (d < best_d) {
                best_d = d;
                best = r;
            }
        }
        if (best_d <= options.max_pair_distance) pairs.emplace_back(g, best);
    }
    if (pairs.empty()) {
        throw InsufficientDataError("eval: no generated condition lies within " + fmt(options.max_pair_distance) +
                                    " m of a reference condition");
    }

    std::vector<CMatrix> gen_h(pairs.size()), ref_h(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        gen_h[i] = channel_of(gen, pairs[i].first);
        ref_h[i] = channel_of(ref, pairs[i].second);
    }
    auto wants = [&](const char* m) {
        return std::find(options.metrics.begin(), options.metrics.end(), m) != options.metrics.end();
    };

    std::ofstream csv = open_output(out_csv);
    csv << "block,key,index,value\n";
    auto row = [&](const char* block, const std::string& key, std::size_t index, double value) {
        csv << block << "," << key << "," << index << "," << fmt(value) << "\n";
    };
    row("pairs", "count", 0, static_cast<double>(pairs.size()));

    if (wants("ssim")) {
        std::vector<ChannelPair> cp;
        for (std::size_t i = 0; i < pairs.size(); ++i) cp.push_back({&gen_h[i], &ref_h[i]});
        std::vector<double> values(cp.size());
        parallel_for(cp.size(), [&](std::size_t i) {
            values[i] = ssim_channel(*cp[i].generated, *cp[i].reference, options.ssim, options.ssim_mode);
        });
        const SsimCdf cdf = ssim_cdf(values);
        for (std::size_t i = 0; i < values.size(); ++i) row("ssim", "pair", i, values[i]);
        row("ssim", "mean", 0, cdf.mean);
        for (std::size_t i = 0; i < cdf.values.size(); ++i) {
            row("ssim_cdf", "value", i, cdf.values[i]);
            row("ssim_cdf", "cdf", i, cdf.cdf[i]);
        }
    }
    if (wants("angular")) {
        std::vector<ChannelMatrix> gm, rm;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            gm.push_back({gen_h[i], Domain::beamspace});
            rm.push_back({ref_h[i], Domain::beamspace});
        }
        const AngularPowerMap ga = angular_power(gm), ra = angular_power(rm);
        for (Eigen::Index k = 0; k < ga.tx_profile.size(); ++k) row("angular", "gen_tx", k, ga.tx_profile[k]);
        for (Eigen::Index k = 0; k < ga.rx_profile.size(); ++k) row("angular", "gen_rx", k, ga.rx_profile[k]);
        for (Eigen::Index k = 0; k < ra.tx_profile.size(); ++k) row("angular", "ref_tx", k, ra.tx_profile[k]);
        for (Eigen::Index k = 0; k < ra.rx_profile.size(); ++k) row("angular", "ref_rx", k, ra.rx_profile[k]);
        const PowerComparison pc = compare_power(ga, ra);
        row("angular", "tx_tv_distance", 0, pc.tx.tv_distance);
        row("angular", "tx_cosine_similarity", 0, pc.tx.cosine_similarity);
        row("angular", "tx_argmax_match", 0, pc.tx.argmax_match ? 1.0 : 0.0);
        row("angular", "rx_tv_distance", 0, pc.rx.tv_distance);
        row("angular", "rx_cosine_similarity", 0, pc.rx.cosine_similarity);
        row("angular", "rx_argmax_match", 0, pc.rx.argmax_match ? 1.0 : 0.0);
    }
    if (wants("nmse")) {
        std::vector<double> values(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            values[i] = nmse(gen_h[i], ref_h[i]);
            row("nmse", "pair", i, values[i]);
        }
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        const std::size_t n = sorted.size();
        const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        row("nmse", "mean", 0, mean);
        row("nmse", "median", 0, median);
        row("nmse", "min", 0, sorted.front());
        row("nmse", "max", 0, sorted.back());
    }
    if (!csv) throw std::runtime_error("write to " + out_csv + " failed");
    return pairs.size();
}

int run_cli(int argc, char** argv) {
    CLI::App app{"THz channel generation with a conditional diffusion transformer"};
    app.require_subcommand(1);

    std::string config_path, out, data, ckpt, loss_csv, pos, gen, ref, metrics = "ssim,angular,nmse", ssim_mode = "magnitude";
    std::size_t count = 0, num = 1;
    std::uint64_t seed = 0;
    std::optional<int> epochs, steps;
    double max_pair = 0.5;
    int ssim_window = 11;

    auto load = [&] { return config_path.empty() ? RunConfig{} : load_run_config(config_path); };

    auto* gen_cmd = app.add_subcommand("gen-data", "build, normalize, split and write a dataset");
    gen_cmd->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    gen_cmd->add_option("--out", out, "output directory (train.thzc, test.thzc)")->required();
    gen_cmd->add_option("--count", count, "number of channel realizations")->required();
    gen_cmd->add_option("--seed", seed, "master seed (overrides the config)");

    auto* train_cmd = app.add_subcommand("train", "train the denoiser");
    train_cmd->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data, "dataset directory or file")->required();
    train_cmd->add_option("--out-ckpt", ckpt, "checkpoint path")->required();
    train_cmd->add_option("--loss-csv", loss_csv, "per-epoch loss CSV (default <ckpt>.loss.csv)");
    train_cmd->add_option("--seed", seed, "training seed (overrides the config)");
    train_cmd->add_option("--epochs", epochs, "epoch count (overrides the config)");

    auto* sample_cmd = app.add_subcommand("sample", "generate channels at one Rx position");
    sample_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
    sample_cmd->add_option("--pos", pos, "absolute Rx position x,y,z in meters")->required();
    sample_cmd->add_option("--num", num, "number of samples");
    sample_cmd->add_option("--seed", seed, "sampling seed");
    sample_cmd->add_option("--out", out, "output dataset file")->required();
    sample_cmd->add_option("--steps", steps, "Euler steps (overrides the checkpoint schedule)");

    auto* eval_cmd = app.add_subcommand("eval", "compare generated and reference channels");
    eval_cmd->add_option("--gen", gen, "generated dataset file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--ref", ref, "reference dataset file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--metrics", metrics, "comma-separated subset of ssim,angular,nmse");
    eval_cmd->add_option("--out-csv", out, "metric CSV path")->required();
    eval_cmd->add_option("--max-pair-distance", max_pair, "max condition distance for pairing, meters");
    eval_cmd->add_option("--ssim-window", ssim_window, "SSIM window side");
    eval_cmd->add_option("--ssim-mode", ssim_mode, "magnitude or real_imag")
        ->check(CLI::IsMember({"magnitude", "real_imag"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen_cmd) {
            RunConfig cfg = load();
            if (gen_cmd->count("--seed") == 0) seed = cfg.seed;
            const GenDataSummary s = cmd_gen_data(cfg, out, count, seed);
            std::cout << "sample_count " << s.sample_count << "\ntrain_count " << s.train_count << "\ntest_count "
                      << s.test_count << "\nn_rx " << s.n_rx << "\nn_tx " << s.n_tx << "\nnormalization_scalar "
                      << fmt(s.normalization_scalar) << "\nseed " << s.seed << "\n";
        } else if (*train_cmd) {
            RunConfig cfg = load();
            if (train_cmd->count("--seed")) cfg.seed = cfg.training.seed = seed;
            if (epochs) cfg.training.epochs = *epochs;
            cfg.validate();
            if (loss_csv.empty()) loss_csv = ckpt + ".loss.csv";
            cmd_train(cfg, data, ckpt, loss_csv, &std::cerr);
            std::cout << "checkpoint " << ckpt << "\nloss_csv " << loss_csv << "\n";
        } else if (*sample_cmd) {
            const Dataset d = cmd_sample(ckpt, parse_position(pos), num, seed, out, steps);
            std::cout << "sample_count " << d.header.sample_count << "\n";
        } else if (*eval_cmd) {
            EvalOptions opt;
            opt.metrics = parse_metrics(metrics);
            opt.max_pair_distance = max_pair;
            opt.ssim.window = ssim_window;
            opt.ssim_mode = ssim_mode == "real_imag" ? SsimMode::real_imag : SsimMode::magnitude;
            const std::size_t n = cmd_eval(gen, ref, opt, out);
            std::cout << "pairs " << n << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace thz
