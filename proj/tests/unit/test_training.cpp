#include "doctest.h"
#include "support.hpp"

#include "thzdiff/errors.hpp"
#include "thzdiff/training.hpp"

#include <cmath>
#include <stdexcept>

using namespace thz;

namespace {

DitConfig tiny_config() {
    DitConfig c;
    c.n_rx = 8;
    c.n_tx = 8;
    c.patch_size = 4;
    c.embed_dim = 16;
    c.depth = 1;
    c.n_heads = 2;
    return c;
}

Dataset tiny_dataset(std::uint64_t seed, std::size_t n) {
    ArrayGeometry g(test::small_layout(8, 8, 2, 2));
    Dataset d = build_dataset(seed, g, GscmConfig{}, PositionRegion{}, n);
    normalize(d);
    return d;
}

ParameterStore single(const std::string& name, std::vector<double> values) {
    ParameterStore s;
    Tensor& t = s.add(name, {static_cast<int>(values.size())});
    for (std::size_t i = 0; i < values.size(); ++i) t.values[static_cast<Eigen::Index>(i)] = values[i];
    return s;
}

bool identical(const ParameterStore& a, const ParameterStore& b) {
    if (!a.same_layout(b)) return false;
    for (std::size_t i = 0; i < a.count(); ++i)
        if (a[i].values != b[i].values) return false;
    return true;
}

}  // namespace

TEST_CASE("adam first steps against hand-computed moments") {
    AdamConfig cfg;
    ParameterStore p = single("w", {1.0, -2.0, 0.0});
    AdamState st = AdamState::for_params(p);
    ParameterStore g = single("w", {1.0, 0.5, 0.0});
    adam_step(p, g, st, cfg);
    CHECK(st.step == 1);
    // bias-corrected moments equal g and g^2 after one step
    CHECK(p[0].values[0] == doctest::Approx(1.0 - 1e-4 / (1.0 + 1e-3)).epsilon(1e-14));
    CHECK(p[0].values[1] == doctest::Approx(-2.0 - 1e-4 * 0.5 / (0.5 + 1e-3)).epsilon(1e-14));
    CHECK(p[0].values[2] == 0.0);

    ParameterStore g2 = single("w", {-1.0, 0.5, 0.0});
    const double before = p[0].values[0];
    adam_step(p, g2, st, cfg);
    const double m = (0.9 * 0.1 * 1.0 + 0.1 * -1.0) / (1.0 - 0.81);
    const double v = (0.999 * 0.001 * 1.0 + 0.001 * 1.0) / (1.0 - 0.999 * 0.999);
    CHECK(p[0].values[0] == doctest::Approx(before - 1e-4 * m / (std::sqrt(v) + 1e-3)).epsilon(1e-12));
}

TEST_CASE("adam leaves parameters alone for zero gradients or zero learning rate") {
    ParameterStore p = single("w", {0.3, -0.7});
    AdamState st = AdamState::for_params(p);
    adam_step(p, single("w", {0.0, 0.0}), st, AdamConfig{});
    CHECK(p[0].values == single("w", {0.3, -0.7})[0].values);

    AdamConfig frozen;
    frozen.lr = 0.0;
    adam_step(p, single("w", {5.0, -5.0}), st, frozen);
    CHECK(p[0].values == single("w", {0.3, -0.7})[0].values);

    CHECK_THROWS_AS(adam_step(p, single("x", {1.0, 1.0}), st, AdamConfig{}), std::invalid_argument);
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    CHECK_NOTHROW(tc.validate());
    TrainConfig bad = tc;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tc;
    bad.ema_decay = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tc;
    bad.adam.lr = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("fixed test draws are reproducible and inside the schedule") {
    Dataset d = tiny_dataset(3, 12);
    DiffusionSchedule s;
    auto a = fixed_test_draws(d, s, 9);
    auto b = fixed_test_draws(d, s, 9);
    auto c = fixed_test_draws(d, s, 10);
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].sigma == b[i].sigma);
        CHECK(a[i].noisy == b[i].noisy);
        CHECK(a[i].sigma >= s.sigma_min);
        CHECK(a[i].sigma <= s.horizon);
    }
    CHECK(a[0].noisy != c[0].noisy);
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
    Dataset d = tiny_dataset(4, 3);
    DitModel m = DitModel::initialize(tiny_config(), 2);
    Rng rng = stream_rng(5, 0);
    for (auto& t : m.params())
        for (double& v : t.values) v += 0.1 * standard_normal(rng);
    std::vector<TrainingExample> batch;
    for (const auto& s : d.samples) batch.push_back({&s.tensor, &s.condition});
    auto draws = draw_noise(batch, DiffusionSchedule{}, rng);

    ParameterStore total = m.params().zeros_like();
    double loss = batch_gradient(m, batch, draws, total);

    ParameterStore manual = m.params().zeros_like();
    double manual_loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        DitForwardCache cache = m.forward(draws[i].noisy, draws[i].sigma, *batch[i].condition);
        manual_loss += sample_loss(cache.output, *batch[i].clean) / 3.0;
        m.backward(cache, sample_loss_gradient(cache.output, *batch[i].clean) / 3.0, manual);
    }
    CHECK(loss == doctest::Approx(manual_loss).epsilon(1e-12));
    for (std::size_t k = 0; k < total.count(); ++k)
        CHECK((total[k].values - manual[k].values).norm() <= 1e-12 * (1.0 + manual[k].values.norm()));
}

TEST_CASE("training is deterministic under a seed") {
    Dataset train_set = tiny_dataset(6, 24);
    Dataset test_set = tiny_dataset(7, 8);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.adam.lr = 1e-3;
    tc.seed = 17;
    std::vector<EpochReport> reports;
    TrainResult a = train(train_set, test_set, tiny_config(), DiffusionSchedule{}, tc,
                          [&](const EpochReport& r) { reports.push_back(r); });
    TrainResult b = train(train_set, test_set, tiny_config(), DiffusionSchedule{}, tc);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].epoch == 1);
    CHECK(reports[1].epoch == 2);
    CHECK(reports[1].test_loss == a.test_loss[1]);
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.test_loss == b.test_loss);
    CHECK(identical(a.params, b.params));
    CHECK(identical(a.ema, b.ema));
    CHECK(a.adam.step == 12);

    tc.seed = 18;
    TrainResult c = train(train_set, test_set, tiny_config(), DiffusionSchedule{}, tc);
    CHECK(c.train_loss != a.train_loss);
}

TEST_CASE("empty test set reports NaN test loss") {
    Dataset train_set = tiny_dataset(6, 8);
    Dataset empty;
    empty.header = train_set.header;
    empty.header.sample_count = 0;
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 4;
    TrainResult r = train(train_set, empty, tiny_config(), DiffusionSchedule{}, tc);
    REQUIRE(r.test_loss.size() == 1);
    CHECK(std::isnan(r.test_loss[0]));
    CHECK(std::isfinite(r.train_loss[0]));
}

TEST_CASE("dimension mismatch and divergence are reported") {
    Dataset train_set = tiny_dataset(6, 8);
    DitConfig wide = tiny_config();
    wide.n_tx = 16;
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(train(train_set, Dataset{}, wide, DiffusionSchedule{}, tc), std::invalid_argument);

    ParameterStore init = DitModel::initialize(tiny_config(), 1).params();
    init.at("patch.bias").values[0] = std::nan("");
    try {
        train(train_set, Dataset{}, tiny_config(), DiffusionSchedule{}, tc, {}, init);
        FAIL("expected a NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
    }
}

TEST_CASE("training memorizes a handful of samples") {
    Dataset train_set = tiny_dataset(8, 4);
    DiffusionSchedule s;
    // narrow noise band around the probe level
    s.sigma_min = 0.25;
    s.horizon = 1.0;
    std::vector<NoiseDraw> probe;
    Rng rng = stream_rng(99, 0);
    for (int rep = 0; rep < 8; ++rep)
        for (const auto& smp : train_set.samples) probe.push_back({0.5, perturb(smp.tensor, 0.5, rng)});
    Dataset probe_set;
    probe_set.header = train_set.header;
    for (int rep = 0; rep < 8; ++rep)
        for (const auto& smp : train_set.samples) probe_set.samples.push_back(smp);

    DitConfig cfg = tiny_config();
    cfg.embed_dim = 32;
    cfg.depth = 2;
    DitModel init = DitModel::initialize(cfg, 1);
    const double before = evaluate_loss(init, probe_set, probe);

    TrainConfig tc;
    tc.epochs = 10000;
    tc.batch_size = 4;
    tc.adam.lr = 3e-3;
    tc.ema_decay = 0.0;
    tc.seed = 2;
    TrainResult r = train(train_set, Dataset{}, cfg, s, tc);
    const double after = evaluate_loss(DitModel(cfg, r.params), probe_set, probe);
    MESSAGE("loss at sigma 0.5: " << before << " -> " << after);
    CHECK(after < 0.1 * before);
}
