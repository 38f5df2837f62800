#include "doctest.h"
#include "support.hpp"

#include "thzdiff/diffusion.hpp"
#include "thzdiff/errors.hpp"
#include "thzdiff/params.hpp"

#include <cmath>
#include <cstring>
#include <limits>

using namespace thz;

namespace {

class IdentityDenoiser final : public Denoiser {
public:
    Eigen::VectorXd denoise(const Eigen::VectorXd& noisy, double, const GeometryCondition&) const override {
        return noisy;
    }
};

class ZeroDenoiser final : public Denoiser {
public:
    Eigen::VectorXd denoise(const Eigen::VectorXd& noisy, double, const GeometryCondition&) const override {
        return Eigen::VectorXd::Zero(noisy.size());
    }
};

// Returns a fixed tensor regardless of input.
class ConstantDenoiser final : public Denoiser {
public:
    explicit ConstantDenoiser(Eigen::VectorXd v) : v_(std::move(v)) {}
    Eigen::VectorXd denoise(const Eigen::VectorXd&, double, const GeometryCondition&) const override { return v_; }

private:
    Eigen::VectorXd v_;
};

// D = H + score * sigma^2, so the recovered score is the given constant.
class ScoreDenoiser final : public Denoiser {
public:
    explicit ScoreDenoiser(double score) : score_(score) {}
    Eigen::VectorXd denoise(const Eigen::VectorXd& noisy, double sigma, const GeometryCondition&) const override {
        return noisy.array() + score_ * sigma * sigma;
    }

private:
    double score_;
};

class NanDenoiser final : public Denoiser {
public:
    Eigen::VectorXd denoise(const Eigen::VectorXd& noisy, double, const GeometryCondition&) const override {
        return Eigen::VectorXd::Constant(noisy.size(), std::numeric_limits<double>::quiet_NaN());
    }
};

double variance(const Eigen::VectorXd& x) { return (x.array() - x.mean()).square().sum() / (x.size() - 1); }

}  // namespace

TEST_CASE("schedule") {
    DiffusionSchedule s;
    CHECK(s.horizon == 10.0);
    CHECK(s.sigma_min == 0.01);
    CHECK(s.n_steps == 100);
    auto grid = s.time_grid();
    REQUIRE(grid.size() == 101);
    CHECK(grid.front() == 10.0);
    CHECK(grid.back() == 0.01);
    for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] < grid[i - 1]);
    CHECK(grid[1] - grid[2] == doctest::Approx(grid[0] - grid[1]));
    Rng rng = stream_rng(1, 0);
    double mean_log = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double sigma = s.sample_training_sigma(rng);
        CHECK(sigma >= 0.01);
        CHECK(sigma <= 10.0);
        mean_log += std::log(sigma);
    }
    // log-uniform: mean of ln sigma is the midpoint of [ln 0.01, ln 10]
    CHECK(mean_log / 20000 == doctest::Approx(0.5 * (std::log(0.01) + std::log(10.0))).epsilon(0.02));
    DiffusionSchedule bad = s;
    bad.sigma_min = 20;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.n_steps = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("perturb") {
    Rng rng = stream_rng(2, 0);
    Eigen::VectorXd h0 = Eigen::VectorXd::LinSpaced(5, -1, 1);
    CHECK((perturb(h0, 0.0, rng) - h0).norm() == 0.0);
    CHECK_THROWS_AS(perturb(h0, -0.1, rng), std::invalid_argument);

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(100000);
    Eigen::VectorXd once = perturb(zero, 1.0, rng);
    CHECK(variance(once) >= 0.99);
    CHECK(variance(once) <= 1.01);
    // independent sigma_a then sigma_b adds variances
    Eigen::VectorXd twice = perturb(perturb(zero, 0.6, rng), 0.8, rng);
    CHECK(variance(twice) == doctest::Approx(1.0).epsilon(0.02));

    Rng a = stream_rng(4, 4), b = stream_rng(4, 4);
    CHECK((perturb(h0, 0.5, a) - perturb(h0, 0.5, b)).norm() == 0.0);
}

TEST_CASE("denoising loss") {
    DiffusionSchedule s;
    Rng rng = stream_rng(3, 0);
    std::vector<Eigen::VectorXd> clean;
    std::vector<GeometryCondition> cond(4);
    for (int i = 0; i < 4; ++i) clean.push_back(Eigen::VectorXd::Random(32));
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({&clean[i], &cond[i]});

    // constant oracle returning the clean tensor for a single-example batch
    ConstantDenoiser oracle(clean[0]);
    CHECK(denoising_loss(oracle, std::span(batch).first(1), s, rng) == 0.0);

    // identity denoiser at fixed sigma: expected per-entry loss sigma^2
    const double sigma = 0.7;
    IdentityDenoiser id;
    double total = 0.0;
    const int trials = 10000;
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
    GeometryCondition c0;
    TrainingExample ex{&x0, &c0};
    for (int t = 0; t < trials; ++t) {
        std::vector<NoiseDraw> draw{{sigma, perturb(x0, sigma, rng)}};
        total += denoising_loss(id, std::span(&ex, 1), draw);
    }
    CHECK(total / trials == doctest::Approx(sigma * sigma).epsilon(0.03));

    // zero denoiser: loss is the mean square of h0 whatever the noise
    ZeroDenoiser zero;
    double ms = 0.0;
    for (const auto& c : clean) ms += c.squaredNorm() / 32.0;
    CHECK(denoising_loss(zero, batch, s, rng) == doctest::Approx(ms / 4).epsilon(1e-12));

    // gradient hook: d/d prediction of the batch mean
    std::vector<Eigen::VectorXd> grads(4);
    denoising_loss(zero, batch, s, rng, [&](std::size_t i, const Eigen::VectorXd& g) { grads[i] = g; });
    for (int i = 0; i < 4; ++i) CHECK((grads[i] + 2.0 * clean[i] / (32.0 * 4)).norm() < 1e-14);

    CHECK_THROWS_AS(denoising_loss(zero, std::span<const TrainingExample>{}, s, rng), std::invalid_argument);
    NanDenoiser nan;
    try {
        denoising_loss(nan, batch, s, rng);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("sample 0") != std::string::npos);
    }
}

TEST_CASE("score from denoiser and the Gaussian oracle") {
    Eigen::VectorXd d(1), h(1);
    d << 3.0;
    h << 1.0;
    CHECK(score_from_denoiser(d, h, 2.0)[0] == doctest::Approx(0.5));
    CHECK(score_from_denoiser(h, h, 0.3).norm() == 0.0);
    CHECK_THROWS_AS(score_from_denoiser(d, h, 0.0), std::invalid_argument);

    Rng rng = stream_rng(6, 0);
    Eigen::VectorXd mu = Eigen::VectorXd::Random(16);
    AnalyticGaussianDenoiser g(mu, 0.8);
    GeometryCondition c;
    for (double sigma : {0.01, 0.3, 1.0, 4.0, 10.0}) {
        Eigen::VectorXd x = perturb(mu, 2.0, rng);
        Eigen::VectorXd s = score_from_denoiser(g.denoise(x, sigma, c), x, sigma);
        Eigen::VectorXd exact = -(x - mu) / (0.64 + sigma * sigma);
        CHECK((s - exact).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((g.exact_score(x, sigma) - exact).cwiseAbs().maxCoeff() < 1e-12);
    }
    Eigen::VectorXd x = perturb(mu, 1.0, rng);
    CHECK((g.denoise(x, 0.0, c) - x).norm() < 1e-15);
    CHECK((g.denoise(x, std::numeric_limits<double>::infinity(), c) - mu).norm() < 1e-15);
    CHECK((g.denoise(x, 0.8, c) - 0.5 * (x + mu)).norm() < 1e-14);
    CHECK_THROWS_AS(AnalyticGaussianDenoiser(mu, -1.0), std::invalid_argument);
}

TEST_CASE("euler: scalar step arithmetic") {
    // H = 2, t = 1, score = -0.5, dt = 0.1: H + dt * t * score = 1.95
    DiffusionSchedule s;
    s.horizon = 1.0;
    s.sigma_min = 0.9;
    s.n_steps = 1;
    ScoreDenoiser den(-0.5);
    Eigen::VectorXd h(1);
    h << 2.0;
    CHECK(euler_integrate(den, GeometryCondition{}, s, h)[0] == doctest::Approx(1.95).epsilon(1e-14));
}

TEST_CASE("euler: Gaussian transport, point mass, determinism, divergence") {
    DiffusionSchedule s;
    s.n_steps = 200;
    AnalyticGaussianDenoiser unit(Eigen::VectorXd::Zero(1), 1.0);
    Eigen::VectorXd out(4000);
    for (int i = 0; i < out.size(); ++i) {
        Rng rng = stream_rng(10, i);
        out[i] = euler_sample(unit, GeometryCondition{}, s, rng, 1)[0];
    }
    CHECK(variance(out) >= 0.95);
    CHECK(variance(out) <= 1.05);

    AnalyticGaussianDenoiser point(Eigen::VectorXd::Constant(3, 5.0), 1e-9);
    for (int i = 0; i < 50; ++i) {
        Rng rng = stream_rng(11, i);
        Eigen::VectorXd x = euler_sample(point, GeometryCondition{}, s, rng, 3);
        CHECK((x.array() - 5.0).abs().maxCoeff() < 0.05);
    }

    Rng a = stream_rng(12, 0), b = stream_rng(12, 0);
    Eigen::VectorXd xa = euler_sample(unit, GeometryCondition{}, s, a, 8);
    Eigen::VectorXd xb = euler_sample(unit, GeometryCondition{}, s, b, 8);
    CHECK(std::memcmp(xa.data(), xb.data(), sizeof(double) * 8) == 0);

    NanDenoiser nan;
    try {
        euler_sample(nan, GeometryCondition{}, s, a, 2);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("euler: first-order convergence against the exact Gaussian flow") {
    // prior N(0, 1): the flow is H(t) = H(T) sqrt((1 + t^2) / (1 + T^2))
    AnalyticGaussianDenoiser unit(Eigen::VectorXd::Zero(1), 1.0);
    auto mean_error = [&](int steps) {
        DiffusionSchedule s;
        s.n_steps = steps;
        const double factor = std::sqrt((1 + s.sigma_min * s.sigma_min) / (1 + s.horizon * s.horizon));
        double err = 0.0;
        for (int i = 0; i < 500; ++i) {
            Rng rng = stream_rng(13, i);
            Eigen::VectorXd start(1);
            start[0] = s.horizon * standard_normal(rng);
            err += std::abs(euler_integrate(unit, GeometryCondition{}, s, start)[0] - factor * start[0]);
        }
        return err / 500;
    };
    const double coarse = mean_error(50), fine = mean_error(100);
    CHECK(coarse / fine >= 1.8);
}

TEST_CASE("ema") {
    std::vector<double> shadow(3, 0.0), current{1.0, -2.0, 0.5};
    ema_update(shadow, current, 0.0);
    CHECK(shadow == current);
    std::vector<double> keep{4.0, 5.0, 6.0};
    ema_update(keep, current, 1.0);
    CHECK(keep == std::vector<double>{4.0, 5.0, 6.0});

    std::vector<double> s(1, 0.0), c{3.0};
    for (int k = 1; k <= 500; ++k) {
        ema_update(s, c, 0.999);
        if (k % 100 == 0) CHECK(s[0] == doctest::Approx(3.0 * (1 - std::pow(0.999, k))).epsilon(1e-12));
    }
    std::vector<double> wrong(2);
    CHECK_THROWS_AS(ema_update(wrong, current, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(ema_update(shadow, current, 1.5), std::invalid_argument);

    ParameterStore p, q;
    p.add("w", {2, 2});
    q.add("w", {2, 2}).values.setConstant(2.0);
    ema_update(p, q, 0.5);
    CHECK(p.at("w").values.isApproxToConstant(1.0));
    ParameterStore r;
    r.add("w", {4});
    CHECK_THROWS_AS(ema_update(p, r, 0.5), std::invalid_argument);
}
