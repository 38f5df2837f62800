#include "doctest.h"
#include "support.hpp"

#include "thzdiff/config.hpp"
#include "thzdiff/errors.hpp"

#include <fstream>
#include <string>

using namespace thz;

namespace {

std::string field_of(const std::string& json) {
    try {
        parse_run_config(json);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

}  // namespace

TEST_CASE("empty object yields defaults") {
    RunConfig c = parse_run_config("{}");
    CHECK(c.geometry.n_tx == 256);
    CHECK(c.geometry.n_rx == 64);
    CHECK(c.dit.n_rx == 64);
    CHECK(c.dit.n_tx == 256);
    CHECK(c.schedule.horizon == 10.0);
    CHECK(c.schedule.n_steps == 100);
    CHECK(c.training.adam.lr == 1e-4);
    CHECK(c.training.adam.epsilon == 1e-3);
    CHECK(c.training.ema_decay == 0.999);
    const double wl = kSpeedOfLight / 300e9;
    CHECK(c.geometry.intra_spacing == doctest::Approx(0.5 * wl));
    // 16 lambda is narrower than a 128-element subarray: the default widens to a 16 lambda gap
    CHECK(c.geometry.inter_spacing == 0.0);
    CHECK(ArrayGeometry(c.geometry).inter_spacing() == doctest::Approx(79.5 * wl));
    RunConfig toy = parse_run_config(R"({"geometry": {"n_tx": 16, "n_rx": 8, "k_tx": 2, "k_rx": 2}})");
    CHECK(ArrayGeometry(toy.geometry).inter_spacing() == doctest::Approx(16.0 * wl));
}

TEST_CASE("values are read and propagated") {
    RunConfig c = parse_run_config(R"({
        "geometry": {"n_tx": 16, "n_rx": 8, "k_tx": 2, "k_rx": 2, "inter_spacing_wavelengths": 4,
                     "array_axis": [0, 2, 0]},
        "gscm": {"k_factor_mean_db": 12.5},
        "region": {"lo": [3, -1, 0], "hi": [4, 1, 0.2]},
        "dit": {"embed_dim": 32, "depth": 2},
        "training": {"epochs": 3, "lr": 0.002},
        "split": {"test_fraction": 0.2},
        "paths": {"data": "d", "checkpoint": "c.ckpt"},
        "seed": 42
    })");
    CHECK(c.geometry.n_tx == 16);
    CHECK(c.dit.n_tx == 16);
    CHECK(c.dit.n_rx == 8);
    CHECK(c.geometry.array_axis.y() == 1.0);
    CHECK(c.geometry.inter_spacing == doctest::Approx(4.0 * kSpeedOfLight / 300e9));
    CHECK(c.gscm.k_factor_mean_db == 12.5);
    CHECK(c.region.lo.x() == 3.0);
    CHECK(c.dit.embed_dim == 32);
    CHECK(c.training.epochs == 3);
    CHECK(c.training.adam.lr == 0.002);
    CHECK(c.training.seed == 42);
    CHECK(c.split.test_fraction == 0.2);
    CHECK(c.paths.checkpoint == "c.ckpt");
}

TEST_CASE("errors name the offending field") {
    CHECK(field_of(R"({"geometry": {"n_tx": 16, "k_tx": 3}})") == "geometry.k_tx");
    CHECK(field_of(R"({"geometry": {"bogus": 1}})") == "geometry.bogus");
    CHECK(field_of(R"({"extra": true})") == "extra");
    CHECK(field_of(R"({"training": {"epochs": "ten"}})") == "training.epochs");
    CHECK(field_of(R"({"training": {"epochs": 1.5}})") == "training.epochs");
    CHECK(field_of(R"({"region": {"lo": [1, 2]}})") == "region.lo");
    CHECK(field_of(R"({"split": {"test_fraction": 1.5}})") == "split.test_fraction");
    CHECK(field_of(R"({"geometry": 3})") == "geometry");
    CHECK(field_of(R"({"geometry": {"n_tx": 16, "k_tx": 2, "inter_spacing_wavelengths": 2}})") == "geometry");
    CHECK(field_of("{not json") == "<root>");
    CHECK(field_of(R"({"geometry": {"n_tx": 16, "n_rx": 8, "k_tx": 2, "k_rx": 2}, "dit": {"patch_size": 3}})")
              .rfind("dit", 0) == 0);

    try {
        parse_run_config(R"({"geometry": {"n_tx": 16, "k_tx": 3}})");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()) == "geometry.k_tx: must divide n_tx (16), got 3");
    }
}

TEST_CASE("json round trip and file loading") {
    RunConfig c = parse_run_config(R"({"geometry": {"n_tx": 16, "n_rx": 8, "k_tx": 2, "k_rx": 1},
                                       "training": {"epochs": 7}, "seed": 5})");
    RunConfig back = parse_run_config(to_json(c));
    CHECK(back.geometry.n_tx == 16);
    CHECK(back.geometry.k_rx == 1);
    CHECK(back.geometry.inter_spacing == doctest::Approx(c.geometry.inter_spacing));
    CHECK(back.training.epochs == 7);
    CHECK(back.seed == 5);
    CHECK(to_json(back) == to_json(c));

    auto dir = test::temp_dir("config");
    std::ofstream(dir / "c.json") << to_json(c);
    CHECK(load_run_config((dir / "c.json").string()).training.epochs == 7);
    CHECK_THROWS(load_run_config((dir / "missing.json").string()));
}
