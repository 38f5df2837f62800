#include "doctest.h"
#include "support.hpp"

#include "thzdiff/channel.hpp"
#include "thzdiff/errors.hpp"
#include "thzdiff/geometry.hpp"

#include <cmath>

using namespace thz;

TEST_CASE("array layout: element positions and validation") {
    ArrayLayout l = test::small_layout(8, 4, 2, 2);
    ArrayGeometry g(l);
    const double lambda = kSpeedOfLight / l.carrier_frequency;
    CHECK(g.wavelength() == doctest::Approx(lambda).epsilon(1e-15));
    CHECK(g.element_positions(Side::tx).size() == 8);
    CHECK(g.subarray_centers(Side::rx).size() == 2);
    // centers sit at +-inter/2 = +-8 lambda along y, elements at +-0.75 lambda, +-0.25 lambda around them
    CHECK(g.subarray_centers(Side::tx)[1].y() == doctest::Approx(8 * lambda));
    CHECK(g.element_positions(Side::tx)[0].y() == doctest::Approx(-8 * lambda - 0.75 * lambda));
    for (int k = 0; k < 2; ++k) {
        Vec3 mean = Vec3::Zero();
        for (int m = 0; m < 4; ++m) mean += g.element_positions(Side::tx)[k * 4 + m];
        CHECK((mean / 4 - g.subarray_centers(Side::tx)[k]).norm() < 1e-15);
    }

    ArrayLayout bad = l;
    bad.k_tx = 3;
    CHECK_THROWS_AS(ArrayGeometry{bad}, std::invalid_argument);
    bad = l;
    bad.inter_spacing = 1.0 * lambda;  // subarray aperture 1.5 lambda does not fit
    CHECK_THROWS_AS(ArrayGeometry{bad}, std::invalid_argument);
    bad = l;
    bad.carrier_frequency = 0;
    CHECK_THROWS_AS(ArrayGeometry{bad}, std::invalid_argument);
}

TEST_CASE("rayleigh distance") {
    // 2 * 0.1275^2 / 0.001
    CHECK(rayleigh_distance(0.1275, 0.001) == doctest::Approx(32.5125).epsilon(1e-12));
    CHECK(std::abs(rayleigh_distance(0.1275, 0.001) - 32.51) <= 0.01);
    CHECK(rayleigh_distance(0.255, 0.001) == doctest::Approx(4 * 32.5125));
    CHECK(rayleigh_distance(0.1275, 0.002) == doctest::Approx(32.5125 / 2));
    CHECK_THROWS_AS(rayleigh_distance(0.0, 0.001), std::invalid_argument);
    CHECK_THROWS_AS(rayleigh_distance(0.1, -1.0), std::invalid_argument);
}

TEST_CASE("condition vector") {
    GeometryCondition c = condition_vector(Vec3(1, 1, 1), Vec3(4, 5, 1));
    const double expected[8] = {5, 3, 4, 0, 0.8, 0.6, 0, 1};
    for (int i = 0; i < 8; ++i) CHECK(c.p[i] == doctest::Approx(expected[i]).epsilon(1e-14));

    GeometryCondition axis = condition_vector(Vec3::Zero(), Vec3(7.5, 0, 0));
    const double ax[8] = {7.5, 7.5, 0, 0, 0, 1, 0, 1};
    for (int i = 0; i < 8; ++i) CHECK(axis.p[i] == doctest::Approx(ax[i]));

    Rng rng = stream_rng(11, 0);
    for (int t = 0; t < 200; ++t) {
        Vec3 rx(uniform(rng, -9, 9), uniform(rng, -9, 9), uniform(rng, -9, 9));
        GeometryCondition q = condition_vector(Vec3::Zero(), rx);
        CHECK(std::abs(q.p[4] * q.p[4] + q.p[5] * q.p[5] - 1) < 1e-12);
        CHECK(std::abs(q.p[6] * q.p[6] + q.p[7] * q.p[7] - 1) < 1e-12);
        CHECK(std::abs(q.p[0] - rx.norm()) < 1e-12);
    }
    CHECK_THROWS_AS(condition_vector(Vec3(1, 2, 3), Vec3(1, 2, 3)), DegenerateGeometryError);
}

TEST_CASE("direction conventions") {
    Direction d = direction_of(Vec3(-1, 0, 0));
    CHECK(d.azimuth == doctest::Approx(kPi));
    d = direction_of(Vec3(0, 0, -2));
    CHECK(d.elevation == doctest::Approx(-kPi / 2));
    CHECK_THROWS_AS(direction_of(Vec3::Zero()), DegenerateGeometryError);
    Direction e{0.3, -0.2};
    Direction back = direction_of(unit_vector(e));
    CHECK(back.azimuth == doctest::Approx(0.3));
    CHECK(back.elevation == doctest::Approx(-0.2));
}

TEST_CASE("steering vector: broadside and endfire") {
    ArrayGeometry g(test::small_layout(4, 4));
    CVector broad = steering_vector(g, Side::tx, kFullArray, Direction{0.0, 0.0});
    for (int k = 0; k < 4; ++k) CHECK(std::abs(broad[k] - Complex(0.5, 0)) < 1e-12);

    // endfire along +y: offsets (k - 1.5) lambda/2 give phases -pi (k - 1.5), i.e. (1/2)[1,-1,1,-1] up to the
    // common factor exp(j 1.5 pi) set by the centroid reference
    CVector end = steering_vector(g, Side::tx, kFullArray, Direction{kPi / 2, 0.0});
    const double alt[4] = {0.5, -0.5, 0.5, -0.5};
    const Complex common = end[0] / alt[0];
    CHECK(std::abs(std::abs(common) - 1.0) < 1e-12);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(end[k] - common * alt[k]) < 1e-12);
}

TEST_CASE("steering vector: unit norm, reversal conjugates, bad index") {
    ArrayGeometry g(test::small_layout(16, 8, 2, 2));
    Rng rng = stream_rng(5, 0);
    for (int t = 0; t < 50; ++t) {
        Direction d{uniform(rng, -kPi, kPi), uniform(rng, -kPi / 2, kPi / 2)};
        for (int sub : {kFullArray, 0, 1}) {
            CVector a = steering_vector(g, Side::tx, sub, d);
            CHECK(std::abs(a.norm() - 1.0) < 1e-12);
            CVector b = steering_vector(g, Side::tx, sub, direction_of(-unit_vector(d)));
            CHECK((b - a.conjugate()).norm() < 1e-10);
        }
    }
    CHECK_THROWS_AS(steering_vector(g, Side::rx, 2, Direction{}), std::out_of_range);
    CHECK_THROWS_AS(steering_vector(g, Side::rx, -3, Direction{}), std::out_of_range);
}
