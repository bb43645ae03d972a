#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "resdepth/evaluation.hpp"
#include "resdepth/rng.hpp"

using namespace resdepth;

namespace {

GridHeader grid(int rows, int cols) {
    return {0.0, static_cast<double>(rows), 1.0, rows, cols};
}

Raster2D raster_of(std::vector<double> values, int rows, int cols) {
    return Raster2D(grid(rows, cols), std::move(values));
}

// Naive reference implementations (plain accumulation).
double naive_mae(const std::vector<double>& e) {
    double s = 0;
    for (double v : e) s += std::abs(v);
    return s / e.size();
}
double naive_rmse(const std::vector<double>& e) {
    double s = 0;
    for (double v : e) s += v * v;
    return std::sqrt(s / e.size());
}
double naive_median(std::vector<double> e) {
    std::sort(e.begin(), e.end());
    return e.size() % 2 ? e[e.size() / 2] : 0.5 * (e[e.size() / 2 - 1] + e[e.size() / 2]);
}

} // namespace

TEST_CASE("metric examples from first principles") {
    const Raster2D ref = raster_of({1, 1, 1, 1}, 2, 2);

    CHECK(mae(ref, ref) == 0.0);
    CHECK(rmse(ref, ref) == 0.0);
    CHECK(medae(ref, ref) == 0.0);

    // errors {-1, +3} -> mae 2
    CHECK(mae(raster_of({0, 4}, 1, 2), raster_of({1, 1}, 1, 2)) == doctest::Approx(2.0));

    // errors {3, -1} -> rmse sqrt(5)
    CHECK(rmse(raster_of({4, 0}, 1, 2), raster_of({1, 1}, 1, 2)) ==
          doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));

    // |errors| {1, 3} -> medae 2 (even median averages the central pair)
    CHECK(medae(raster_of({2, 4}, 1, 2), raster_of({1, 1}, 1, 2)) == doctest::Approx(2.0));

    // single pixel -> its absolute error
    CHECK(medae(raster_of({5}, 1, 1), raster_of({1.5}, 1, 1)) == doctest::Approx(3.5));

    // bias: pred = ref + 2 -> +2; median of {-1, 2, 5} -> 2; antisymmetric -> 0
    CHECK(bias(raster_of({3, 3}, 1, 2), raster_of({1, 1}, 1, 2)) == doctest::Approx(2.0));
    CHECK(bias(raster_of({0, 3, 6}, 1, 3), raster_of({1, 1, 1}, 1, 3)) == doctest::Approx(2.0));
    CHECK(bias(raster_of({1 - 4.0, 1 + 4.0}, 1, 2), raster_of({1, 1}, 1, 2)) ==
          doctest::Approx(0.0));
}

TEST_CASE("masked pixels leave the statistics") {
    const Raster2D pred = raster_of({2, 4}, 1, 2);
    const Raster2D ref = raster_of({1, 1}, 1, 2);
    Mask include(pred.header());
    include.set(0, 0, true); // only the first pixel
    CHECK(mae(pred, ref, &include) == doctest::Approx(1.0));

    Mask none(pred.header());
    CHECK_THROWS_AS(mae(pred, ref, &none), InputError);
}

TEST_CASE("metrics match naive references within 1e-12 on random arrays") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(512));
        std::vector<double> pv(n), rv(n), errors(n);
        for (int i = 0; i < n; ++i) {
            rv[i] = rng.uniform(-100.0, 500.0);
            errors[i] = rng.normal(0.0, 5.0);
            pv[i] = rv[i] + errors[i];
        }
        const Raster2D pred = raster_of(pv, 1, n);
        const Raster2D ref = raster_of(rv, 1, n);

        std::vector<double> e(n);
        for (int i = 0; i < n; ++i) e[i] = pv[i] - rv[i];

        const double m = mae(pred, ref);
        const double r = rmse(pred, ref);
        CHECK(std::abs(m - naive_mae(e)) <= 1e-12 * std::max(1.0, naive_mae(e)));
        CHECK(std::abs(r - naive_rmse(e)) <= 1e-12 * std::max(1.0, naive_rmse(e)));
        std::vector<double> abse(n);
        for (int i = 0; i < n; ++i) abse[i] = std::abs(e[i]);
        CHECK(medae(pred, ref) == naive_median(abse));
        CHECK(bias(pred, ref) == naive_median(e));
        CHECK(r >= m - 1e-15); // Jensen
    }

    // One large array for the reduction path.
    const int big = 1'000'000;
    std::vector<double> pv(big), rv(big);
    for (int i = 0; i < big; ++i) {
        rv[i] = rng.uniform(0.0, 100.0);
        pv[i] = rv[i] + rng.normal(0.0, 2.0);
    }
    const Raster2D pred = raster_of(pv, 1000, 1000);
    const Raster2D ref = raster_of(rv, 1000, 1000);
    std::vector<double> e(big);
    for (int i = 0; i < big; ++i) e[i] = pv[i] - rv[i];
    CHECK(std::abs(mae(pred, ref) - naive_mae(e)) <= 1e-12);
    CHECK(std::abs(rmse(pred, ref) - naive_rmse(e)) <= 1e-12);
}

TEST_CASE("metrics are permutation-invariant and shift-stable") {
    Rng rng(23);
    const int n = 257;
    std::vector<double> pv(n), rv(n);
    for (int i = 0; i < n; ++i) {
        rv[i] = rng.uniform(0.0, 50.0);
        pv[i] = rv[i] + rng.normal(0.0, 3.0);
    }
    const double m0 = mae(raster_of(pv, 1, n), raster_of(rv, 1, n));
    const double b0 = bias(raster_of(pv, 1, n), raster_of(rv, 1, n));

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    std::vector<double> pp(n), rp(n);
    for (int i = 0; i < n; ++i) {
        pp[i] = pv[perm[i]];
        rp[i] = rv[perm[i]];
    }
    CHECK(mae(raster_of(pp, 1, n), raster_of(rp, 1, n)) == doctest::Approx(m0).epsilon(1e-13));

    // Adding a constant to both leaves MAE and bias unchanged.
    std::vector<double> ps(pv), rs(rv);
    for (int i = 0; i < n; ++i) {
        ps[i] += 250.0;
        rs[i] += 250.0;
    }
    CHECK(mae(raster_of(ps, 1, n), raster_of(rs, 1, n)) == doctest::Approx(m0).epsilon(1e-12));
    CHECK(bias(raster_of(ps, 1, n), raster_of(rs, 1, n)) == doctest::Approx(b0).epsilon(1e-12));
}

TEST_CASE("evaluate: exclusion, class split with 2-pixel dilation, empty classes") {
    const int n = 32;
    Rng rng(31);
    Raster2D ref(grid(n, n), 0.0);
    Raster2D pred = ref;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) pred.at(r, c) = rng.normal(0.0, 1.0);

    Mask buildings(ref.header());
    for (int r = 10; r < 16; ++r)
        for (int c = 10; c < 16; ++c) buildings.set(r, c, true);

    // Full-true exclusion: metric error.
    Mask all(ref.header(), true);
    CHECK_THROWS_AS(evaluate(pred, ref, &buildings, &all), InputError);

    // Full-false exclusion equals unmasked metrics.
    Mask none(ref.header());
    const auto rep = evaluate(pred, ref, &buildings, &none);
    CHECK(rep.overall.mae == doctest::Approx(mae(pred, ref)).epsilon(1e-12));

    // The building class uses exactly a 2-pixel dilation: pixels at Chebyshev
    // distance 2 from the footprint belong to buildings, distance 3 to terrain.
    const auto rep2 = evaluate(pred, ref, &buildings, nullptr);
    REQUIRE(rep2.buildings.has_value());
    REQUIRE(rep2.terrain.has_value());
    const Mask dilated = dilate_mask(buildings, 2);
    CHECK(rep2.buildings->n_pixels == dilated.count_true());
    CHECK(rep2.terrain->n_pixels == n * n - dilated.count_true());
    CHECK(dilated.at(8, 10));       // distance 2
    CHECK_FALSE(dilated.at(7, 10)); // distance 3

    // Empty building mask: terrain equals overall.
    Mask empty(ref.header());
    const auto rep3 = evaluate(pred, ref, &empty, nullptr);
    CHECK_FALSE(rep3.buildings.has_value());
    REQUIRE(rep3.terrain.has_value());
    CHECK(rep3.terrain->mae == doctest::Approx(rep3.overall.mae).epsilon(1e-12));

    // Pixel shares in the JSON/table paths do not throw.
    CHECK(rep2.to_json().size() > 0);
    CHECK(rep2.table().find("Buildings") != std::string::npos);
}

TEST_CASE("height bands: shares, default edges, squeeze diagnostics") {
    const int n = 24;
    Raster2D terrain(grid(n, n), 0.0);
    Raster2D ref = terrain;
    Mask buildings(terrain.header());

    // One 6x6 building of height 15 -> band [10, 20).
    for (int r = 4; r < 10; ++r)
        for (int c = 4; c < 10; ++c) {
            ref.at(r, c) = 15.0;
            buildings.set(r, c, true);
        }
    // Underestimate the building by 6 m.
    Raster2D pred = ref;
    for (int r = 4; r < 10; ++r)
        for (int c = 4; c < 10; ++c) pred.at(r, c) = 9.0;

    const auto rows = height_band_stats(pred, ref, terrain, buildings);
    REQUIRE(rows.size() == kDefaultBandEdges.size());
    CHECK(rows[0].lo == 0.0);
    CHECK(rows[1].lo == 10.0);
    CHECK(rows[1].share == doctest::Approx(1.0)); // all building pixels in one band
    REQUIRE(rows[1].median_error.has_value());
    CHECK(*rows[1].median_error == doctest::Approx(-6.0));
    CHECK(rows[0].n_pixels == 0);
    CHECK_FALSE(rows[0].median_error.has_value());
    CHECK(rows[0].share == 0.0);

    // Band partition covers [0, inf): a 60 m tower lands in [40, 100).
    Raster2D ref2 = ref;
    for (int r = 16; r < 20; ++r)
        for (int c = 16; c < 20; ++c) {
            ref2.at(r, c) = 60.0;
            buildings.set(r, c, true);
        }
    Raster2D pred2 = ref2;
    for (int r = 16; r < 20; ++r)
        for (int c = 16; c < 20; ++c) pred2.at(r, c) = 20.0;
    const auto rows2 = height_band_stats(pred2, ref2, terrain, buildings);
    REQUIRE(rows2[3].median_error.has_value());
    CHECK(*rows2[3].median_error == doctest::Approx(-40.0));
    double share_sum = 0.0;
    for (const auto& row : rows2) share_sum += row.share;
    CHECK(share_sum == doctest::Approx(1.0).epsilon(1e-12));
}
