#include <doctest.h>

#include <cmath>

#include "resdepth/normalization.hpp"
#include "resdepth/rng.hpp"

using namespace resdepth;

namespace {

GridHeader grid(int n) { return {0.0, static_cast<double>(n), 1.0, n, n}; }

Raster2D patch_of(std::vector<double> values, int rows, int cols) {
    GridHeader h{0.0, static_cast<double>(rows), 1.0, rows, cols};
    return Raster2D(h, std::move(values));
}

// Patch with population std exactly s: two cells {-s, +s}.
Raster2D patch_with_std(double s) { return patch_of({-s, s}, 1, 2); }

// Heights on a dyadic grid (multiples of 1/64) keep double sums exact.
Raster2D dyadic_patch(int n, Rng& rng) {
    Raster2D p(grid(n), 0.0);
    for (auto& v : p.values()) v = static_cast<double>(rng.uniform_int(1 << 12)) * 0x1.0p-6;
    return p;
}

} // namespace

TEST_CASE("fit_dsm_scale: equal stds, the 1..100 ladder, and a single patch") {
    std::vector<Raster2D> equal;
    for (int i = 0; i < 20; ++i) equal.push_back(patch_with_std(4.0));
    CHECK(fit_dsm_scale(equal) == doctest::Approx(4.0).epsilon(1e-12));

    std::vector<Raster2D> ladder;
    for (int s = 1; s <= 100; ++s) ladder.push_back(patch_with_std(s));
    // Trim drops ranks 1..5 and 96..100; survivors 6..95 average 50.5.
    CHECK(fit_dsm_scale(ladder) == doctest::Approx(50.5).epsilon(1e-12));

    std::vector<Raster2D> single{patch_with_std(7.25)};
    CHECK(fit_dsm_scale(single) == doctest::Approx(7.25).epsilon(1e-12));
}

TEST_CASE("fit_dsm_scale: ordering and per-patch offsets do not matter") {
    Rng rng(5);
    std::vector<Raster2D> patches;
    for (int i = 0; i < 30; ++i) {
        Raster2D p(grid(8), 0.0);
        for (auto& v : p.values()) v = rng.normal(0.0, 3.0);
        patches.push_back(p);
    }
    const double scale = fit_dsm_scale(patches);

    std::vector<Raster2D> shifted = patches;
    for (std::size_t i = 0; i < shifted.size(); ++i)
        for (auto& v : shifted[i].values()) v += 100.0 * static_cast<double>(i);
    CHECK(fit_dsm_scale(shifted) == doctest::Approx(scale).epsilon(1e-9));

    std::vector<Raster2D> reversed(patches.rbegin(), patches.rend());
    CHECK(fit_dsm_scale(reversed) == doctest::Approx(scale).epsilon(1e-12));
}

TEST_CASE("fit_dsm_scale: trimming shrugs off a few corrupted stds") {
    std::vector<Raster2D> ladder;
    for (int s = 1; s <= 100; ++s) ladder.push_back(patch_with_std(s));
    std::vector<Raster2D> corrupted = ladder;
    // Corrupt 4% of patches with huge spread.
    for (int i = 0; i < 4; ++i) corrupted[10 + i] = patch_with_std(1e6);
    const double robust = fit_dsm_scale(corrupted);
    // The untrimmed mean would move by ~40000; the trimmed one stays near 50.
    CHECK(std::abs(robust - 50.5) < 5.0);
}

TEST_CASE("fit_dsm_scale: error paths") {
    CHECK_THROWS_AS(fit_dsm_scale({}), InputError);

    Raster2D empty(grid(2), kDefaultNodata); // zero valid cells
    CHECK_THROWS_AS(fit_dsm_scale({empty}), InputError);

    Raster2D flat(grid(2), 5.0); // zero std everywhere -> degenerate scale
    CHECK_THROWS_AS(fit_dsm_scale({flat, flat}), InputError);
}

TEST_CASE("normalize_dsm_patch: flat patches, arithmetic, and nodata handling") {
    NormStats stats;
    stats.dsm_scale = 5.0;

    Raster2D flat(grid(4), 123.0);
    auto norm = normalize_dsm_patch(flat, stats);
    for (double v : norm.patch.values()) CHECK(v == 0.0);
    CHECK(norm.patch_mean == 123.0);

    const Raster2D pair = patch_of({0.0, 10.0}, 1, 2);
    auto norm2 = normalize_dsm_patch(pair, stats);
    CHECK(norm2.patch.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(norm2.patch.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    // nodata cells are ignored by the mean and preserved in the output.
    Raster2D holey = patch_of({2.0, kDefaultNodata, 4.0, 6.0}, 2, 2);
    auto norm3 = normalize_dsm_patch(holey, stats);
    CHECK(norm3.patch_mean == doctest::Approx(4.0));
    CHECK(norm3.patch.is_nodata(0, 1));
}

TEST_CASE("normalization is exactly shift-invariant on dyadic inputs") {
    NormStats stats;
    stats.dsm_scale = 3.5;
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const Raster2D p = dyadic_patch(8, rng); // 64 cells: power of two
        Raster2D shifted = p;
        const double c = static_cast<double>(rng.uniform_int(1 << 14)) * 0x1.0p-6;
        for (auto& v : shifted.values()) v += c;
        const auto a = normalize_dsm_patch(p, stats);
        const auto b = normalize_dsm_patch(shifted, stats);
        CHECK(a.patch.values() == b.patch.values()); // bitwise
    }
}

TEST_CASE("denormalize inverts normalize") {
    NormStats stats;
    stats.dsm_scale = 5.0;

    // zeros -> flat patch at patch_mean
    Raster2D zeros(grid(3), 0.0);
    const Raster2D flat = denormalize_heights(zeros, 42.5, stats);
    for (double v : flat.values()) CHECK(v == 42.5);

    // {-1, +1}, mean 5, scale 5 -> {0, 10}
    const Raster2D pm = patch_of({-1.0, 1.0}, 1, 2);
    const Raster2D back = denormalize_heights(pm, 5.0, stats);
    CHECK(back.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(back.at(0, 1) == doctest::Approx(10.0).epsilon(1e-12));

    // Round-trip on random patches.
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Raster2D p(grid(6), 0.0);
        for (auto& v : p.values()) v = rng.uniform(300.0, 500.0);
        const auto norm = normalize_dsm_patch(p, stats);
        const Raster2D rt = denormalize_heights(norm.patch, norm.patch_mean, stats);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c)
                CHECK(rt.at(r, c) == doctest::Approx(p.at(r, c)).epsilon(1e-9));
    }
}

TEST_CASE("image stats: pooled mean/std and degenerate input") {
    NormStats stats;
    const Raster2D img = patch_of({0.0, 2.0}, 1, 2);
    fit_image_stats({img}, stats);
    CHECK(stats.image_mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats.image_std == doctest::Approx(1.0).epsilon(1e-12));
    const Raster2D norm = normalize_image(img, stats);
    CHECK(norm.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(norm.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    // Refitting already-whitened data gives mean 0, std 1.
    NormStats stats2;
    fit_image_stats({norm}, stats2);
    CHECK(stats2.image_mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(stats2.image_std == doctest::Approx(1.0).epsilon(1e-12));

    // Constant image: degenerate.
    const Raster2D constant(grid(3), 7.0);
    NormStats stats3;
    CHECK_THROWS_AS(fit_image_stats({constant}, stats3), InputError);
}

TEST_CASE("percentile_nearest_rank picks the sorted value at round(p(n-1)/100)") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    CHECK(percentile_nearest_rank(v, 5.0) == 6.0);   // round(4.95) = 5 -> value 6
    CHECK(percentile_nearest_rank(v, 95.0) == 95.0); // round(94.05) = 94 -> value 95
    CHECK(percentile_nearest_rank(v, 0.0) == 1.0);
    CHECK(percentile_nearest_rank(v, 100.0) == 100.0);
    CHECK(percentile_nearest_rank({3.25}, 5.0) == 3.25);
}

TEST_CASE("NormStats JSON round-trip") {
    NormStats s;
    s.dsm_scale = 3.75;
    s.image_mean = 0.5;
    s.image_std = 2.25;
    const NormStats back = NormStats::from_json(s.to_json());
    CHECK(back.dsm_scale == s.dsm_scale);
    CHECK(back.image_mean == s.image_mean);
    CHECK(back.image_std == s.image_std);
    CHECK(back.trim_low == 5.0);
    CHECK(back.trim_high == 95.0);
}
