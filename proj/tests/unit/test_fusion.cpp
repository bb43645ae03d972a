#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <tuple>

#include "resdepth/fusion.hpp"
#include "resdepth/rng.hpp"

using namespace resdepth;

namespace {

GridHeader grid(int rows, int cols, double cell = 1.0) {
    return {0.0, rows * cell, cell, rows, cols};
}

// Brute-force per-cell median-of-n-highest, identical arithmetic.
Raster2D oracle_rasterize(const PointCloud& cloud, const GridHeader& h, int n) {
    Raster2D out(h, kDefaultNodata);
    for (int r = 0; r < h.rows; ++r) {
        for (int c = 0; c < h.cols; ++c) {
            std::vector<double> zs;
            for (const auto& p : cloud.points) {
                const int cc = static_cast<int>(std::floor((p.x - h.origin_x) / h.cell_size));
                const int rr = static_cast<int>(std::floor((h.origin_y - p.y) / h.cell_size));
                if (rr == r && cc == c) zs.push_back(p.z);
            }
            if (zs.empty()) {
                out.set_nodata_at(r, c);
                continue;
            }
            std::sort(zs.begin(), zs.end(), std::greater<>());
            const std::size_t k = std::min<std::size_t>(n, zs.size());
            std::vector<double> top(zs.begin(), zs.begin() + k);
            std::sort(top.begin(), top.end());
            out.at(r, c) = top.size() % 2 ? top[top.size() / 2]
                                          : 0.5 * (top[top.size() / 2 - 1] + top[top.size() / 2]);
        }
    }
    return out;
}

Raster2D oracle_despike(const Raster2D& dsm, double threshold) {
    Raster2D out = dsm;
    for (int r = 0; r < dsm.rows(); ++r) {
        for (int c = 0; c < dsm.cols(); ++c) {
            if (dsm.is_nodata(r, c)) continue;
            std::vector<double> window;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= dsm.rows() || cc < 0 || cc >= dsm.cols()) continue;
                    if (!dsm.is_nodata(rr, cc)) window.push_back(dsm.at(rr, cc));
                }
            std::sort(window.begin(), window.end());
            const double med = window.size() % 2
                                   ? window[window.size() / 2]
                                   : 0.5 * (window[window.size() / 2 - 1] + window[window.size() / 2]);
            if (std::abs(dsm.at(r, c) - med) > threshold) out.set_nodata_at(r, c);
        }
    }
    return out;
}

Raster2D oracle_idw(const Raster2D& dsm, double power, int k) {
    Raster2D out = dsm;
    for (int r = 0; r < dsm.rows(); ++r) {
        for (int c = 0; c < dsm.cols(); ++c) {
            if (!dsm.is_nodata(r, c)) continue;
            std::vector<std::tuple<std::int64_t, int, int>> cands;
            for (int rr = 0; rr < dsm.rows(); ++rr)
                for (int cc = 0; cc < dsm.cols(); ++cc)
                    if (!dsm.is_nodata(rr, cc)) {
                        const std::int64_t dr = rr - r, dc = cc - c;
                        cands.emplace_back(dr * dr + dc * dc, rr, cc);
                    }
            std::sort(cands.begin(), cands.end());
            const std::size_t kk = std::min<std::size_t>(cands.size(), k);
            double wsum = 0.0, hsum = 0.0;
            for (std::size_t i = 0; i < kk; ++i) {
                const auto [d2, rr, cc] = cands[i];
                const double d = dsm.cell_size() * std::sqrt(static_cast<double>(d2));
                const double w = std::pow(d, -power);
                wsum += w;
                hsum += w * dsm.at(rr, cc);
            }
            out.at(r, c) = hsum / wsum;
        }
    }
    return out;
}

} // namespace

TEST_CASE("rasterize: one point per cell copies the point height") {
    PointCloud cloud;
    const auto h = grid(3, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            cloud.points.push_back({c + 0.5, h.origin_y - r - 0.5, 10.0 * r + c});
    const Raster2D out = rasterize_median_highest(cloud, h, 4);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(out.at(r, c) == 10.0 * r + c);
}

TEST_CASE("rasterize: median of the n highest with derived point budget") {
    // One cell with z {10, 11, 12, 50}; two padding cells tune the average.
    const auto h = grid(1, 3);
    PointCloud cloud;
    for (double z : {10.0, 11.0, 12.0, 50.0}) cloud.points.push_back({0.5, h.origin_y - 0.5, z});

    // Padding: avg = (4 + 1 + 1) / 3 = 2 -> n = 2 -> median {12, 50} = 31.
    cloud.points.push_back({1.5, h.origin_y - 0.5, 1.0});
    cloud.points.push_back({2.5, h.origin_y - 0.5, 1.0});
    CHECK(fusion_point_budget(cloud, h) == 2);
    FusionParams params;
    CHECK(rasterize_median_highest(cloud, h, params).at(0, 0) == 31.0);

    // avg = (4 + 2 + 3) / 3 = 3 -> n = 3 -> median {11, 12, 50} = 12.
    cloud.points.push_back({1.5, h.origin_y - 0.5, 1.0});
    cloud.points.push_back({2.5, h.origin_y - 0.5, 1.0});
    cloud.points.push_back({2.5, h.origin_y - 0.5, 1.0});
    CHECK(fusion_point_budget(cloud, h) == 3);
    CHECK(rasterize_median_highest(cloud, h, params).at(0, 0) == 12.0);
}

TEST_CASE("rasterize: empty cloud gives an all-nodata raster") {
    PointCloud cloud;
    const Raster2D out = rasterize_median_highest(cloud, grid(2, 2), 1);
    CHECK(out.valid_count() == 0);
}

TEST_CASE("remove_spikes: flat raster unchanged; +100 m spike removed") {
    Raster2D flat(grid(5, 5), 12.0);
    CHECK(remove_spikes(flat, 20.0).values() == flat.values());

    Raster2D spiked = flat;
    spiked.at(2, 2) = 112.0;
    const Raster2D out = remove_spikes(spiked, 20.0);
    CHECK(out.is_nodata(2, 2));
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c)
            if (r != 2 || c != 2) CHECK(out.at(r, c) == 12.0);

    // Infinite threshold: identity.
    const Raster2D keep = remove_spikes(spiked, std::numeric_limits<double>::infinity());
    CHECK(keep.values() == spiked.values());
}

TEST_CASE("idw_fill: canonical examples") {
    // Hole surrounded by equals fills with the same height.
    Raster2D r(grid(3, 3), 8.25);
    r.set_nodata_at(1, 1);
    CHECK(idw_fill(r, 2.0, 12).at(1, 1) == doctest::Approx(8.25).epsilon(1e-12));

    // Hole equidistant between two valid heights 0 and 10 -> 5.
    Raster2D two(grid(1, 3), 0.0);
    two.at(0, 0) = 0.0;
    two.set_nodata_at(0, 1);
    two.at(0, 2) = 10.0;
    CHECK(idw_fill(two, 2.0, 2).at(0, 1) == doctest::Approx(5.0).epsilon(1e-12));

    // No holes: identity.
    Raster2D full(grid(4, 4), 3.0);
    CHECK(idw_fill(full, 2.0, 4).values() == full.values());

    // All-nodata: fill error.
    Raster2D empty(grid(2, 2), kDefaultNodata);
    CHECK_THROWS_AS(idw_fill(empty, 2.0, 4), InputError);
}

TEST_CASE("fusion stages match brute-force oracles exactly on random inputs") {
    Rng rng(88);
    for (int trial = 0; trial < 100; ++trial) {
        const int rows = 2 + static_cast<int>(rng.uniform_int(9));
        const int cols = 2 + static_cast<int>(rng.uniform_int(9));
        const auto h = grid(rows, cols);

        PointCloud cloud;
        const int npts = 1 + static_cast<int>(rng.uniform_int(120));
        for (int i = 0; i < npts; ++i)
            cloud.points.push_back({rng.uniform(0.0, cols), h.origin_y - rng.uniform(0.0, rows),
                                    rng.uniform(-5.0, 60.0)});

        const int n = fusion_point_budget(cloud, h);
        const Raster2D fused = rasterize_median_highest(cloud, h, n);
        const Raster2D fused_oracle = oracle_rasterize(cloud, h, n);
        CHECK(fused.values() == fused_oracle.values());

        // Heights stay inside the cell's point range.
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                if (fused.is_nodata(r, c)) continue;
                double zmin = 1e300, zmax = -1e300;
                for (const auto& p : cloud.points) {
                    const int cc = static_cast<int>(std::floor(p.x / h.cell_size));
                    const int rr = static_cast<int>(std::floor((h.origin_y - p.y) / h.cell_size));
                    if (rr == r && cc == c) {
                        zmin = std::min(zmin, p.z);
                        zmax = std::max(zmax, p.z);
                    }
                }
                CHECK(fused.at(r, c) >= zmin);
                CHECK(fused.at(r, c) <= zmax);
            }

        // Point-order invariance.
        PointCloud shuffled = cloud;
        for (std::size_t i = shuffled.points.size() - 1; i > 0; --i)
            std::swap(shuffled.points[i], shuffled.points[rng.uniform_int(i + 1)]);
        CHECK(rasterize_median_highest(shuffled, h, n).values() == fused.values());

        const double threshold = rng.uniform(5.0, 25.0);
        const Raster2D despiked = remove_spikes(fused, threshold);
        CHECK(despiked.values() == oracle_despike(fused, threshold).values());

        if (despiked.valid_count() > 0) {
            const double power = rng.uniform(1.0, 3.0);
            const int k = 1 + static_cast<int>(rng.uniform_int(12));
            const Raster2D filled = idw_fill(despiked, power, k);
            CHECK(filled.values() == oracle_idw(despiked, power, k).values());
            CHECK(filled.valid_count() == filled.header().cell_count());

            // Convex combination: filled cells inside the neighbor range.
            double lo = 1e300, hi = -1e300;
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    if (!despiked.is_nodata(r, c)) {
                        lo = std::min(lo, despiked.at(r, c));
                        hi = std::max(hi, despiked.at(r, c));
                    }
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    CHECK(filled.at(r, c) >= lo - 1e-9);
                    CHECK(filled.at(r, c) <= hi + 1e-9);
                }
        }
    }
}

TEST_CASE("xyz round-trip") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "pts.xyz").string();
    PointCloud cloud;
    Rng rng(5);
    for (int i = 0; i < 40; ++i)
        cloud.points.push_back({rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0),
                                rng.uniform(-10.0, 60.0)});
    write_xyz(cloud, path);
    const PointCloud back = read_xyz(path);
    REQUIRE(back.points.size() == cloud.points.size());
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        CHECK(back.points[i].x == cloud.points[i].x);
        CHECK(back.points[i].z == cloud.points[i].z);
    }
}
