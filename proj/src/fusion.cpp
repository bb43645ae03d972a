#include "resdepth/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <tuple>

#include "resdepth/error.hpp"

namespace resdepth {

void PointCloud::validate() const {
    for (const auto& p : points)
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw InputError("point cloud holds a non-finite coordinate");
}

void FusionParams::validate() const {
    if (!(spike_threshold > 0.0)) throw ConfigError("spike_threshold must be > 0");
    if (!(idw_power > 0.0)) throw ConfigError("idw_power must be > 0");
    if (idw_max_neighbors < 1) throw ConfigError("idw_max_neighbors must be >= 1");
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    PointCloud cloud;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        Vec3 p;
        double* coords[3] = {&p.x, &p.y, &p.z};
        const char* ptr = line.c_str();
        const char* end = ptr + line.size();
        for (int i = 0; i < 3; ++i) {
            while (ptr < end && (*ptr == ' ' || *ptr == '\t')) ++ptr;
            auto res = std::from_chars(ptr, end, *coords[i]);
            if (res.ec != std::errc{})
                throw ParseError("line " + std::to_string(line_no) + ": expected 'x y z'");
            ptr = res.ptr;
        }
        cloud.points.push_back(p);
    }
    cloud.validate();
    return cloud;
}

void write_xyz(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    char buf[32];
    auto fmt = [&](double v) {
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    };
    for (const auto& p : cloud.points)
        out << fmt(p.x) << ' ' << fmt(p.y) << ' ' << fmt(p.z) << '\n';
}

namespace {

// Cell index of a point, or false when outside the extent.
bool locate(const GridHeader& h, double x, double y, int& row, int& col) {
    const double fc = (x - h.origin_x) / h.cell_size;
    const double fr = (h.origin_y - y) / h.cell_size;
    col = static_cast<int>(std::floor(fc));
    row = static_cast<int>(std::floor(fr));
    return row >= 0 && row < h.rows && col >= 0 && col < h.cols;
}

double median_of_sorted(const std::vector<double>& v, std::size_t begin, std::size_t count) {
    const std::size_t mid = begin + count / 2;
    if (count % 2 == 1) return v[mid];
    return 0.5 * (v[mid - 1] + v[mid]);
}

} // namespace

int fusion_point_budget(const PointCloud& cloud, const GridHeader& extent) {
    std::vector<std::int32_t> counts(static_cast<std::size_t>(extent.cell_count()), 0);
    std::int64_t inside = 0;
    for (const auto& p : cloud.points) {
        int r, c;
        if (locate(extent, p.x, p.y, r, c)) {
            ++counts[static_cast<std::size_t>(r) * extent.cols + c];
            ++inside;
        }
    }
    std::int64_t occupied = 0;
    for (auto c : counts)
        if (c > 0) ++occupied;
    if (occupied == 0) return 1;
    const double avg = static_cast<double>(inside) / static_cast<double>(occupied);
    return std::max(1, static_cast<int>(std::llround(avg)));
}

Raster2D rasterize_median_highest(const PointCloud& cloud, const GridHeader& extent, int n) {
    cloud.validate();
    if (n < 1) throw ConfigError("point budget n must be >= 1");
    Raster2D out(extent, kDefaultNodata);
    for (int r = 0; r < extent.rows; ++r)
        for (int c = 0; c < extent.cols; ++c) out.set_nodata_at(r, c);

    std::vector<std::vector<double>> cells(static_cast<std::size_t>(extent.cell_count()));
    for (const auto& p : cloud.points) {
        int r, c;
        if (locate(extent, p.x, p.y, r, c))
            cells[static_cast<std::size_t>(r) * extent.cols + c].push_back(p.z);
    }
    for (int r = 0; r < extent.rows; ++r) {
        for (int c = 0; c < extent.cols; ++c) {
            auto& zs = cells[static_cast<std::size_t>(r) * extent.cols + c];
            if (zs.empty()) continue;
            std::sort(zs.begin(), zs.end());
            const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n), zs.size());
            out.at(r, c) = median_of_sorted(zs, zs.size() - k, k);
        }
    }
    return out;
}

Raster2D rasterize_median_highest(const PointCloud& cloud, const GridHeader& extent,
                                  const FusionParams& params) {
    params.validate();
    return rasterize_median_highest(cloud, extent, fusion_point_budget(cloud, extent));
}

Raster2D remove_spikes(const Raster2D& dsm, double threshold) {
    if (!(threshold > 0.0)) throw ConfigError("spike threshold must be > 0");
    Raster2D out = dsm;
    std::vector<double> window;
    window.reserve(9);
    for (int r = 0; r < dsm.rows(); ++r) {
        for (int c = 0; c < dsm.cols(); ++c) {
            if (dsm.is_nodata(r, c)) continue;
            window.clear();
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if (!dsm.in_bounds(rr, cc) || dsm.is_nodata(rr, cc)) continue;
                    window.push_back(dsm.at(rr, cc));
                }
            }
            std::sort(window.begin(), window.end());
            const double med = median_of_sorted(window, 0, window.size());
            if (std::abs(dsm.at(r, c) - med) > threshold) out.set_nodata_at(r, c);
        }
    }
    return out;
}

Raster2D idw_fill(const Raster2D& dsm, double power, int max_neighbors) {
    if (!(power > 0.0)) throw ConfigError("idw power must be > 0");
    if (max_neighbors < 1) throw ConfigError("idw max_neighbors must be >= 1");
    if (dsm.valid_count() == 0) throw InputError("cannot IDW-fill an all-nodata raster");

    Raster2D out = dsm;
    const int rows = dsm.rows();
    const int cols = dsm.cols();
    const double cell = dsm.cell_size();

    // Candidates ordered by (squared cell distance, row, col); the same key
    // the brute-force oracle uses, so ties resolve identically.
    using Cand = std::tuple<std::int64_t, int, int>;
    std::vector<Cand> cands;

    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!dsm.is_nodata(r, c)) continue;
            cands.clear();
            // Expand Chebyshev rings; a ring at radius q has min Euclidean
            // distance q, so once we hold k candidates with max distance d
            // we can stop at ring ceil(d).
            std::int64_t worst = -1;
            for (int q = 1; q < std::max(rows, cols); ++q) {
                if (static_cast<int>(cands.size()) >= max_neighbors) {
                    if (static_cast<std::int64_t>(q) * q > worst) break;
                }
                const int r0 = r - q, r1 = r + q, c0 = c - q, c1 = c + q;
                auto visit = [&](int rr, int cc) {
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return;
                    if (dsm.is_nodata(rr, cc)) return;
                    const std::int64_t dr = rr - r, dc = cc - c;
                    cands.emplace_back(dr * dr + dc * dc, rr, cc);
                };
                for (int cc = c0; cc <= c1; ++cc) {
                    visit(r0, cc);
                    visit(r1, cc);
                }
                for (int rr = r0 + 1; rr <= r1 - 1; ++rr) {
                    visit(rr, c0);
                    visit(rr, c1);
                }
                if (static_cast<int>(cands.size()) >= max_neighbors) {
                    std::nth_element(cands.begin(), cands.begin() + (max_neighbors - 1),
                                     cands.end());
                    worst = std::get<0>(cands[max_neighbors - 1]);
                }
            }
            if (cands.empty()) continue; // unreachable: raster has valid cells
            std::sort(cands.begin(), cands.end());
            const std::size_t k =
                std::min<std::size_t>(cands.size(), static_cast<std::size_t>(max_neighbors));
            double wsum = 0.0, hsum = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const auto [d2, rr, cc] = cands[i];
                const double d = cell * std::sqrt(static_cast<double>(d2));
                const double w = std::pow(d, -power);
                wsum += w;
                hsum += w * dsm.at(rr, cc);
            }
            out.at(r, c) = hsum / wsum;
        }
    }
    return out;
}

Raster2D fuse_dsm(const PointCloud& cloud, const GridHeader& extent, const FusionParams& params) {
    params.validate();
    Raster2D dsm = rasterize_median_highest(cloud, extent, params);
    if (dsm.valid_count() == 0) return dsm; // empty cloud: all-nodata result
    dsm = remove_spikes(dsm, params.spike_threshold);
    return idw_fill(dsm, params.idw_power, params.idw_max_neighbors);
}

} // namespace resdepth
