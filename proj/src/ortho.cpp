#include "resdepth/ortho.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "resdepth/acquisition.hpp"
#include "resdepth/error.hpp"
#include "resdepth/parallel.hpp"

namespace resdepth {

Vec3 ParallelCamera::view_dir() const { return view_vector(azimuth_deg, off_nadir_deg); }

void ParallelCamera::validate() const {
    if (!(gsd > 0.0)) throw ConfigError("camera gsd must be > 0");
    if (!(view_dir().z > 0.0))
        throw ConfigError("camera view direction must have a positive z component");
}

ParallelCamera ParallelCamera::aligned_with(const GridHeader& grid, double azimuth_deg,
                                            double off_nadir_deg) {
    ParallelCamera cam;
    cam.azimuth_deg = azimuth_deg;
    cam.off_nadir_deg = off_nadir_deg;
    cam.gsd = grid.cell_size;
    cam.origin_x = grid.cell_x(0);
    cam.origin_y = grid.cell_y(0);
    return cam;
}

ParallelCamera read_camera_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError("camera JSON '" + path + "': " + e.what());
    }
    ParallelCamera cam;
    try {
        cam.azimuth_deg = j.at("azimuth").get<double>();
        cam.off_nadir_deg = j.at("off_nadir").get<double>();
        cam.gsd = j.at("gsd").get<double>();
        cam.origin_x = j.at("origin_x").get<double>();
        cam.origin_y = j.at("origin_y").get<double>();
    } catch (const std::exception& e) {
        throw ParseError("camera JSON '" + path + "': " + e.what());
    }
    cam.validate();
    return cam;
}

void write_camera_json(const ParallelCamera& cam, const std::string& path) {
    nlohmann::json j{{"azimuth", cam.azimuth_deg},
                     {"off_nadir", cam.off_nadir_deg},
                     {"gsd", cam.gsd},
                     {"origin_x", cam.origin_x},
                     {"origin_y", cam.origin_y}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

std::pair<double, double> project_ground_to_image(Vec3 ground, const ParallelCamera& cam) {
    const Vec3 d = cam.view_dir();
    const double px = ground.x + ground.z * d.x / d.z;
    const double py = ground.y + ground.z * d.y / d.z;
    return {(px - cam.origin_x) / cam.gsd, (cam.origin_y - py) / cam.gsd};
}

double sample_bilinear(const Raster2D& image, double u, double v) {
    const int c0 = static_cast<int>(std::floor(u));
    const int r0 = static_cast<int>(std::floor(v));
    const double fu = u - c0;
    const double fv = v - r0;
    // At exactly-integer coordinates only the base pixel contributes; keep
    // the stencil minimal so nadir resampling stays bit-exact.
    const int c1 = fu == 0.0 ? c0 : c0 + 1;
    const int r1 = fv == 0.0 ? r0 : r0 + 1;
    if (c0 < 0 || r0 < 0 || c1 >= image.cols() || r1 >= image.rows()) return image.nodata();
    if (image.is_nodata(r0, c0) || image.is_nodata(r0, c1) || image.is_nodata(r1, c0) ||
        image.is_nodata(r1, c1))
        return image.nodata();
    const double top = (1.0 - fu) * image.at(r0, c0) + fu * image.at(r0, c1);
    const double bot = (1.0 - fu) * image.at(r1, c0) + fu * image.at(r1, c1);
    if (fv == 0.0) return top;
    return (1.0 - fv) * top + fv * bot;
}

Raster2D orthorectify(const Raster2D& image, const Raster2D& dsm, const ParallelCamera& cam) {
    cam.validate();
    Raster2D out(dsm.header(), 0.0, image.nodata());
    const GridHeader& h = dsm.header();
    parallel_for(static_cast<std::size_t>(h.rows), [&](int, std::size_t rb, std::size_t re) {
        for (std::size_t r = rb; r < re; ++r) {
            for (int c = 0; c < h.cols; ++c) {
                const int ri = static_cast<int>(r);
                if (dsm.is_nodata(ri, c)) {
                    out.at(ri, c) = out.nodata();
                    continue;
                }
                const Vec3 g{h.cell_x(c), h.cell_y(ri), dsm.at(ri, c)};
                const auto [u, v] = project_ground_to_image(g, cam);
                out.at(ri, c) = sample_bilinear(image, u, v);
            }
        }
    });
    return out;
}

Mask occlusion_mask(const Raster2D& dsm, const ParallelCamera& cam) {
    cam.validate();
    const GridHeader& h = dsm.header();
    Mask occluded(h);

    const Vec3 d = cam.view_dir();
    const double ox = d.x / d.z;
    const double oy = d.y / d.z;
    const double off = std::hypot(ox, oy);
    if (off < 1e-12) return occluded; // nadir: nothing hides anything

    double zmax = -1e300;
    for (int r = 0; r < h.rows; ++r)
        for (int c = 0; c < h.cols; ++c)
            if (!dsm.is_nodata(r, c)) zmax = std::max(zmax, dsm.at(r, c));

    auto height_at = [&](double x, double y) -> double {
        // Clamped bilinear height; nodata treated as very low.
        const double fc = (x - h.origin_x) / h.cell_size - 0.5;
        const double fr = (h.origin_y - y) / h.cell_size - 0.5;
        const int c0 = std::clamp(static_cast<int>(std::floor(fc)), 0, h.cols - 1);
        const int r0 = std::clamp(static_cast<int>(std::floor(fr)), 0, h.rows - 1);
        const int c1 = std::min(c0 + 1, h.cols - 1);
        const int r1 = std::min(r0 + 1, h.rows - 1);
        const double fu = std::clamp(fc - c0, 0.0, 1.0);
        const double fv = std::clamp(fr - r0, 0.0, 1.0);
        auto val = [&](int rr, int cc) {
            return dsm.is_nodata(rr, cc) ? -1e300 : dsm.at(rr, cc);
        };
        const double top = (1.0 - fu) * val(r0, c0) + fu * val(r0, c1);
        const double bot = (1.0 - fu) * val(r1, c0) + fu * val(r1, c1);
        return (1.0 - fv) * top + fv * bot;
    };

    const double step = 0.5 * h.cell_size / off; // half-cell planar steps
    parallel_for(static_cast<std::size_t>(h.rows), [&](int, std::size_t rb, std::size_t re) {
        for (std::size_t r = rb; r < re; ++r) {
            for (int c = 0; c < h.cols; ++c) {
                const int ri = static_cast<int>(r);
                if (dsm.is_nodata(ri, c)) continue;
                const double z0 = dsm.at(ri, c);
                const double x0 = h.cell_x(c);
                const double y0 = h.cell_y(ri);
                bool hit = false;
                // Points above the cell on its view ray sit at
                // (x0, y0) - (hh - z0) * (ox, oy) for hh in (z0, zmax].
                for (double hh = z0 + step; hh <= zmax && !hit; hh += step) {
                    const double x = x0 - (hh - z0) * ox;
                    const double y = y0 - (hh - z0) * oy;
                    if (height_at(x, y) >= hh) hit = true;
                }
                occluded.set(ri, c, hit);
            }
        }
    });
    return occluded;
}

} // namespace resdepth
