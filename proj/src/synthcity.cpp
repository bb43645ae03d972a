#include "resdepth/synthcity.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "resdepth/acquisition.hpp"
#include "resdepth/error.hpp"
#include "resdepth/parallel.hpp"
#include "resdepth/rng.hpp"

namespace resdepth {

namespace fs = std::filesystem;

void SceneSpec::validate() const {
    if (!(extent > 0.0) || !(cell_size > 0.0))
        throw ConfigError("scene extent and cell_size must be > 0");
    const double cells = extent / cell_size;
    if (std::abs(cells - std::round(cells)) > 1e-9)
        throw ConfigError("scene extent must be a multiple of cell_size");
    if (building_density < 0.0 || building_density > 1.0)
        throw ConfigError("building_density must lie in [0, 1]");
    if (vegetation_density < 0.0 || vegetation_density > 1.0)
        throw ConfigError("vegetation_density must lie in [0, 1]");
    if (roof_flat_fraction < 0.0 || roof_flat_fraction > 1.0)
        throw ConfigError("roof_flat_fraction must lie in [0, 1]");
    if (!(height_min > 0.0) || height_min > height_mode || height_mode > height_max)
        throw ConfigError("building heights need 0 < min <= mode <= max");
    if (terrain == TerrainKind::hilly && terrain_amplitude < 0.0)
        throw ConfigError("terrain_amplitude must be >= 0");
}

std::string SceneSpec::to_json() const {
    nlohmann::json j{{"extent", extent},
                     {"cell_size", cell_size},
                     {"terrain", terrain == TerrainKind::flat ? "flat" : "hilly"},
                     {"terrain_amplitude", terrain_amplitude},
                     {"base_height", base_height},
                     {"building_density", building_density},
                     {"roof_flat_fraction", roof_flat_fraction},
                     {"height_min", height_min},
                     {"height_mode", height_mode},
                     {"height_max", height_max},
                     {"vegetation_density", vegetation_density},
                     {"seed", seed}};
    return j.dump(2);
}

SceneSpec SceneSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("SceneSpec JSON: ") + e.what());
    }
    SceneSpec s;
    s.extent = j.value("extent", s.extent);
    s.cell_size = j.value("cell_size", s.cell_size);
    const std::string kind = j.value("terrain", std::string("hilly"));
    if (kind == "flat")
        s.terrain = TerrainKind::flat;
    else if (kind == "hilly")
        s.terrain = TerrainKind::hilly;
    else
        throw ParseError("terrain must be 'flat' or 'hilly', got '" + kind + "'");
    s.terrain_amplitude = j.value("terrain_amplitude", s.terrain_amplitude);
    s.base_height = j.value("base_height", s.base_height);
    s.building_density = j.value("building_density", s.building_density);
    s.roof_flat_fraction = j.value("roof_flat_fraction", s.roof_flat_fraction);
    s.height_min = j.value("height_min", s.height_min);
    s.height_mode = j.value("height_mode", s.height_mode);
    s.height_max = j.value("height_max", s.height_max);
    s.vegetation_density = j.value("vegetation_density", s.vegetation_density);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

double Building::roof_height_at(int row, int col) const {
    const double top = base + ridge_height;
    if (!gable) return top;
    // Linear faces from the ridge line through the footprint center down to
    // the eaves.
    double t;
    if (ridge_along_rows) {
        const double center = col0 + (cols - 1) / 2.0;
        const double half = std::max(1.0, (cols - 1) / 2.0);
        t = std::min(1.0, std::abs(col - center) / half);
    } else {
        const double center = row0 + (rows - 1) / 2.0;
        const double half = std::max(1.0, (rows - 1) / 2.0);
        t = std::min(1.0, std::abs(row - center) / half);
    }
    return top - t * (ridge_height - eave_height);
}

Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    const int n = static_cast<int>(std::llround(spec.extent / spec.cell_size));
    GridHeader h{0.0, spec.extent, spec.cell_size, n, n};

    Rng root(spec.seed);
    Rng terrain_rng = root.fork(1);
    Rng building_rng = root.fork(2);
    Rng veg_rng = root.fork(3);

    Scene scene;
    scene.terrain = Raster2D(h, spec.base_height);
    if (spec.terrain == TerrainKind::hilly && spec.terrain_amplitude > 0.0) {
        // Smooth random field: a handful of sinusoid products.
        constexpr int kWaves = 6;
        struct Wave {
            double kx, ky, phase, amp;
        };
        std::vector<Wave> waves;
        double norm = 0.0;
        for (int i = 0; i < kWaves; ++i) {
            const double wavelength = spec.extent / terrain_rng.uniform(2.0, 8.0);
            const double dir = terrain_rng.uniform(0.0, 2.0 * kPi);
            const double amp = terrain_rng.uniform(0.5, 1.0);
            waves.push_back({2.0 * kPi * std::cos(dir) / wavelength,
                             2.0 * kPi * std::sin(dir) / wavelength,
                             terrain_rng.uniform(0.0, 2.0 * kPi), amp});
            norm += amp;
        }
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const double x = h.cell_x(c);
                const double y = h.cell_y(r);
                double v = 0.0;
                for (const auto& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
                scene.terrain.at(r, c) = spec.base_height + spec.terrain_amplitude * v / norm;
            }
        }
    }

    scene.gt = scene.terrain;
    scene.buildings = Mask(h);
    scene.vegetation = Mask(h);

    // Rectangular buildings by rejection sampling with a 2-cell street gap.
    const double cell_area = spec.cell_size * spec.cell_size;
    const double target_cells = spec.building_density * static_cast<double>(n) * n;
    const int min_side = std::max(4, static_cast<int>(std::lround(8.0 / spec.cell_size)));
    const int max_side = std::max(min_side + 1, static_cast<int>(std::lround(30.0 / spec.cell_size)));
    (void)cell_area;

    double covered = 0.0;
    const int max_tries = 4000 + 40 * n;
    int tries = 0;
    while (covered < target_cells && tries < max_tries) {
        ++tries;
        Building b;
        b.rows = static_cast<int>(building_rng.uniform_int(max_side - min_side + 1)) + min_side;
        b.cols = static_cast<int>(building_rng.uniform_int(max_side - min_side + 1)) + min_side;
        if (b.rows + 4 >= n || b.cols + 4 >= n) continue;
        b.row0 = static_cast<int>(building_rng.uniform_int(n - b.rows - 4)) + 2;
        b.col0 = static_cast<int>(building_rng.uniform_int(n - b.cols - 4)) + 2;

        bool clash = false;
        for (int r = b.row0 - 2; r < b.row0 + b.rows + 2 && !clash; ++r)
            for (int c = b.col0 - 2; c < b.col0 + b.cols + 2 && !clash; ++c)
                if (scene.buildings.at(r, c)) clash = true;
        if (clash) continue;

        b.gable = building_rng.uniform() >= spec.roof_flat_fraction;
        b.ridge_along_rows = b.cols >= b.rows;
        b.base = scene.terrain.at(b.row0 + b.rows / 2, b.col0 + b.cols / 2);
        b.ridge_height = building_rng.triangular(spec.height_min, spec.height_mode,
                                                 spec.height_max);
        b.eave_height = b.gable ? 0.55 * b.ridge_height : b.ridge_height;

        for (int r = b.row0; r < b.row0 + b.rows; ++r) {
            for (int c = b.col0; c < b.col0 + b.cols; ++c) {
                scene.buildings.set(r, c, true);
                scene.gt.at(r, c) = b.roof_height_at(r, c);
            }
        }
        covered += static_cast<double>(b.rows) * b.cols;
        scene.building_geometry.push_back(b);
    }
    if (spec.building_density > 0.0 && covered < 0.8 * target_cells)
        throw InputError("building placement failed: reached " +
                         std::to_string(covered / (static_cast<double>(n) * n)) +
                         " coverage of requested " + std::to_string(spec.building_density));

    // Vegetation discs on non-building cells (mask only; the GT surface
    // stays vegetation-free).
    const double veg_target = spec.vegetation_density * static_cast<double>(n) * n;
    double veg_covered = 0.0;
    int veg_tries = 0;
    while (veg_covered < veg_target && veg_tries < max_tries) {
        ++veg_tries;
        const int radius = static_cast<int>(veg_rng.uniform_int(5)) + 2;
        const int rc = static_cast<int>(veg_rng.uniform_int(n));
        const int cc = static_cast<int>(veg_rng.uniform_int(n));
        for (int r = std::max(0, rc - radius); r <= std::min(n - 1, rc + radius); ++r) {
            for (int c = std::max(0, cc - radius); c <= std::min(n - 1, cc + radius); ++c) {
                const int dr = r - rc, dc = c - cc;
                if (dr * dr + dc * dc > radius * radius) continue;
                if (scene.buildings.at(r, c) || scene.vegetation.at(r, c)) continue;
                scene.vegetation.set(r, c, true);
                veg_covered += 1.0;
            }
        }
    }
    return scene;
}

std::string CorruptionParams::to_json() const {
    nlohmann::json j{{"blur_sigma", blur_sigma},
                     {"noise_sigma", noise_sigma},
                     {"outlier_rate", outlier_rate},
                     {"outlier_magnitude", outlier_magnitude},
                     {"vegetation_height", vegetation_height},
                     {"detail_loss_rate", detail_loss_rate}};
    return j.dump(2);
}

CorruptionParams CorruptionParams::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("CorruptionParams JSON: ") + e.what());
    }
    CorruptionParams p;
    p.blur_sigma = j.value("blur_sigma", 0.0);
    p.noise_sigma = j.value("noise_sigma", 0.0);
    p.outlier_rate = j.value("outlier_rate", 0.0);
    p.outlier_magnitude = j.value("outlier_magnitude", 0.0);
    p.vegetation_height = j.value("vegetation_height", 0.0);
    p.detail_loss_rate = j.value("detail_loss_rate", 0.0);
    return p;
}

namespace {

Raster2D gaussian_blur(const Raster2D& src, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));

    const int rows = src.rows(), cols = src.cols();
    Raster2D tmp = src, out = src;
    // Horizontal then vertical, kernels renormalized at the borders.
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int cc = c + i;
                if (cc < 0 || cc >= cols) continue;
                acc += kernel[i + radius] * src.at(r, cc);
                wsum += kernel[i + radius];
            }
            tmp.at(r, c) = acc / wsum;
        }
    }
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int rr = r + i;
                if (rr < 0 || rr >= rows) continue;
                acc += kernel[i + radius] * tmp.at(rr, c);
                wsum += kernel[i + radius];
            }
            out.at(r, c) = acc / wsum;
        }
    }
    return out;
}

} // namespace

Raster2D corrupt_dsm(const Raster2D& gt, const Mask& vegetation, const CorruptionParams& params,
                     std::uint64_t seed, const Scene* scene) {
    if (!vegetation.header().same_grid(gt.header()))
        throw ConfigError("corrupt_dsm: vegetation mask grid differs from the DSM");
    Rng root(seed);
    Rng detail_rng = root.fork(1);
    Rng noise_rng = root.fork(2);
    Rng outlier_rng = root.fork(3);

    Raster2D out = gt;

    if (params.detail_loss_rate > 0.0) {
        if (!scene)
            throw ConfigError("corrupt_dsm: detail loss needs the scene's building geometry");
        const double small_area = 250.0; // m^2; matcher loses small structures
        const double cell_area = gt.cell_size() * gt.cell_size();
        for (const auto& b : scene->building_geometry) {
            const double area = b.rows * b.cols * cell_area;
            const bool drop = detail_rng.uniform() < params.detail_loss_rate;
            if (area >= small_area || !drop) continue;
            for (int r = b.row0; r < b.row0 + b.rows; ++r)
                for (int c = b.col0; c < b.col0 + b.cols; ++c)
                    out.at(r, c) = scene->terrain.at(r, c);
        }
    }

    if (params.vegetation_height != 0.0) {
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c)
                if (vegetation.at(r, c)) out.at(r, c) += params.vegetation_height;
    }

    if (params.blur_sigma > 0.0) out = gaussian_blur(out, params.blur_sigma);

    if (params.noise_sigma > 0.0) {
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c)
                out.at(r, c) += noise_rng.normal(0.0, params.noise_sigma);
    }

    if (params.outlier_rate > 0.0 && params.outlier_magnitude != 0.0) {
        for (int r = 0; r < out.rows(); ++r) {
            for (int c = 0; c < out.cols(); ++c) {
                if (outlier_rng.uniform() >= params.outlier_rate) continue;
                const double sign = outlier_rng.uniform_int(2) == 0 ? 1.0 : -1.0;
                out.at(r, c) += sign * params.outlier_magnitude;
            }
        }
    }
    return out;
}

namespace {

// Connected footprint components, row-major label order (4-connected).
std::vector<int> label_components(const Mask& mask, int& count) {
    const int rows = mask.rows(), cols = mask.cols();
    std::vector<int> labels(static_cast<std::size_t>(rows) * cols, -1);
    count = 0;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!mask.at(r, c) || labels[static_cast<std::size_t>(r) * cols + c] >= 0) continue;
            stack.push_back({r, c});
            labels[static_cast<std::size_t>(r) * cols + c] = count;
            while (!stack.empty()) {
                auto [cr, cc] = stack.back();
                stack.pop_back();
                const int nb[4][2] = {{cr - 1, cc}, {cr + 1, cc}, {cr, cc - 1}, {cr, cc + 1}};
                for (auto& [nr, nc] : nb) {
                    if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                    auto& l = labels[static_cast<std::size_t>(nr) * cols + nc];
                    if (mask.at(nr, nc) && l < 0) {
                        l = count;
                        stack.push_back({nr, nc});
                    }
                }
            }
            ++count;
        }
    }
    return labels;
}

// Smooth value noise: coarse random grid, bilinear upsample.
std::vector<double> value_noise(int rows, int cols, int spacing, Rng& rng) {
    const int gr = rows / spacing + 2;
    const int gc = cols / spacing + 2;
    std::vector<double> grid(static_cast<std::size_t>(gr) * gc);
    for (auto& v : grid) v = rng.uniform(0.75, 1.25);
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double fr = static_cast<double>(r) / spacing;
            const double fc = static_cast<double>(c) / spacing;
            const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
            const double tr = fr - r0, tc = fc - c0;
            const double a = grid[static_cast<std::size_t>(r0) * gc + c0];
            const double b = grid[static_cast<std::size_t>(r0) * gc + c0 + 1];
            const double d = grid[static_cast<std::size_t>(r0 + 1) * gc + c0];
            const double e = grid[static_cast<std::size_t>(r0 + 1) * gc + c0 + 1];
            out[static_cast<std::size_t>(r) * cols + c] =
                (1 - tr) * ((1 - tc) * a + tc * b) + tr * ((1 - tc) * d + tc * e);
        }
    }
    return out;
}

struct BilinearField {
    const std::vector<double>* values;
    const GridHeader* h;

    double operator()(double x, double y) const {
        const double fc = (x - h->origin_x) / h->cell_size - 0.5;
        const double fr = (h->origin_y - y) / h->cell_size - 0.5;
        const int c0 = std::clamp(static_cast<int>(std::floor(fc)), 0, h->cols - 1);
        const int r0 = std::clamp(static_cast<int>(std::floor(fr)), 0, h->rows - 1);
        const int c1 = std::min(c0 + 1, h->cols - 1);
        const int r1 = std::min(r0 + 1, h->rows - 1);
        const double tu = std::clamp(fc - c0, 0.0, 1.0);
        const double tv = std::clamp(fr - r0, 0.0, 1.0);
        auto at = [&](int r, int c) { return (*values)[static_cast<std::size_t>(r) * h->cols + c]; };
        const double top = (1 - tu) * at(r0, c0) + tu * at(r0, c1);
        const double bot = (1 - tu) * at(r1, c0) + tu * at(r1, c1);
        return (1 - tv) * top + tv * bot;
    }
};

} // namespace

std::vector<Raster2D> render_views(const Raster2D& gt, const std::vector<ParallelCamera>& cameras,
                                   const SunSpec& sun, std::uint64_t texture_seed,
                                   const Mask* building_footprints) {
    const GridHeader& h = gt.header();
    const int rows = h.rows, cols = h.cols;
    Rng rng(texture_seed);
    Rng terrain_tex_rng = rng.fork(1);
    Rng building_tex_rng = rng.fork(2);

    // Radiance per cell: Lambertian shade from the surface normal times a
    // per-material texture (smooth noise on terrain, constant per building).
    const Vec3 sun_dir = view_vector(sun.azimuth, 90.0 - sun.elevation);
    std::vector<double> radiance(static_cast<std::size_t>(rows) * cols);
    const auto terrain_tex = value_noise(rows, cols, 8, terrain_tex_rng);

    std::vector<int> labels;
    std::vector<double> building_tone;
    if (building_footprints) {
        int count = 0;
        labels = label_components(*building_footprints, count);
        building_tone.resize(count);
        for (auto& t : building_tone) t = building_tex_rng.uniform(0.8, 1.2);
    }

    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double zc = gt.at(r, c);
            const double zxp = gt.at(r, std::min(c + 1, cols - 1));
            const double zxm = gt.at(r, std::max(c - 1, 0));
            const double zyp = gt.at(std::max(r - 1, 0), c);     // north neighbor
            const double zym = gt.at(std::min(r + 1, rows - 1), c); // south neighbor
            (void)zc;
            const double dx = (zxp - zxm) / ((std::min(c + 1, cols - 1) - std::max(c - 1, 0)) *
                                             h.cell_size);
            const double dy = (zyp - zym) / ((std::min(r + 1, rows - 1) - std::max(r - 1, 0)) *
                                             h.cell_size);
            const Vec3 normal = normalized({-dx, -dy, 1.0});
            const double shade = std::max(0.15, dot(normal, sun_dir));
            double tex = terrain_tex[static_cast<std::size_t>(r) * cols + c];
            if (building_footprints && building_footprints->at(r, c))
                tex = building_tone[labels[static_cast<std::size_t>(r) * cols + c]];
            radiance[static_cast<std::size_t>(r) * cols + c] = shade * tex;
        }
    }

    const BilinearField surface{&gt.values(), &h};
    const BilinearField shade_field{&radiance, &h};

    double zmin = 1e300, zmax = -1e300;
    for (double v : gt.values()) {
        zmin = std::min(zmin, v);
        zmax = std::max(zmax, v);
    }

    std::vector<Raster2D> views;
    for (const auto& cam : cameras) {
        cam.validate();
        if (cam.gsd != h.cell_size)
            throw ConfigError("render_views: camera gsd must equal the scene cell size");
        Raster2D img(h, 0.0);
        const Vec3 d = cam.view_dir();
        const double ox = d.x / d.z;
        const double oy = d.y / d.z;
        const double off = std::hypot(ox, oy);

        parallel_for(static_cast<std::size_t>(rows), [&](int, std::size_t rb, std::size_t re) {
            for (std::size_t r = rb; r < re; ++r) {
                for (int c = 0; c < cols; ++c) {
                    // Planar position of this image pixel at height 0.
                    const double px = cam.origin_x + c * cam.gsd;
                    const double py = cam.origin_y - static_cast<double>(r) * cam.gsd;
                    double hit;
                    if (off < 1e-12) {
                        hit = surface(px, py);
                        img.at(static_cast<int>(r), c) = shade_field(px, py);
                        continue;
                    }
                    // Ground points seen by this pixel: (px, py) - z*(ox, oy).
                    const double step = 0.5 * h.cell_size / off;
                    double hi = zmax + step;
                    double lo = hi;
                    bool found = false;
                    for (double z = zmax; z >= zmin - step; z -= step) {
                        const double s = surface(px - z * ox, py - z * oy);
                        if (s >= z) {
                            lo = z;
                            found = true;
                            break;
                        }
                        hi = z;
                    }
                    if (!found) {
                        hit = zmin;
                    } else {
                        // Bisect the bracket, then polish with fixed-point
                        // iterations (exact on locally planar surfaces).
                        double a = lo, b = hi;
                        for (int it = 0; it < 40 && (b - a) > 1e-10; ++it) {
                            const double m = 0.5 * (a + b);
                            if (surface(px - m * ox, py - m * oy) >= m)
                                a = m;
                            else
                                b = m;
                        }
                        hit = a;
                        double refined = hit;
                        for (int it = 0; it < 4; ++it)
                            refined = surface(px - refined * ox, py - refined * oy);
                        if (std::abs(surface(px - refined * ox, py - refined * oy) - refined) <=
                            std::abs(surface(px - hit * ox, py - hit * oy) - hit))
                            hit = refined;
                    }
                    img.at(static_cast<int>(r), c) = shade_field(px - hit * ox, py - hit * oy);
                }
            }
        });
        views.push_back(std::move(img));
    }
    return views;
}

SceneBundle make_scene_bundle(const SceneSpec& spec, const CorruptionParams& corruption,
                              const std::vector<ParallelCamera>& cameras, const SunSpec& sun) {
    SceneBundle bundle;
    bundle.spec = spec;
    bundle.corruption = corruption;
    bundle.sun = sun;
    bundle.cameras = cameras;
    bundle.scene = generate_scene(spec);
    bundle.initial = corrupt_dsm(bundle.scene.gt, bundle.scene.vegetation, corruption,
                                 spec.seed ^ 0x9E3779B97F4A7C15ull, &bundle.scene);
    bundle.views = render_views(bundle.scene.gt, cameras, sun, spec.seed ^ 0xC2B2AE3D27D4EB4Full,
                                &bundle.scene.buildings);
    return bundle;
}

void write_scene_bundle(const SceneBundle& bundle, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json meta{{"scene", nlohmann::json::parse(bundle.spec.to_json())},
                        {"corruption", nlohmann::json::parse(bundle.corruption.to_json())},
                        {"sun", {{"azimuth", bundle.sun.azimuth}, {"elevation", bundle.sun.elevation}}},
                        {"views", bundle.views.size()}};
    std::ofstream meta_out(fs::path(dir) / "spec.json", std::ios::binary);
    if (!meta_out) throw IoError("cannot write scene spec in '" + dir + "'");
    meta_out << meta.dump(2) << '\n';
    meta_out.close();

    write_ascii_grid(bundle.scene.gt, (fs::path(dir) / "gt.asc").string());
    write_ascii_grid(bundle.initial, (fs::path(dir) / "initial.asc").string());
    write_ascii_grid(bundle.scene.terrain, (fs::path(dir) / "terrain.asc").string());
    write_mask(bundle.scene.buildings, (fs::path(dir) / "building_mask.asc").string());
    write_mask(bundle.scene.vegetation, (fs::path(dir) / "vegetation_mask.asc").string());
    for (std::size_t k = 0; k < bundle.views.size(); ++k) {
        write_ascii_grid(bundle.views[k],
                         (fs::path(dir) / ("view_" + std::to_string(k) + ".asc")).string());
        write_camera_json(bundle.cameras[k],
                          (fs::path(dir) / ("camera_" + std::to_string(k) + ".json")).string());
    }
}

SceneBundle read_scene_bundle(const std::string& dir) {
    std::ifstream meta_in(fs::path(dir) / "spec.json");
    if (!meta_in) throw IoError("cannot read '" + dir + "/spec.json'");
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const std::exception& e) {
        throw ParseError("scene spec.json: " + std::string(e.what()));
    }

    SceneBundle bundle;
    bundle.spec = SceneSpec::from_json(meta.at("scene").dump());
    bundle.corruption = CorruptionParams::from_json(meta.at("corruption").dump());
    bundle.sun.azimuth = meta.at("sun").at("azimuth").get<double>();
    bundle.sun.elevation = meta.at("sun").at("elevation").get<double>();
    const std::size_t n_views = meta.at("views").get<std::size_t>();

    bundle.scene.gt = read_ascii_grid((fs::path(dir) / "gt.asc").string());
    bundle.initial = read_ascii_grid((fs::path(dir) / "initial.asc").string());
    bundle.scene.terrain = read_ascii_grid((fs::path(dir) / "terrain.asc").string());
    bundle.scene.buildings = read_mask((fs::path(dir) / "building_mask.asc").string());
    bundle.scene.vegetation = read_mask((fs::path(dir) / "vegetation_mask.asc").string());
    for (std::size_t k = 0; k < n_views; ++k) {
        bundle.views.push_back(
            read_ascii_grid((fs::path(dir) / ("view_" + std::to_string(k) + ".asc")).string()));
        bundle.cameras.push_back(read_camera_json(
            (fs::path(dir) / ("camera_" + std::to_string(k) + ".json")).string()));
    }
    return bundle;
}

} // namespace resdepth
