#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resdepth/ortho.hpp"
#include "resdepth/raster.hpp"

namespace resdepth {

enum class TerrainKind { flat, hilly };

struct SceneSpec {
    double extent = 512.0;    // meters, square scene
    double cell_size = 1.0;   // meters
    TerrainKind terrain = TerrainKind::hilly;
    double terrain_amplitude = 4.0; // meters (hilly only)
    double base_height = 0.0;       // mean terrain height
    double building_density = 0.2;  // target footprint area fraction
    double roof_flat_fraction = 0.5; // remainder gable
    double height_min = 5.0;
    double height_mode = 10.0;
    double height_max = 18.0;
    double vegetation_density = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
    std::string to_json() const;
    static SceneSpec from_json(const std::string& text);
};

struct Building {
    int row0 = 0, col0 = 0, rows = 0, cols = 0;
    bool gable = false;
    bool ridge_along_rows = false; // ridge parallel to the column axis
    double base = 0.0;             // terrain height under the building
    double eave_height = 0.0;      // above base (gable only)
    double ridge_height = 0.0;     // above base (roof top)

    double roof_height_at(int row, int col) const; // absolute height
};

struct Scene {
    Raster2D gt;      // terrain + buildings, never vegetation
    Raster2D terrain; // bare terrain
    Mask buildings;
    Mask vegetation;
    std::vector<Building> building_geometry;
};

Scene generate_scene(const SceneSpec& spec);

struct CorruptionParams {
    double blur_sigma = 0.0;        // cells
    double noise_sigma = 0.0;       // meters
    double outlier_rate = 0.0;      // fraction of cells
    double outlier_magnitude = 0.0; // meters, random sign
    double vegetation_height = 0.0; // meters added on vegetation cells
    double detail_loss_rate = 0.0;  // fraction of small buildings flattened

    std::string to_json() const;
    static CorruptionParams from_json(const std::string& text);
};

// Emulated raw stereo DSM: detail loss and vegetation are applied to the
// clean surface, then blur, Gaussian noise, and sparse outliers.
Raster2D corrupt_dsm(const Raster2D& gt, const Mask& vegetation, const CorruptionParams& params,
                     std::uint64_t seed, const Scene* scene = nullptr);

struct SunSpec {
    double azimuth = 160.0;
    double elevation = 50.0;
};

// Lambertian hillshade plus per-material texture rendered into each camera
// with height parallax; no cast shadows. The optional footprint mask drives
// the building material (constant tone per connected footprint).
std::vector<Raster2D> render_views(const Raster2D& gt, const std::vector<ParallelCamera>& cameras,
                                   const SunSpec& sun, std::uint64_t texture_seed,
                                   const Mask* building_footprints = nullptr);

// Directory layout: spec.json, gt.asc, initial.asc, terrain.asc,
// building_mask.asc, vegetation_mask.asc, view_<k>.asc, camera_<k>.json.
struct SceneBundle {
    SceneSpec spec;
    Scene scene;
    Raster2D initial;
    CorruptionParams corruption;
    SunSpec sun;
    std::vector<ParallelCamera> cameras;
    std::vector<Raster2D> views;
};

SceneBundle make_scene_bundle(const SceneSpec& spec, const CorruptionParams& corruption,
                              const std::vector<ParallelCamera>& cameras, const SunSpec& sun);

void write_scene_bundle(const SceneBundle& bundle, const std::string& dir);
SceneBundle read_scene_bundle(const std::string& dir);

} // namespace resdepth
