#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resdepth/raster.hpp"

namespace resdepth {

// Numerically stable pairwise sum (fixed reduction order).
double pairwise_sum(std::span<const double> values);

struct ClassMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double medae = 0.0;
    double bias = 0.0; // median signed error, prediction minus reference
    std::int64_t n_pixels = 0;
};

struct HeightBandRow {
    double lo = 0.0;
    double hi = 0.0;
    std::optional<double> median_error;
    std::optional<double> mae;
    double share = 0.0; // fraction of off-terrain pixels in this band
    std::int64_t n_pixels = 0;
};

struct MetricsReport {
    ClassMetrics overall;
    std::optional<ClassMetrics> buildings;
    std::optional<ClassMetrics> terrain;
    std::vector<HeightBandRow> height_bands;

    std::string to_json() const;
    std::string table() const; // aligned MAE/RMSE/MedAE x overall/buildings/terrain
};

// Per-pixel metrics over included pixels (include = nullptr: all pixels with
// both rasters valid). Each throws InputError when nothing is valid.
double mae(const Raster2D& pred, const Raster2D& ref, const Mask* include = nullptr);
double rmse(const Raster2D& pred, const Raster2D& ref, const Mask* include = nullptr);
double medae(const Raster2D& pred, const Raster2D& ref, const Mask* include = nullptr);
double bias(const Raster2D& pred, const Raster2D& ref, const Mask* include = nullptr);

// Masked evaluation: exclusion-masked pixels leave all statistics; the
// building class is the 2-pixel dilated building mask, terrain the rest.
MetricsReport evaluate(const Raster2D& pred, const Raster2D& ref, const Mask* building_mask,
                       const Mask* exclusion_mask);

inline const std::vector<double> kDefaultBandEdges{0.0, 10.0, 20.0, 40.0, 100.0};

// Error statistics of off-terrain pixels grouped by reference height above
// terrain. Band i covers [edges[i], edges[i+1]), the last band is open.
std::vector<HeightBandRow> height_band_stats(const Raster2D& pred, const Raster2D& ref,
                                             const Raster2D& terrain_ref,
                                             const Mask& building_mask,
                                             const std::vector<double>& band_edges =
                                                 kDefaultBandEdges,
                                             const Mask* exclusion_mask = nullptr);

} // namespace resdepth
