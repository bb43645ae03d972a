#pragma once

#include <string>
#include <vector>

#include "resdepth/geom.hpp"
#include "resdepth/raster.hpp"

namespace resdepth {

struct PointCloud {
    std::vector<Vec3> points;

    void validate() const; // all coordinates finite
};

struct FusionParams {
    double spike_threshold = 20.0; // meters
    double idw_power = 2.0;
    int idw_max_neighbors = 12;

    void validate() const;
};

// One "x y z" triple per line, meters.
PointCloud read_xyz(const std::string& path);
void write_xyz(const PointCloud& cloud, const std::string& path);

// Per-cell point budget: round of the average point count per occupied
// cell, at least 1.
int fusion_point_budget(const PointCloud& cloud, const GridHeader& extent);

// Cell-wise median of the min(n, count) highest z values; empty cells nodata.
// Points outside the extent are ignored.
Raster2D rasterize_median_highest(const PointCloud& cloud, const GridHeader& extent, int n);
Raster2D rasterize_median_highest(const PointCloud& cloud, const GridHeader& extent,
                                  const FusionParams& params);

// Cells deviating from the median of their valid 3x3 neighborhood (center
// included) by more than threshold become nodata.
Raster2D remove_spikes(const Raster2D& dsm, double threshold);

// Every nodata cell receives the inverse-distance-weighted mean of its
// max_neighbors nearest valid cells. Output has no nodata.
Raster2D idw_fill(const Raster2D& dsm, double power, int max_neighbors);

// rasterize -> despike -> fill.
Raster2D fuse_dsm(const PointCloud& cloud, const GridHeader& extent, const FusionParams& params);

} // namespace resdepth
