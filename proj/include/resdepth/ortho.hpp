#pragma once

#include <string>
#include <utility>

#include "resdepth/geom.hpp"
#include "resdepth/raster.hpp"

namespace resdepth {

// Desk-scale parallel (affine pushbroom) camera. Pixel (0,0)'s center sits
// at (origin_x, origin_y) in planar meters at height 0; u grows east, v
// grows south (row order), one pixel per gsd meters.
struct ParallelCamera {
    double azimuth_deg = 0.0;
    double off_nadir_deg = 0.0;
    double gsd = 1.0;
    double origin_x = 0.0;
    double origin_y = 0.0;

    Vec3 view_dir() const; // unit vector, z > 0
    void validate() const;

    // Camera whose pixel grid coincides with the raster grid.
    static ParallelCamera aligned_with(const GridHeader& grid, double azimuth_deg,
                                       double off_nadir_deg);
};

// JSON file {azimuth, off_nadir, gsd, origin_x, origin_y}.
ParallelCamera read_camera_json(const std::string& path);
void write_camera_json(const ParallelCamera& cam, const std::string& path);

// Slide the ground point along the view direction to height 0 and map to
// pixels: planar = (x, y) + z * view_dir.xy / view_dir.z, u east, v south.
std::pair<double, double> project_ground_to_image(Vec3 ground, const ParallelCamera& cam);

// Bilinear sample at continuous pixel coordinates; nodata outside the image
// or when any stencil corner is nodata.
double sample_bilinear(const Raster2D& image, double u, double v);

// Resample the image onto the DSM grid by projecting each cell center at
// its height. No visibility test: ground occluded by a building receives
// the occluder's texture.
Raster2D orthorectify(const Raster2D& image, const Raster2D& dsm, const ParallelCamera& cam);

// True where the cell is hidden behind higher surface along the view ray.
Mask occlusion_mask(const Raster2D& dsm, const ParallelCamera& cam);

} // namespace resdepth
