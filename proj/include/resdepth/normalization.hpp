#pragma once

#include <string>
#include <vector>

#include "resdepth/raster.hpp"

namespace resdepth {

// Robust DSM scale plus image whitening statistics, fitted on training
// data and applied unchanged at inference.
struct NormStats {
    double dsm_scale = 1.0;
    double image_mean = 0.0;
    double image_std = 1.0;
    double trim_low = 5.0;   // percentile rank
    double trim_high = 95.0; // percentile rank

    void validate() const;

    std::string to_json() const;
    static NormStats from_json(const std::string& text);
};

void write_norm_stats(const NormStats& stats, const std::string& path);
NormStats read_norm_stats(const std::string& path);

// Nearest-rank percentile: the sorted value at round(p/100 * (n-1)).
double percentile_nearest_rank(std::vector<double> values, double p);

// Per patch: population std of valid heights about the patch mean; discard
// stds strictly below the trim_low and strictly above the trim_high
// percentile; return the mean of the survivors.
double fit_dsm_scale(const std::vector<Raster2D>& patches, double trim_low = 5.0,
                     double trim_high = 95.0);

struct NormalizedPatch {
    Raster2D patch;    // (values - patch_mean) / dsm_scale, nodata preserved
    double patch_mean; // meters, retained for denormalization
};

NormalizedPatch normalize_dsm_patch(const Raster2D& patch, const NormStats& stats);

// Normalize against an externally chosen mean (the initial patch's mean is
// reused for the ground-truth patch so the residual target is consistent).
Raster2D normalize_dsm_patch_with_mean(const Raster2D& patch, double patch_mean,
                                       const NormStats& stats);

Raster2D denormalize_heights(const Raster2D& normalized, double patch_mean,
                             const NormStats& stats);

// Pooled mean/std over all valid pixels of all images (population std).
void fit_image_stats(const std::vector<Raster2D>& images, NormStats& stats);

Raster2D normalize_image(const Raster2D& image, const NormStats& stats);

} // namespace resdepth
