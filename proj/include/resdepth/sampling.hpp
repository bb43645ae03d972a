#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "resdepth/normalization.hpp"
#include "resdepth/raster.hpp"

namespace resdepth {

// One training sample: normalized DSM/GT patches (GT centered with the
// initial patch's mean), 0..2 normalized ortho patches, and a loss
// exclusion mask.
struct Sample {
    Raster2D initial;
    Raster2D gt;
    std::vector<Raster2D> orthos;
    Mask exclusion; // true = excluded from the loss
    double patch_mean = 0.0;
    std::string pair_id;
};

// Quarter-turn rotation (counter-clockwise applications), then horizontal
// flip, then vertical flip, then ortho-channel swap.
struct AugmentationSpec {
    int rotation = 0; // 0..3 quarter turns
    bool flip_h = false;
    bool flip_v = false;
    bool swap_views = false;

    void validate() const;
};

AugmentationSpec inverse(const AugmentationSpec& spec);

Raster2D transform_raster(const Raster2D& raster, const AugmentationSpec& spec);
Mask transform_mask(const Mask& mask, const AugmentationSpec& spec);
Sample augment(const Sample& sample, const AugmentationSpec& spec);

struct TileOrigin {
    int row = 0;
    int col = 0;
};

// count origins uniform over the stripes (area-weighted, with replacement),
// every tile fully inside one stripe; bit-reproducible per seed.
std::vector<TileOrigin> sample_patches(const GridHeader& grid,
                                       const std::vector<ColRange>& stripes, int count,
                                       int tile, std::uint64_t seed);

// Full-raster inputs for one geographic region. Ortho images are already
// rectified against the initial DSM, one per view index.
struct TrainingRegion {
    std::string name;
    Raster2D initial;
    Raster2D gt;
    std::optional<Mask> exclusion;
    std::vector<Raster2D> orthos;
    std::vector<std::pair<int, int>> pairs; // view-index pairs
    std::vector<ColRange> stripes;          // sampling windows
    int orthos_per_sample = 2;              // 2 stereo, 1 mono, 0 DSM-only
};

struct SampleSet {
    std::vector<Sample> samples;
    NormStats stats;
    int tile = 0;
    bool multi_pair = false;
};

// Each sampled location is emitted once per stereo pair (the same DSM patch
// combined with the pair's ortho patches). When stats is null the DSM scale
// is fitted on the sampled initial patches and the image stats on the ortho
// images, mirroring how training statistics are produced.
SampleSet build_training_set(const std::vector<TrainingRegion>& regions, int count_per_region,
                             int tile, std::uint64_t seed, const NormStats* stats = nullptr);

} // namespace resdepth
