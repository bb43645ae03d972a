#include "resdepth/sampling.hpp"

#include <algorithm>
#include <set>

#include "resdepth/error.hpp"
#include "resdepth/rng.hpp"

namespace resdepth {

void AugmentationSpec::validate() const {
    if (rotation < 0 || rotation > 3)
        throw ConfigError("augmentation rotation must be 0..3 quarter turns");
}

AugmentationSpec inverse(const AugmentationSpec& spec) {
    spec.validate();
    AugmentationSpec inv;
    inv.swap_views = spec.swap_views; // involution
    if (spec.flip_h != spec.flip_v) {
        // Single-flip transforms are reflections, their own inverses.
        return spec;
    }
    if (spec.flip_h && spec.flip_v) {
        // flip_v . flip_h . rot_k == rot_{k+2}; invert as a pure rotation.
        inv.rotation = (4 - ((spec.rotation + 2) % 4)) % 4;
        return inv;
    }
    inv.rotation = (4 - spec.rotation) % 4;
    return inv;
}

namespace {

// One quarter turn counter-clockwise: out(r, c) = in(c, W-1-r).
template <typename Get, typename Set>
void apply_spatial(int rows, int cols, const AugmentationSpec& spec, Get get, Set set) {
    // Decompose into a source-index map. Apply rotation first, then flips.
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            int rr = r, cc = c;
            if (spec.flip_v) rr = rows - 1 - rr;
            if (spec.flip_h) cc = cols - 1 - cc;
            // Invert the CCW rotation to find the source cell.
            int sr = rr, sc = cc;
            for (int i = 0; i < spec.rotation; ++i) {
                // inverse of out(r,c)=in(c, N-1-r) is in(r,c)=out(N-1-c, r)
                const int tr = sc;
                const int tc = rows - 1 - sr; // square patches: rows == cols
                sr = tr;
                sc = tc;
            }
            set(r, c, get(sr, sc));
        }
    }
}

} // namespace

Raster2D transform_raster(const Raster2D& raster, const AugmentationSpec& spec) {
    spec.validate();
    if (raster.rows() != raster.cols())
        throw ConfigError("augmentation requires square patches");
    Raster2D out(raster.header(), 0.0, raster.nodata());
    apply_spatial(
        raster.rows(), raster.cols(), spec, [&](int r, int c) { return raster.at(r, c); },
        [&](int r, int c, double v) { out.at(r, c) = v; });
    return out;
}

Mask transform_mask(const Mask& mask, const AugmentationSpec& spec) {
    spec.validate();
    if (mask.rows() != mask.cols()) throw ConfigError("augmentation requires square patches");
    Mask out(mask.header());
    apply_spatial(
        mask.rows(), mask.cols(), spec, [&](int r, int c) { return mask.at(r, c); },
        [&](int r, int c, bool v) { out.set(r, c, v); });
    return out;
}

Sample augment(const Sample& sample, const AugmentationSpec& spec) {
    spec.validate();
    if (spec.swap_views && sample.orthos.size() < 2)
        throw ConfigError("swap_views needs two ortho channels, sample has " +
                          std::to_string(sample.orthos.size()));
    Sample out;
    out.patch_mean = sample.patch_mean;
    out.pair_id = sample.pair_id;
    out.initial = transform_raster(sample.initial, spec);
    out.gt = transform_raster(sample.gt, spec);
    out.exclusion = transform_mask(sample.exclusion, spec);
    out.orthos.reserve(sample.orthos.size());
    for (const auto& o : sample.orthos) out.orthos.push_back(transform_raster(o, spec));
    if (spec.swap_views) std::swap(out.orthos[0], out.orthos[1]);
    return out;
}

std::vector<TileOrigin> sample_patches(const GridHeader& grid,
                                       const std::vector<ColRange>& stripes, int count,
                                       int tile, std::uint64_t seed) {
    if (count < 0) throw ConfigError("sample count must be >= 0");
    if (tile < 1) throw ConfigError("tile must be >= 1");
    std::vector<TileOrigin> origins;
    if (count == 0) return origins;

    const std::int64_t row_span = grid.rows - tile + 1;
    std::vector<std::int64_t> weights; // usable origin positions per stripe
    std::int64_t total = 0;
    for (const auto& s : stripes) {
        const std::int64_t col_span = s.width() - tile + 1;
        const std::int64_t w = (row_span > 0 && col_span > 0) ? row_span * col_span : 0;
        weights.push_back(w);
        total += w;
    }
    if (total == 0)
        throw BoundsError("tile " + std::to_string(tile) +
                          " does not fit inside any sampling stripe");

    Rng rng(seed);
    origins.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::int64_t pick =
            static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(total)));
        std::size_t si = 0;
        while (pick >= weights[si]) {
            pick -= weights[si];
            ++si;
        }
        const std::int64_t col_span = stripes[si].width() - tile + 1;
        origins.push_back({static_cast<int>(pick / col_span),
                           stripes[si].begin + static_cast<int>(pick % col_span)});
    }
    return origins;
}

SampleSet build_training_set(const std::vector<TrainingRegion>& regions, int count_per_region,
                             int tile, std::uint64_t seed, const NormStats* stats_in) {
    if (regions.empty()) throw ConfigError("build_training_set needs at least one region");

    Rng root(seed);
    std::vector<std::vector<TileOrigin>> origins(regions.size());
    for (std::size_t ri = 0; ri < regions.size(); ++ri)
        origins[ri] = sample_patches(regions[ri].initial.header(), regions[ri].stripes,
                                     count_per_region, tile, root.fork(ri).next_u64());

    SampleSet set;
    set.tile = tile;

    if (stats_in) {
        set.stats = *stats_in;
    } else {
        std::vector<Raster2D> patches;
        patches.reserve(origins.size() * static_cast<std::size_t>(count_per_region));
        std::vector<Raster2D> images;
        for (std::size_t ri = 0; ri < regions.size(); ++ri) {
            for (const auto& o : origins[ri])
                patches.push_back(extract_tile(regions[ri].initial, o.row, o.col, tile));
            std::set<int> used;
            for (const auto& [a, b] : regions[ri].pairs) {
                used.insert(a);
                if (regions[ri].orthos_per_sample >= 2) used.insert(b);
            }
            for (int vi : used) images.push_back(regions[ri].orthos.at(vi));
        }
        set.stats.dsm_scale = fit_dsm_scale(patches, set.stats.trim_low, set.stats.trim_high);
        if (!images.empty()) fit_image_stats(images, set.stats);
    }

    std::set<std::string> pair_ids;
    for (std::size_t ri = 0; ri < regions.size(); ++ri) {
        const TrainingRegion& region = regions[ri];
        const int per_sample = region.orthos_per_sample;
        if (per_sample < 0 || per_sample > 2)
            throw ConfigError("orthos_per_sample must be 0, 1, or 2");
        if (per_sample > 0 && region.pairs.empty()) continue; // no pairs -> no samples

        for (const auto& o : origins[ri]) {
            const Raster2D init_patch = extract_tile(region.initial, o.row, o.col, tile);
            auto normalized = normalize_dsm_patch(init_patch, set.stats);
            const Raster2D gt_patch = normalize_dsm_patch_with_mean(
                extract_tile(region.gt, o.row, o.col, tile), normalized.patch_mean, set.stats);
            Mask excl(init_patch.header());
            if (region.exclusion) {
                for (int r = 0; r < tile; ++r)
                    for (int c = 0; c < tile; ++c)
                        excl.set(r, c, region.exclusion->at(o.row + r, o.col + c));
            }

            auto emit = [&](std::vector<Raster2D> orthos, std::string pair_id) {
                Sample s;
                s.initial = normalized.patch;
                s.gt = gt_patch;
                s.exclusion = excl;
                s.patch_mean = normalized.patch_mean;
                s.pair_id = std::move(pair_id);
                s.orthos = std::move(orthos);
                pair_ids.insert(s.pair_id);
                set.samples.push_back(std::move(s));
            };

            if (per_sample == 0) {
                emit({}, region.name + ":none");
                continue;
            }
            for (const auto& [a, b] : region.pairs) {
                std::vector<Raster2D> orthos;
                orthos.push_back(normalize_image(
                    extract_tile(region.orthos.at(a), o.row, o.col, tile), set.stats));
                if (per_sample == 2)
                    orthos.push_back(normalize_image(
                        extract_tile(region.orthos.at(b), o.row, o.col, tile), set.stats));
                emit(std::move(orthos),
                     region.name + ":" + std::to_string(a) + "-" + std::to_string(b));
            }
        }
    }
    set.multi_pair = pair_ids.size() > 1;
    return set;
}

} // namespace resdepth
