#include "resdepth/normalization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "resdepth/error.hpp"

namespace resdepth {

void NormStats::validate() const {
    if (!(dsm_scale > 0.0)) throw ConfigError("NormStats.dsm_scale must be > 0");
    if (!(image_std > 0.0)) throw ConfigError("NormStats.image_std must be > 0");
}

std::string NormStats::to_json() const {
    nlohmann::json j{{"dsm_scale", dsm_scale},
                     {"image_mean", image_mean},
                     {"image_std", image_std},
                     {"trim_low", trim_low},
                     {"trim_high", trim_high}};
    return j.dump(2);
}

NormStats NormStats::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("NormStats JSON: ") + e.what());
    }
    NormStats s;
    s.dsm_scale = j.at("dsm_scale").get<double>();
    s.image_mean = j.at("image_mean").get<double>();
    s.image_std = j.at("image_std").get<double>();
    s.trim_low = j.value("trim_low", 5.0);
    s.trim_high = j.value("trim_high", 95.0);
    return s;
}

void write_norm_stats(const NormStats& stats, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << stats.to_json() << '\n';
}

NormStats read_norm_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return NormStats::from_json(text);
}

double percentile_nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) throw InputError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto idx = static_cast<std::size_t>(std::llround(pos));
    return values[std::min(idx, values.size() - 1)];
}

namespace {

// Mean over valid cells. The sum stays exact for inputs on a dyadic grid,
// which is what makes normalize shift-invariant bit-for-bit.
double patch_mean_valid(const Raster2D& patch, std::int64_t* count_out = nullptr) {
    double sum = 0.0;
    std::int64_t count = 0;
    for (int r = 0; r < patch.rows(); ++r) {
        for (int c = 0; c < patch.cols(); ++c) {
            if (patch.is_nodata(r, c)) continue;
            sum += patch.at(r, c);
            ++count;
        }
    }
    if (count_out) *count_out = count;
    if (count == 0) throw InputError("patch has zero valid cells");
    return sum / static_cast<double>(count);
}

double patch_std(const Raster2D& patch) {
    std::int64_t count = 0;
    const double mean = patch_mean_valid(patch, &count);
    if (count < 2) throw InputError("patch needs >= 2 valid cells for a standard deviation");
    double ss = 0.0;
    for (int r = 0; r < patch.rows(); ++r) {
        for (int c = 0; c < patch.cols(); ++c) {
            if (patch.is_nodata(r, c)) continue;
            const double d = patch.at(r, c) - mean;
            ss += d * d;
        }
    }
    return std::sqrt(ss / static_cast<double>(count));
}

} // namespace

double fit_dsm_scale(const std::vector<Raster2D>& patches, double trim_low, double trim_high) {
    if (patches.empty()) throw InputError("fit_dsm_scale needs at least one patch");
    std::vector<double> stds;
    stds.reserve(patches.size());
    for (const auto& p : patches) stds.push_back(patch_std(p));

    const double lo = percentile_nearest_rank(stds, trim_low);
    const double hi = percentile_nearest_rank(stds, trim_high);
    double sum = 0.0;
    std::int64_t n = 0;
    for (double s : stds) {
        if (s < lo || s > hi) continue;
        sum += s;
        ++n;
    }
    // lo and hi are attained values, so survivors are never empty.
    const double scale = sum / static_cast<double>(n);
    if (!(scale > 0.0))
        throw InputError("degenerate DSM scale: surviving patch stds are all zero");
    return scale;
}

NormalizedPatch normalize_dsm_patch(const Raster2D& patch, const NormStats& stats) {
    const double mean = patch_mean_valid(patch);
    return {normalize_dsm_patch_with_mean(patch, mean, stats), mean};
}

Raster2D normalize_dsm_patch_with_mean(const Raster2D& patch, double patch_mean,
                                       const NormStats& stats) {
    stats.validate();
    Raster2D out = patch;
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c)
            if (!out.is_nodata(r, c))
                out.at(r, c) = (out.at(r, c) - patch_mean) / stats.dsm_scale;
    return out;
}

Raster2D denormalize_heights(const Raster2D& normalized, double patch_mean,
                             const NormStats& stats) {
    stats.validate();
    Raster2D out = normalized;
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c)
            if (!out.is_nodata(r, c))
                out.at(r, c) = out.at(r, c) * stats.dsm_scale + patch_mean;
    return out;
}

void fit_image_stats(const std::vector<Raster2D>& images, NormStats& stats) {
    double sum = 0.0;
    std::int64_t n = 0;
    for (const auto& img : images) {
        for (int r = 0; r < img.rows(); ++r)
            for (int c = 0; c < img.cols(); ++c)
                if (!img.is_nodata(r, c)) {
                    sum += img.at(r, c);
                    ++n;
                }
    }
    if (n < 2) throw InputError("image stats need at least two valid pixels pooled");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& img : images) {
        for (int r = 0; r < img.rows(); ++r)
            for (int c = 0; c < img.cols(); ++c)
                if (!img.is_nodata(r, c)) {
                    const double d = img.at(r, c) - mean;
                    ss += d * d;
                }
    }
    const double std = std::sqrt(ss / static_cast<double>(n));
    if (!(std > 0.0)) throw InputError("degenerate image input: zero pooled variance");
    stats.image_mean = mean;
    stats.image_std = std;
}

Raster2D normalize_image(const Raster2D& image, const NormStats& stats) {
    stats.validate();
    Raster2D out = image;
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c)
            if (!out.is_nodata(r, c))
                out.at(r, c) = (out.at(r, c) - stats.image_mean) / stats.image_std;
    return out;
}

} // namespace resdepth
