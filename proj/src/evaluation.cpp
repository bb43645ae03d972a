#include "resdepth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "resdepth/error.hpp"

namespace resdepth {

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 128) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

double median_inplace(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Signed errors prediction minus reference over included valid pixels.
std::vector<double> collect_errors(const Raster2D& pred, const Raster2D& ref,
                                   const Mask* include) {
    if (!pred.header().same_grid(ref.header()))
        throw ConfigError("metric inputs share no common grid");
    if (include && !include->header().same_grid(pred.header()))
        throw ConfigError("metric mask grid differs from the rasters");
    std::vector<double> errors;
    errors.reserve(static_cast<std::size_t>(pred.header().cell_count()));
    for (int r = 0; r < pred.rows(); ++r) {
        for (int c = 0; c < pred.cols(); ++c) {
            if (include && !include->at(r, c)) continue;
            if (pred.is_nodata(r, c) || ref.is_nodata(r, c)) continue;
            errors.push_back(pred.at(r, c) - ref.at(r, c));
        }
    }
    if (errors.empty()) throw InputError("metric over zero valid pixels");
    return errors;
}

ClassMetrics metrics_from_errors(std::vector<double> errors) {
    ClassMetrics m;
    m.n_pixels = static_cast<std::int64_t>(errors.size());
    std::vector<double> work(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) work[i] = std::abs(errors[i]);
    m.mae = pairwise_sum(work) / static_cast<double>(work.size());
    for (std::size_t i = 0; i < errors.size(); ++i) work[i] = errors[i] * errors[i];
    m.rmse = std::sqrt(pairwise_sum(work) / static_cast<double>(work.size()));
    for (std::size_t i = 0; i < errors.size(); ++i) work[i] = std::abs(errors[i]);
    m.medae = median_inplace(work);
    m.bias = median_inplace(errors);
    return m;
}

} // namespace

double mae(const Raster2D& pred, const Raster2D& ref, const Mask* include) {
    auto errors = collect_errors(pred, ref, include);
    for (double& e : errors) e = std::abs(e);
    return pairwise_sum(errors) / static_cast<double>(errors.size());
}

double rmse(const Raster2D& pred, const Raster2D& ref, const Mask* include) {
    auto errors = collect_errors(pred, ref, include);
    for (double& e : errors) e = e * e;
    return std::sqrt(pairwise_sum(errors) / static_cast<double>(errors.size()));
}

double medae(const Raster2D& pred, const Raster2D& ref, const Mask* include) {
    auto errors = collect_errors(pred, ref, include);
    for (double& e : errors) e = std::abs(e);
    return median_inplace(errors);
}

double bias(const Raster2D& pred, const Raster2D& ref, const Mask* include) {
    auto errors = collect_errors(pred, ref, include);
    return median_inplace(errors);
}

MetricsReport evaluate(const Raster2D& pred, const Raster2D& ref, const Mask* building_mask,
                       const Mask* exclusion_mask) {
    if (!pred.header().same_grid(ref.header()))
        throw ConfigError("evaluate: prediction and reference grids differ");
    if (building_mask && !building_mask->header().same_grid(pred.header()))
        throw ConfigError("evaluate: building mask grid differs");
    if (exclusion_mask && !exclusion_mask->header().same_grid(pred.header()))
        throw ConfigError("evaluate: exclusion mask grid differs");

    Mask include(pred.header());
    for (int r = 0; r < pred.rows(); ++r)
        for (int c = 0; c < pred.cols(); ++c)
            include.set(r, c, !(exclusion_mask && exclusion_mask->at(r, c)));

    MetricsReport report;
    report.overall = metrics_from_errors(collect_errors(pred, ref, &include));

    if (building_mask) {
        // 2-pixel dilation keeps aliasing at vertical walls out of the
        // terrain class.
        const Mask dilated = dilate_mask(*building_mask, 2);
        Mask b_inc(pred.header());
        Mask t_inc(pred.header());
        for (int r = 0; r < pred.rows(); ++r) {
            for (int c = 0; c < pred.cols(); ++c) {
                const bool inc = include.at(r, c);
                b_inc.set(r, c, inc && dilated.at(r, c));
                t_inc.set(r, c, inc && !dilated.at(r, c));
            }
        }
        if (b_inc.count_true() > 0) {
            try {
                report.buildings = metrics_from_errors(collect_errors(pred, ref, &b_inc));
            } catch (const InputError&) {
            }
        }
        if (t_inc.count_true() > 0) {
            try {
                report.terrain = metrics_from_errors(collect_errors(pred, ref, &t_inc));
            } catch (const InputError&) {
            }
        }
    }
    return report;
}

std::vector<HeightBandRow> height_band_stats(const Raster2D& pred, const Raster2D& ref,
                                             const Raster2D& terrain_ref,
                                             const Mask& building_mask,
                                             const std::vector<double>& band_edges,
                                             const Mask* exclusion_mask) {
    if (!pred.header().same_grid(ref.header()) ||
        !terrain_ref.header().same_grid(ref.header()) ||
        !building_mask.header().same_grid(ref.header()))
        throw ConfigError("height_band_stats: inputs share no common grid");
    if (band_edges.size() < 2) throw ConfigError("height_band_stats: need at least two edges");

    const std::size_t n_bands = band_edges.size(); // last band open-ended
    std::vector<std::vector<double>> errors(n_bands);
    std::int64_t total = 0;
    for (int r = 0; r < pred.rows(); ++r) {
        for (int c = 0; c < pred.cols(); ++c) {
            if (!building_mask.at(r, c)) continue;
            if (exclusion_mask && exclusion_mask->at(r, c)) continue;
            if (pred.is_nodata(r, c) || ref.is_nodata(r, c) || terrain_ref.is_nodata(r, c))
                continue;
            const double above = ref.at(r, c) - terrain_ref.at(r, c);
            std::size_t band = n_bands - 1;
            for (std::size_t i = 0; i + 1 < band_edges.size(); ++i) {
                if (above >= band_edges[i] && above < band_edges[i + 1]) {
                    band = i;
                    break;
                }
            }
            if (above < band_edges.front()) band = 0;
            errors[band].push_back(pred.at(r, c) - ref.at(r, c));
            ++total;
        }
    }

    std::vector<HeightBandRow> rows;
    for (std::size_t i = 0; i < n_bands; ++i) {
        HeightBandRow row;
        row.lo = band_edges[i];
        row.hi = i + 1 < band_edges.size() ? band_edges[i + 1]
                                           : std::numeric_limits<double>::infinity();
        row.n_pixels = static_cast<std::int64_t>(errors[i].size());
        row.share = total > 0 ? static_cast<double>(row.n_pixels) / static_cast<double>(total)
                              : 0.0;
        if (!errors[i].empty()) {
            std::vector<double> abs_err(errors[i].size());
            for (std::size_t k = 0; k < errors[i].size(); ++k) abs_err[k] = std::abs(errors[i][k]);
            row.mae = pairwise_sum(abs_err) / static_cast<double>(abs_err.size());
            row.median_error = median_inplace(errors[i]);
        }
        rows.push_back(row);
    }
    return rows;
}

namespace {

nlohmann::json class_json(const ClassMetrics& m) {
    return {{"mae", m.mae},
            {"rmse", m.rmse},
            {"medae", m.medae},
            {"bias", m.bias},
            {"n_pixels", m.n_pixels}};
}

} // namespace

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["overall"] = class_json(overall);
    j["buildings"] = buildings ? class_json(*buildings) : nlohmann::json(nullptr);
    j["terrain"] = terrain ? class_json(*terrain) : nlohmann::json(nullptr);
    if (!height_bands.empty()) {
        nlohmann::json bands = nlohmann::json::array();
        for (const auto& b : height_bands) {
            nlohmann::json row{{"lo", b.lo},
                               {"share", b.share},
                               {"n_pixels", b.n_pixels}};
            row["hi"] = std::isfinite(b.hi) ? nlohmann::json(b.hi) : nlohmann::json(nullptr);
            row["median_error"] =
                b.median_error ? nlohmann::json(*b.median_error) : nlohmann::json(nullptr);
            row["mae"] = b.mae ? nlohmann::json(*b.mae) : nlohmann::json(nullptr);
            bands.push_back(row);
        }
        j["height_bands"] = bands;
    }
    return j.dump(2);
}

std::string MetricsReport::table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %9s %9s %9s %9s %12s\n", "", "MAE [m]", "RMSE [m]",
                  "MedAE [m]", "Bias [m]", "Pixels");
    out << line;
    auto row = [&](const char* name, const ClassMetrics& m) {
        std::snprintf(line, sizeof(line), "%-10s %9.3f %9.3f %9.3f %9.3f %12lld\n", name, m.mae,
                      m.rmse, m.medae, m.bias, static_cast<long long>(m.n_pixels));
        out << line;
    };
    row("Overall", overall);
    if (buildings) row("Buildings", *buildings);
    if (terrain) row("Terrain", *terrain);
    return out.str();
}

} // namespace resdepth
