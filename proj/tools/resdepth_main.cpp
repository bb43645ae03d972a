// Command-line front end for the DSM refinement toolkit.
//
// Subcommands: synth, pairs, fuse, ortho, normfit, train, refine, eval.
// Exit codes: 0 success, 2 usage/config error, 1 runtime failure. Failures
// also emit a one-line JSON error record on stderr.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "resdepth/acquisition.hpp"
#include "resdepth/error.hpp"
#include "resdepth/evaluation.hpp"
#include "resdepth/fusion.hpp"
#include "resdepth/normalization.hpp"
#include "resdepth/ortho.hpp"
#include "resdepth/parallel.hpp"
#include "resdepth/raster.hpp"
#include "resdepth/sampling.hpp"
#include "resdepth/synthcity.hpp"
#include "resdepth/training.hpp"
#include "resdepth/unet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resdepth;

namespace {

struct GlobalOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool quiet = false;
};

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        json j;
        in >> j;
        return j;
    } catch (const std::exception& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

void dump_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

void apply_threads(const GlobalOptions& opts) {
    int threads = opts.threads;
    if (const char* env = std::getenv("RESDEPTH_THREADS")) {
        // The environment variable overrides the flag.
        threads = std::atoi(env);
    }
    if (threads > 0) set_thread_count(threads);
}

std::string require_out(const GlobalOptions& opts) {
    if (opts.out.empty()) throw ConfigError("--out is required for this subcommand");
    return opts.out;
}

// ---------------------------------------------------------------------- synth

int run_synth(const GlobalOptions& opts) {
    if (opts.config.empty()) throw ConfigError("synth needs --config scene.json");
    const json cfg = load_json(opts.config);
    SceneSpec spec = SceneSpec::from_json(cfg.at("scene").dump());
    if (opts.seed) spec.seed = *opts.seed;

    CorruptionParams corruption;
    if (cfg.contains("corruption"))
        corruption = CorruptionParams::from_json(cfg.at("corruption").dump());

    SunSpec sun;
    if (cfg.contains("sun")) {
        sun.azimuth = cfg.at("sun").value("azimuth", sun.azimuth);
        sun.elevation = cfg.at("sun").value("elevation", sun.elevation);
    }

    const int cells = static_cast<int>(std::llround(spec.extent / spec.cell_size));
    GridHeader grid{0.0, spec.extent, spec.cell_size, cells, cells};
    std::vector<ParallelCamera> cameras;
    if (cfg.contains("cameras")) {
        for (const auto& c : cfg.at("cameras")) {
            ParallelCamera cam = ParallelCamera::aligned_with(
                grid, c.at("azimuth").get<double>(), c.at("off_nadir").get<double>());
            if (c.contains("gsd")) cam.gsd = c.at("gsd").get<double>();
            if (c.contains("origin_x")) cam.origin_x = c.at("origin_x").get<double>();
            if (c.contains("origin_y")) cam.origin_y = c.at("origin_y").get<double>();
            cameras.push_back(cam);
        }
    } else {
        cameras.push_back(ParallelCamera::aligned_with(grid, 90.0, 15.0));
        cameras.push_back(ParallelCamera::aligned_with(grid, 270.0, 12.0));
    }

    const SceneBundle bundle = make_scene_bundle(spec, corruption, cameras, sun);
    const std::string out = require_out(opts);
    write_scene_bundle(bundle, out);
    if (!opts.quiet)
        std::printf("scene written to %s (%d x %d cells, %zu views)\n", out.c_str(), cells,
                    cells, bundle.views.size());
    return 0;
}

// ---------------------------------------------------------------------- pairs

int run_pairs(const GlobalOptions& opts, const std::string& meta_path,
              const std::string& profile) {
    const auto images = read_acquisition_csv(meta_path);
    SelectionCriteria criteria;
    if (profile == "matching")
        criteria = SelectionCriteria::matching();
    else if (profile == "refinement")
        criteria = SelectionCriteria::refinement();
    else
        throw ConfigError("--profile must be 'matching' or 'refinement'");

    const auto pairs = select_pairs(images, criteria);
    const auto partition = partition_pairs(pairs, images);

    json out;
    out["profile"] = profile;
    out["image_count"] = images.size();
    out["pair_count"] = pairs.size();
    out["image_disjoint_groups"] = partition.image_disjoint;
    auto pair_json = [&](const StereoPair& p, const char* group) {
        return json{{"left", p.left},
                    {"right", p.right},
                    {"intersection_deg", p.intersection_angle},
                    {"mean_incidence_deg", p.mean_incidence},
                    {"sun_diff_deg", p.sun_diff},
                    {"group", group}};
    };
    out["pairs"] = json::array();
    for (const auto& p : partition.group_a) out["pairs"].push_back(pair_json(p, "A"));
    for (const auto& p : partition.group_b) out["pairs"].push_back(pair_json(p, "B"));

    if (!opts.out.empty()) dump_json(out, opts.out);
    if (!opts.quiet) {
        std::printf("%-12s %-12s %14s %14s %12s %6s\n", "left", "right", "intersection",
                    "mean_incid", "sun_diff", "group");
        for (const auto& p : out["pairs"]) {
            std::printf("%-12s %-12s %14.2f %14.2f %12.2f %6s\n",
                        p["left"].get<std::string>().c_str(),
                        p["right"].get<std::string>().c_str(), p["intersection_deg"].get<double>(),
                        p["mean_incidence_deg"].get<double>(), p["sun_diff_deg"].get<double>(),
                        p["group"].get<std::string>().c_str());
        }
        if (!partition.image_disjoint)
            std::printf("warning: no image-disjoint balanced split exists; "
                        "groups share images\n");
    }
    return 0;
}

// ----------------------------------------------------------------------- fuse

int run_fuse(const GlobalOptions& opts, const std::string& cloud_path) {
    if (opts.config.empty()) throw ConfigError("fuse needs --config fusion.json");
    const json cfg = load_json(opts.config);
    GridHeader extent;
    extent.origin_x = cfg.at("origin_x").get<double>();
    extent.origin_y = cfg.at("origin_y").get<double>();
    extent.cell_size = cfg.at("cell_size").get<double>();
    extent.rows = cfg.at("rows").get<int>();
    extent.cols = cfg.at("cols").get<int>();

    FusionParams params;
    params.spike_threshold = cfg.value("spike_threshold", params.spike_threshold);
    params.idw_power = cfg.value("idw_power", params.idw_power);
    params.idw_max_neighbors = cfg.value("idw_max_neighbors", params.idw_max_neighbors);

    const PointCloud cloud = read_xyz(cloud_path);
    const Raster2D dsm = fuse_dsm(cloud, extent, params);
    write_ascii_grid(dsm, require_out(opts));
    if (!opts.quiet)
        std::printf("fused %zu points into %dx%d cells (n = %d)\n", cloud.points.size(),
                    extent.rows, extent.cols, fusion_point_budget(cloud, extent));
    return 0;
}

// ---------------------------------------------------------------------- ortho

int run_ortho(const GlobalOptions& opts, const std::string& image_path,
              const std::string& dsm_path, const std::string& camera_path) {
    const Raster2D image = read_ascii_grid(image_path);
    const Raster2D dsm = read_ascii_grid(dsm_path);
    const ParallelCamera cam = read_camera_json(camera_path);
    const Raster2D ortho = orthorectify(image, dsm, cam);
    write_ascii_grid(ortho, require_out(opts));
    return 0;
}

// ------------------------------------------------------------- dataset loading

struct ManifestData {
    std::vector<TrainingRegion> train_regions;
    std::vector<TrainingRegion> val_regions;
    int count_per_region = 2000;
    int val_count_per_region = 256;
    int tile = 64;
    std::uint64_t seed = 1;
    int orthos_per_sample = 2;
    std::size_t pair_count = 0;
};

// Manifest schema: {"regions": [{"dir", "train_stripes", "val_stripes",
// "initial"?}], "stripe_count", "pairs": [[a, b]...], "count_per_region",
// "val_count_per_region", "tile", "variant": "stereo"|"mono"|"none", "seed"}
ManifestData load_manifest(const std::string& path) {
    const json j = load_json(path);
    ManifestData data;
    data.count_per_region = j.value("count_per_region", data.count_per_region);
    data.val_count_per_region = j.value("val_count_per_region", data.val_count_per_region);
    data.tile = j.value("tile", data.tile);
    data.seed = j.value("seed", data.seed);
    const std::string variant = j.value("variant", std::string("stereo"));
    if (variant == "stereo")
        data.orthos_per_sample = 2;
    else if (variant == "mono")
        data.orthos_per_sample = 1;
    else if (variant == "none")
        data.orthos_per_sample = 0;
    else
        throw ConfigError("manifest variant must be stereo, mono, or none");

    std::vector<std::pair<int, int>> pairs;
    for (const auto& p : j.value("pairs", json::array()))
        pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    data.pair_count = pairs.size();
    const int stripe_count = j.value("stripe_count", 5);

    const fs::path base = fs::path(path).parent_path();
    for (const auto& r : j.at("regions")) {
        const fs::path dir = base / r.at("dir").get<std::string>();
        const SceneBundle bundle = read_scene_bundle(dir.string());

        TrainingRegion region;
        region.name = r.value("name", r.at("dir").get<std::string>());
        region.initial = r.contains("initial")
                             ? read_ascii_grid((base / r.at("initial").get<std::string>()).string())
                             : bundle.initial;
        region.gt = bundle.scene.gt;
        region.pairs = pairs;
        region.orthos_per_sample = data.orthos_per_sample;
        for (std::size_t v = 0; v < bundle.views.size(); ++v)
            region.orthos.push_back(
                orthorectify(bundle.views[v], region.initial, bundle.cameras[v]));

        const auto stripes = stripe_split(region.initial.rows(), region.initial.cols(),
                                          stripe_count);
        auto pick = [&](const char* key) {
            std::vector<ColRange> out;
            for (const auto& idx : r.at(key)) out.push_back(stripes.at(idx.get<std::size_t>()));
            return out;
        };
        TrainingRegion val = region;
        region.stripes = pick("train_stripes");
        val.stripes = pick("val_stripes");
        data.train_regions.push_back(std::move(region));
        data.val_regions.push_back(std::move(val));
    }
    return data;
}

// -------------------------------------------------------------------- normfit

int run_normfit(const GlobalOptions& opts) {
    if (opts.config.empty()) throw ConfigError("normfit needs --config manifest.json");
    ManifestData data = load_manifest(opts.config);
    if (opts.seed) data.seed = *opts.seed;
    const SampleSet set =
        build_training_set(data.train_regions, data.count_per_region, data.tile, data.seed);
    write_norm_stats(set.stats, require_out(opts));
    if (!opts.quiet)
        std::printf("dsm_scale %.6f  image_mean %.6f  image_std %.6f\n", set.stats.dsm_scale,
                    set.stats.image_mean, set.stats.image_std);
    return 0;
}

// ---------------------------------------------------------------------- train

int run_train(const GlobalOptions& opts) {
    if (opts.config.empty()) throw ConfigError("train needs --config train.json");
    const json cfg = load_json(opts.config);
    const std::string out_dir = require_out(opts);
    fs::create_directories(out_dir);

    const fs::path base = fs::path(opts.config).parent_path();
    const std::string manifest_path = (base / cfg.at("manifest").get<std::string>()).string();
    ManifestData data = load_manifest(manifest_path);

    UNetConfig model = UNetConfig::from_json(cfg.at("model").dump());
    TrainConfig train_cfg =
        cfg.contains("train") ? TrainConfig::from_json(cfg.at("train").dump()) : TrainConfig{};
    if (opts.seed) train_cfg.seed = *opts.seed;
    if (!cfg.contains("train") || !cfg.at("train").contains("lr_drop_epochs")) {
        // Schedule tied to the pair count: 200-epoch drops for a single
        // pair, 50-epoch drops when several pairs are mixed.
        train_cfg.lr_drop_epochs = data.pair_count > 1 ? 50 : 200;
    }
    if (model.input_channels != data.orthos_per_sample + 1)
        throw ConfigError("model input_channels " + std::to_string(model.input_channels) +
                          " does not match manifest variant (wants " +
                          std::to_string(data.orthos_per_sample + 1) + ")");

    const SampleSet train_set =
        build_training_set(data.train_regions, data.count_per_region, data.tile, data.seed);
    const SampleSet val_set = build_training_set(data.val_regions, data.val_count_per_region,
                                                 data.tile, data.seed + 1, &train_set.stats);

    const TrainResult result = train(model, train_set, val_set, train_cfg, opts.quiet);
    save_checkpoint(result.best, (fs::path(out_dir) / "checkpoint.rdck").string());
    write_history_csv(result.history, (fs::path(out_dir) / "history.csv").string());
    write_norm_stats(train_set.stats, (fs::path(out_dir) / "norm_stats.json").string());

    if (!opts.quiet)
        std::printf("best epoch %d  val_loss %.6f%s\n", result.best_epoch, result.best_val_loss,
                    result.diverged ? "  (diverged; last good checkpoint kept)" : "");
    return result.diverged ? 1 : 0;
}

// --------------------------------------------------------------------- refine

int run_refine(const GlobalOptions& opts, const std::string& ckpt_path,
               const std::string& ckpt2_path, const std::string& dsm_path,
               const std::vector<std::string>& view_paths,
               const std::vector<std::string>& camera_paths) {
    const Raster2D dsm = read_ascii_grid(dsm_path);
    std::vector<Checkpoint> checkpoints{load_checkpoint(ckpt_path)};
    if (!ckpt2_path.empty()) checkpoints.push_back(load_checkpoint(ckpt2_path));

    if (view_paths.size() != camera_paths.size())
        throw ConfigError("need one --camera per --view");
    std::vector<Raster2D> images;
    std::vector<ParallelCamera> cams;
    for (std::size_t i = 0; i < view_paths.size(); ++i) {
        images.push_back(read_ascii_grid(view_paths[i]));
        cams.push_back(read_camera_json(camera_paths[i]));
    }

    const Raster2D refined = refine_iterative(checkpoints, dsm, images, cams);
    write_ascii_grid(refined, require_out(opts));
    return 0;
}

// ----------------------------------------------------------------------- eval

int run_eval(const GlobalOptions& opts, const std::string& pred_path,
             const std::string& ref_path, const std::string& buildings_path,
             const std::string& exclude_path, const std::string& terrain_path,
             const std::string& bands_arg) {
    const Raster2D pred = read_ascii_grid(pred_path);
    const Raster2D ref = read_ascii_grid(ref_path);
    std::optional<Mask> buildings, exclusion;
    if (!buildings_path.empty()) buildings = read_mask(buildings_path);
    if (!exclude_path.empty()) exclusion = read_mask(exclude_path);

    MetricsReport report = evaluate(pred, ref, buildings ? &*buildings : nullptr,
                                    exclusion ? &*exclusion : nullptr);

    if (!terrain_path.empty()) {
        if (!buildings) throw ConfigError("--terrain (height bands) needs --buildings");
        const Raster2D terrain = read_ascii_grid(terrain_path);
        std::vector<double> edges = kDefaultBandEdges;
        if (!bands_arg.empty()) {
            edges.clear();
            std::istringstream in(bands_arg);
            std::string tok;
            while (std::getline(in, tok, ',')) edges.push_back(std::stod(tok));
        }
        report.height_bands = height_band_stats(pred, ref, terrain, *buildings, edges,
                                                exclusion ? &*exclusion : nullptr);
    }

    if (!opts.out.empty()) {
        std::ofstream out(opts.out, std::ios::binary);
        if (!out) throw IoError("cannot open '" + opts.out + "' for writing");
        out << report.to_json() << '\n';
    }
    if (!opts.quiet) std::fputs(report.table().c_str(), stdout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DSM refinement toolkit: synthetic scenes, stereo pair selection,\n"
                 "fusion, ortho-rectification, residual U-Net training and evaluation"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config, "JSON config file");
    app.add_option("--out", opts.out, "output file or directory");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "seed override");
    app.add_option("--threads", opts.threads, "worker thread count");
    app.add_flag("--quiet", opts.quiet, "suppress progress output");

    auto* synth = app.add_subcommand("synth", "generate a synthetic scene bundle");

    std::string meta_path, profile = "refinement";
    auto* pairs = app.add_subcommand("pairs", "select and partition stereo pairs");
    pairs->add_option("--meta", meta_path, "acquisition CSV")->required();
    pairs->add_option("--profile", profile, "matching | refinement");

    std::string cloud_path;
    auto* fuse = app.add_subcommand("fuse", "rasterize a point cloud into a DSM");
    fuse->add_option("--cloud", cloud_path, "XYZ point file")->required();

    std::string image_path, dsm_path, camera_path;
    auto* ortho = app.add_subcommand("ortho", "ortho-rectify an image against a DSM");
    ortho->add_option("--image", image_path)->required();
    ortho->add_option("--dsm", dsm_path)->required();
    ortho->add_option("--camera", camera_path)->required();

    auto* normfit = app.add_subcommand("normfit", "fit normalization statistics");

    auto* train_cmd = app.add_subcommand("train", "train a refinement model");

    std::string ckpt_path, ckpt2_path, refine_dsm;
    std::vector<std::string> view_paths, camera_paths;
    auto* refine_cmd = app.add_subcommand("refine", "refine a DSM with a trained model");
    refine_cmd->add_option("--checkpoint", ckpt_path)->required();
    refine_cmd->add_option("--checkpoint2", ckpt2_path, "second-stage checkpoint");
    refine_cmd->add_option("--dsm", refine_dsm)->required();
    refine_cmd->add_option("--view", view_paths, "raw view image (repeatable)");
    refine_cmd->add_option("--camera", camera_paths, "camera JSON (repeatable)");

    std::string pred_path, ref_path, buildings_path, exclude_path, terrain_path, bands_arg;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a refined DSM");
    eval_cmd->add_option("--pred", pred_path)->required();
    eval_cmd->add_option("--ref", ref_path)->required();
    eval_cmd->add_option("--buildings", buildings_path);
    eval_cmd->add_option("--exclude", exclude_path);
    eval_cmd->add_option("--terrain", terrain_path, "GT terrain for height bands");
    eval_cmd->add_option("--bands", bands_arg, "comma-separated band edges");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // Usage problems exit 2; --help exits 0.
        return code == 0 ? 0 : 2;
    }

    if (seed_opt->count() > 0) opts.seed = seed_value;
    apply_threads(opts);

    try {
        if (synth->parsed()) return run_synth(opts);
        if (pairs->parsed()) return run_pairs(opts, meta_path, profile);
        if (fuse->parsed()) return run_fuse(opts, cloud_path);
        if (ortho->parsed()) return run_ortho(opts, image_path, dsm_path, camera_path);
        if (normfit->parsed()) return run_normfit(opts);
        if (train_cmd->parsed()) return run_train(opts);
        if (refine_cmd->parsed())
            return run_refine(opts, ckpt_path, ckpt2_path, refine_dsm, view_paths, camera_paths);
        if (eval_cmd->parsed())
            return run_eval(opts, pred_path, ref_path, buildings_path, exclude_path, terrain_path,
                            bands_arg);
    } catch (const ConfigError& e) {
        std::cerr << json{{"error", "config"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << json{{"error", "parse"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << json{{"error", "runtime"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 2;
}
