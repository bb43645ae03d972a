#include "resdepth/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "resdepth/error.hpp"
#include "resdepth/parallel.hpp"
#include "resdepth/rng.hpp"

namespace resdepth {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("adam betas must lie in (0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_drop_factor >= 1.0)) throw ConfigError("lr_drop_factor must be >= 1");
    if (lr_drop_epochs < 1) throw ConfigError("lr_drop_epochs must be >= 1");
    if (patience_epochs < 1) throw ConfigError("patience_epochs must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
}

std::string TrainConfig::to_json() const {
    nlohmann::json j{{"lr", lr},
                     {"beta1", beta1},
                     {"beta2", beta2},
                     {"weight_decay", weight_decay},
                     {"decoupled_weight_decay", decoupled_weight_decay},
                     {"batch_size", batch_size},
                     {"lr_drop_factor", lr_drop_factor},
                     {"lr_drop_epochs", lr_drop_epochs},
                     {"patience_epochs", patience_epochs},
                     {"max_epochs", max_epochs},
                     {"early_stop_rel_tol", early_stop_rel_tol},
                     {"seed", seed},
                     {"augment", augment}};
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("TrainConfig JSON: ") + e.what());
    }
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.decoupled_weight_decay = j.value("decoupled_weight_decay", c.decoupled_weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
    c.lr_drop_epochs = j.value("lr_drop_epochs", c.lr_drop_epochs);
    c.patience_epochs = j.value("patience_epochs", c.patience_epochs);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.early_stop_rel_tol = j.value("early_stop_rel_tol", c.early_stop_rel_tol);
    c.seed = j.value("seed", c.seed);
    c.augment = j.value("augment", c.augment);
    c.validate();
    return c;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    const int drops = (epoch - 1) / cfg.lr_drop_epochs;
    return cfg.lr / std::pow(cfg.lr_drop_factor, drops);
}

template <typename T>
Adam<T>::Adam(std::vector<ParamRef<T>> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.value->size(), T(0));
        v_.emplace_back(p.value->size(), T(0));
    }
}

template <typename T>
void Adam<T>::step(double lr) {
    ++t_;
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    constexpr double eps = 1e-8;

    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& value = *params_[pi].value;
        auto& grad = *params_[pi].grad;
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t k = 0; k < value.size(); ++k) {
            if (!std::isfinite(static_cast<double>(grad[k])))
                throw NumericError("non-finite gradient in '" + params_[pi].name + "'");
        }
        parallel_for(value.size(), [&](int, std::size_t b, std::size_t e) {
            for (std::size_t k = b; k < e; ++k) {
                double g = static_cast<double>(grad[k]);
                double w = static_cast<double>(value[k]);
                if (cfg_.weight_decay != 0.0) {
                    if (cfg_.decoupled_weight_decay)
                        w -= lr * cfg_.weight_decay * w;
                    else
                        g += cfg_.weight_decay * w;
                }
                const double mk = b1 * static_cast<double>(m[k]) + (1.0 - b1) * g;
                const double vk = b2 * static_cast<double>(v[k]) + (1.0 - b2) * g * g;
                m[k] = static_cast<T>(mk);
                v[k] = static_cast<T>(vk);
                const double mhat = mk / bc1;
                const double vhat = vk / bc2;
                value[k] = static_cast<T>(w - lr * mhat / (std::sqrt(vhat) + eps));
            }
        });
    }
}

template class Adam<float>;
template class Adam<double>;

namespace {

template <typename T>
double l1_accumulate(const Tensor4<T>& pred, const Tensor4<T>& target,
                     const std::vector<std::uint8_t>& valid, Tensor4<T>* d_pred) {
    if (pred.size() != target.size())
        throw ConfigError("l1 loss: prediction and target shapes differ");
    if (valid.size() != pred.size())
        throw ConfigError("l1 loss: mask size does not match the batch");

    std::int64_t n_valid = 0;
    for (auto v : valid)
        if (v) ++n_valid;
    if (n_valid == 0) throw InputError("l1 loss: zero valid pixels");

    // Per-sample partials reduced in order: thread-count independent.
    std::vector<double> partial(static_cast<std::size_t>(pred.n), 0.0);
    const std::size_t stride = pred.sample_stride();
    parallel_for(static_cast<std::size_t>(pred.n), [&](int, std::size_t nb, std::size_t ne) {
        for (std::size_t i = nb; i < ne; ++i) {
            const T* p = pred.data.data() + i * stride;
            const T* t = target.data.data() + i * stride;
            const std::uint8_t* m = valid.data() + i * stride;
            double acc = 0.0;
            for (std::size_t k = 0; k < stride; ++k)
                if (m[k]) acc += std::abs(static_cast<double>(p[k]) - static_cast<double>(t[k]));
            partial[i] = acc;
        }
    });
    double total = 0.0;
    for (double p : partial) total += p;

    if (d_pred) {
        d_pred->ensure(pred.n, pred.c, pred.h, pred.w);
        const T inv = static_cast<T>(1.0 / static_cast<double>(n_valid));
        parallel_for(static_cast<std::size_t>(pred.n), [&](int, std::size_t nb, std::size_t ne) {
            for (std::size_t i = nb; i < ne; ++i) {
                const T* p = pred.data.data() + i * stride;
                const T* t = target.data.data() + i * stride;
                const std::uint8_t* m = valid.data() + i * stride;
                T* d = d_pred->data.data() + i * stride;
                for (std::size_t k = 0; k < stride; ++k) {
                    if (!m[k]) {
                        d[k] = T(0);
                    } else {
                        const T diff = p[k] - t[k];
                        d[k] = diff > T(0) ? inv : (diff < T(0) ? -inv : T(0));
                    }
                }
            }
        });
    }
    return total / static_cast<double>(n_valid);
}

} // namespace

template <typename T>
double masked_l1(const Tensor4<T>& pred, const Tensor4<T>& target,
                 const std::vector<std::uint8_t>& valid) {
    return l1_accumulate(pred, target, valid, static_cast<Tensor4<T>*>(nullptr));
}

template <typename T>
double masked_l1_grad(const Tensor4<T>& pred, const Tensor4<T>& target,
                      const std::vector<std::uint8_t>& valid, Tensor4<T>& d_pred) {
    return l1_accumulate(pred, target, valid, &d_pred);
}

template double masked_l1<float>(const Tensor4<float>&, const Tensor4<float>&,
                                 const std::vector<std::uint8_t>&);
template double masked_l1<double>(const Tensor4<double>&, const Tensor4<double>&,
                                  const std::vector<std::uint8_t>&);
template double masked_l1_grad<float>(const Tensor4<float>&, const Tensor4<float>&,
                                      const std::vector<std::uint8_t>&, Tensor4<float>&);
template double masked_l1_grad<double>(const Tensor4<double>&, const Tensor4<double>&,
                                       const std::vector<std::uint8_t>&, Tensor4<double>&);

namespace {

using Scalar = float;

// Copy one sample's channels into row i of the batch tensors. Nodata cells
// become 0 in the tensors; the loss mask keeps only cells where both DSM
// patches are valid and the exclusion mask is clear.
void fill_batch_slot(const Sample& s, int channels, int i, Tensor4<Scalar>& x,
                     Tensor4<Scalar>& target, std::vector<std::uint8_t>& valid) {
    const int tile = s.initial.rows();
    const std::size_t plane = static_cast<std::size_t>(tile) * tile;
    Scalar* xp = x.sample(i);
    auto put_channel = [&](const Raster2D& r, int ch) {
        Scalar* dst = xp + static_cast<std::size_t>(ch) * plane;
        for (int rr = 0; rr < tile; ++rr)
            for (int cc = 0; cc < tile; ++cc)
                dst[rr * tile + cc] =
                    r.is_nodata(rr, cc) ? Scalar(0) : static_cast<Scalar>(r.at(rr, cc));
    };
    put_channel(s.initial, 0);
    if (channels >= 2) put_channel(s.orthos.at(0), 1);
    if (channels >= 3) put_channel(s.orthos.at(1), 2);

    Scalar* tp = target.sample(i);
    std::uint8_t* vp = valid.data() + static_cast<std::size_t>(i) * plane;
    for (int rr = 0; rr < tile; ++rr) {
        for (int cc = 0; cc < tile; ++cc) {
            const bool ok = !s.gt.is_nodata(rr, cc) && !s.initial.is_nodata(rr, cc) &&
                            !s.exclusion.at(rr, cc);
            tp[rr * tile + cc] = s.gt.is_nodata(rr, cc) ? Scalar(0)
                                                        : static_cast<Scalar>(s.gt.at(rr, cc));
            vp[rr * tile + cc] = ok ? 1 : 0;
        }
    }
}

AugmentationSpec random_spec(Rng& rng, bool allow_swap) {
    AugmentationSpec spec;
    spec.rotation = static_cast<int>(rng.uniform_int(4));
    spec.flip_h = rng.uniform_int(2) == 1;
    spec.flip_v = rng.uniform_int(2) == 1;
    spec.swap_views = allow_swap && rng.uniform_int(2) == 1;
    return spec;
}

} // namespace

TrainResult train(const UNetConfig& model_cfg, const SampleSet& train_set,
                  const SampleSet& val_set, const TrainConfig& cfg, bool quiet) {
    model_cfg.validate();
    cfg.validate();
    if (train_set.samples.empty()) throw InputError("training set is empty");
    if (val_set.samples.empty()) throw InputError("validation set is empty");
    if (train_set.tile != model_cfg.tile)
        throw ConfigError("training samples are " + std::to_string(train_set.tile) +
                          "px, model tile is " + std::to_string(model_cfg.tile));
    const int need_orthos = model_cfg.input_channels - 1;
    for (const auto& s : train_set.samples)
        if (static_cast<int>(s.orthos.size()) < need_orthos)
            throw ConfigError("sample provides fewer ortho channels than the model consumes");

    UNet<Scalar> net(model_cfg, cfg.seed);
    Adam<Scalar> adam(net.parameters(), cfg);
    Rng rng(cfg.seed);
    Rng shuffle_rng = rng.fork(1);
    Rng augment_rng = rng.fork(2);

    const bool allow_swap =
        cfg.augment && train_set.multi_pair && model_cfg.input_channels == 3;

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    // The untrained state is the fallback "last good checkpoint" should the
    // very first epoch already diverge.
    result.best = Checkpoint::capture(net, train_set.stats);

    const int n_train = static_cast<int>(train_set.samples.size());
    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;

    Tensor4<Scalar> x, target, d_refined;
    std::vector<std::uint8_t> valid;

    auto run_validation = [&]() {
        double total = 0.0;
        std::int64_t batches = 0;
        const int n = static_cast<int>(val_set.samples.size());
        for (int b = 0; b < n; b += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - b);
            x.ensure(bs, model_cfg.input_channels, model_cfg.tile, model_cfg.tile);
            target.ensure(bs, 1, model_cfg.tile, model_cfg.tile);
            valid.assign(target.size(), 0);
            for (int i = 0; i < bs; ++i)
                fill_batch_slot(val_set.samples[b + i], model_cfg.input_channels, i, x, target,
                                valid);
            auto out = net.forward(x, NetMode::eval);
            total += masked_l1(*out.refined, target, valid);
            ++batches;
        }
        return total / static_cast<double>(batches);
    };

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);

        // Fisher-Yates with the seeded stream.
        for (int i = n_train - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[i], order[j]);
        }

        double train_total = 0.0;
        std::int64_t train_batches = 0;
        bool bad = false;
        for (int b = 0; b < n_train && !bad; b += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n_train - b);
            x.ensure(bs, model_cfg.input_channels, model_cfg.tile, model_cfg.tile);
            target.ensure(bs, 1, model_cfg.tile, model_cfg.tile);
            valid.assign(target.size(), 0);
            for (int i = 0; i < bs; ++i) {
                const Sample& s = train_set.samples[order[b + i]];
                if (cfg.augment) {
                    const Sample aug = augment(s, random_spec(augment_rng, allow_swap));
                    fill_batch_slot(aug, model_cfg.input_channels, i, x, target, valid);
                } else {
                    fill_batch_slot(s, model_cfg.input_channels, i, x, target, valid);
                }
            }
            auto out = net.forward(x, NetMode::train);
            const double loss = masked_l1_grad(*out.refined, target, valid, d_refined);
            if (!std::isfinite(loss)) {
                bad = true;
                break;
            }
            train_total += loss;
            ++train_batches;
            net.zero_grad();
            net.backward(d_refined);
            adam.step(lr);
        }

        const double train_loss =
            train_batches ? train_total / static_cast<double>(train_batches)
                          : std::numeric_limits<double>::quiet_NaN();
        const double val_loss = bad ? std::numeric_limits<double>::quiet_NaN() : run_validation();
        result.history.push_back({epoch, train_loss, val_loss, lr});
        if (!quiet)
            std::fprintf(stderr, "epoch %3d  lr %.2e  train %.6f  val %.6f\n", epoch, lr,
                         train_loss, val_loss);

        if (bad || !std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            result.diverged = true; // abort with the last good checkpoint
            break;
        }

        if (val_loss < result.best_val_loss * (1.0 - cfg.early_stop_rel_tol) ||
            result.best_epoch == 0) {
            result.best_epoch = epoch;
            result.best_val_loss = val_loss;
            result.best = Checkpoint::capture(net, train_set.stats);
        } else if (val_loss < result.best_val_loss) {
            // Track the minimum itself even when the improvement is not
            // significant enough to reset the patience window.
            result.best_val_loss = val_loss;
            result.best = Checkpoint::capture(net, train_set.stats);
        }
        if (epoch - result.best_epoch >= cfg.patience_epochs) break;
    }

    return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "epoch,train_loss,val_loss,lr\n";
    char buf[160];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", rec.epoch, rec.train_loss,
                      rec.val_loss, rec.lr);
        out << buf;
    }
}

namespace {

// Triangular feather weight per in-tile offset.
double feather(int i, int tile) { return static_cast<double>(std::min(i + 1, tile - i)); }

} // namespace

Raster2D refine(const Checkpoint& ckpt, const Raster2D& dsm,
                const std::vector<Raster2D>& orthos) {
    const UNetConfig& cfg = ckpt.config;
    cfg.validate();
    ckpt.stats.validate();
    const int need = cfg.input_channels - 1;
    if (static_cast<int>(orthos.size()) < need)
        throw ConfigError("refine: model consumes " + std::to_string(need) +
                          " ortho channels, got " + std::to_string(orthos.size()));
    for (int i = 0; i < need; ++i)
        if (!orthos[i].header().same_grid(dsm.header()))
            throw ConfigError("refine: ortho image grid differs from the DSM grid");
    const int tile = cfg.tile;
    if (dsm.rows() < tile || dsm.cols() < tile)
        throw ConfigError("refine: raster smaller than the model tile");

    UNet<Scalar> net = ckpt.build<Scalar>();

    // Tile origins with 50% overlap, clamped so the raster is covered.
    auto origins_1d = [&](int extent) {
        std::vector<int> pos;
        const int stride = tile / 2;
        for (int p = 0;; p += stride) {
            if (p + tile >= extent) {
                pos.push_back(extent - tile);
                break;
            }
            pos.push_back(p);
        }
        return pos;
    };
    const std::vector<int> row0s = origins_1d(dsm.rows());
    const std::vector<int> col0s = origins_1d(dsm.cols());

    std::vector<double> residual_acc(dsm.values().size(), 0.0);
    std::vector<double> weight_acc(dsm.values().size(), 0.0);

    struct Pending {
        int row0, col0;
        double patch_mean;
    };
    const int batch_cap = 16;
    Tensor4<Scalar> x;
    std::vector<Pending> pending;

    auto flush = [&]() {
        if (pending.empty()) return;
        auto out = net.forward(x, NetMode::eval);
        for (std::size_t i = 0; i < pending.size(); ++i) {
            const auto& p = pending[i];
            const Scalar* res = out.residual->sample(static_cast<int>(i));
            for (int r = 0; r < tile; ++r) {
                for (int c = 0; c < tile; ++c) {
                    const double w = feather(r, tile) * feather(c, tile);
                    const std::size_t k =
                        static_cast<std::size_t>(p.row0 + r) * dsm.cols() + (p.col0 + c);
                    residual_acc[k] +=
                        w * static_cast<double>(res[r * tile + c]) * ckpt.stats.dsm_scale;
                    weight_acc[k] += w;
                }
            }
        }
        pending.clear();
    };

    std::size_t slot = 0;
    for (int r0 : row0s) {
        for (int c0 : col0s) {
            if (pending.empty())
                x.ensure(std::min<int>(batch_cap, static_cast<int>(row0s.size() * col0s.size())),
                         cfg.input_channels, tile, tile);
            const Raster2D init_patch = extract_tile(dsm, r0, c0, tile);
            auto norm = normalize_dsm_patch(init_patch, ckpt.stats);
            Sample s;
            s.initial = norm.patch;
            s.gt = norm.patch; // unused by inference
            s.exclusion = Mask(init_patch.header());
            for (int i = 0; i < need; ++i)
                s.orthos.push_back(
                    normalize_image(extract_tile(orthos[i], r0, c0, tile), ckpt.stats));
            // Reuse the batching helper; target/valid are scratch here.
            static thread_local Tensor4<Scalar> scratch_target;
            static thread_local std::vector<std::uint8_t> scratch_valid;
            scratch_target.ensure(x.n, 1, tile, tile);
            scratch_valid.assign(scratch_target.size(), 0);
            fill_batch_slot(s, cfg.input_channels, static_cast<int>(slot), x, scratch_target,
                            scratch_valid);
            pending.push_back({r0, c0, norm.patch_mean});
            ++slot;
            if (static_cast<int>(pending.size()) == x.n) {
                flush();
                slot = 0;
            }
        }
    }
    if (!pending.empty()) {
        // Shrink the batch to the leftover count before the final pass.
        Tensor4<Scalar> tail;
        tail.ensure(static_cast<int>(pending.size()), cfg.input_channels, tile, tile);
        std::memcpy(tail.data.data(), x.data.data(), sizeof(Scalar) * tail.size());
        x = std::move(tail);
        flush();
    }

    Raster2D out = dsm;
    for (int r = 0; r < dsm.rows(); ++r) {
        for (int c = 0; c < dsm.cols(); ++c) {
            if (dsm.is_nodata(r, c)) continue;
            const std::size_t k = static_cast<std::size_t>(r) * dsm.cols() + c;
            out.at(r, c) = dsm.at(r, c) + residual_acc[k] / weight_acc[k];
        }
    }
    return out;
}

Raster2D refine_iterative(const std::vector<Checkpoint>& checkpoints, const Raster2D& dsm,
                          const std::vector<Raster2D>& raw_images,
                          const std::vector<ParallelCamera>& cameras) {
    if (checkpoints.empty()) throw ConfigError("refine_iterative: no checkpoints given");
    if (checkpoints.size() > 2)
        throw ConfigError("refine_iterative: at most two stages are supported");
    if (raw_images.size() != cameras.size())
        throw ConfigError("refine_iterative: need one camera per image");
    const int need = checkpoints[0].config.input_channels - 1;
    if (static_cast<int>(raw_images.size()) < need)
        throw ConfigError("refine_iterative: stage 1 consumes " + std::to_string(need) +
                          " views, got " + std::to_string(raw_images.size()));

    auto rectify_all = [&](const Raster2D& surface) {
        std::vector<Raster2D> orthos;
        orthos.reserve(raw_images.size());
        for (std::size_t i = 0; i < raw_images.size(); ++i)
            orthos.push_back(orthorectify(raw_images[i], surface, cameras[i]));
        return orthos;
    };

    const Raster2D stage1 = refine(checkpoints[0], dsm, rectify_all(dsm));
    if (checkpoints.size() == 1) return stage1;

    const int need2 = checkpoints[1].config.input_channels - 1;
    if (static_cast<int>(raw_images.size()) < need2)
        throw ConfigError("refine_iterative: stage 2 consumes " + std::to_string(need2) +
                          " views, got " + std::to_string(raw_images.size()));
    return refine(checkpoints[1], stage1, rectify_all(stage1));
}

} // namespace resdepth
