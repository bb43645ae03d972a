#include "resdepth/unet.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "resdepth/error.hpp"
#include "resdepth/parallel.hpp"
#include "resdepth/rng.hpp"

namespace resdepth {

std::string UNetConfig::to_json() const {
    nlohmann::json j{{"input_channels", input_channels},
                     {"depth", depth},
                     {"base_filters", base_filters},
                     {"max_filters", max_filters},
                     {"tile", tile}};
    return j.dump();
}

UNetConfig UNetConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("UNetConfig JSON: ") + e.what());
    }
    UNetConfig c;
    c.input_channels = j.at("input_channels").get<int>();
    c.depth = j.at("depth").get<int>();
    c.base_filters = j.at("base_filters").get<int>();
    c.max_filters = j.at("max_filters").get<int>();
    c.tile = j.at("tile").get<int>();
    c.validate();
    return c;
}

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRow = Eigen::Map<const RowMat<T>>;

// 3x3, stride 1, same padding. cols is K x P row-major, K = C*9, P = H*W.
template <typename T>
void im2col3(const T* src, int C, int H, int W, T* cols) {
    const std::size_t P = static_cast<std::size_t>(H) * W;
    for (int ci = 0; ci < C; ++ci) {
        const T* plane = src + static_cast<std::size_t>(ci) * P;
        for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
                T* row = cols + (static_cast<std::size_t>(ci) * 9 + ki * 3 + kj) * P;
                const int sy = ki - 1;
                const int sx = kj - 1;
                for (int y = 0; y < H; ++y) {
                    T* dst = row + static_cast<std::size_t>(y) * W;
                    const int yy = y + sy;
                    if (yy < 0 || yy >= H) {
                        std::memset(dst, 0, sizeof(T) * W);
                        continue;
                    }
                    const T* srow = plane + static_cast<std::size_t>(yy) * W;
                    const int x0 = sx < 0 ? 1 : 0;       // first writable x
                    const int x1 = sx > 0 ? W - 1 : W;   // one past last
                    if (x0 > 0) dst[0] = T(0);
                    if (x1 < W) dst[W - 1] = T(0);
                    std::memcpy(dst + x0, srow + x0 + sx, sizeof(T) * (x1 - x0));
                }
            }
        }
    }
}

// Transpose of im2col3: accumulate dcols back into the image gradient.
template <typename T>
void col2im3(const T* dcols, int C, int H, int W, T* dst) {
    const std::size_t P = static_cast<std::size_t>(H) * W;
    std::memset(dst, 0, sizeof(T) * C * P);
    for (int ci = 0; ci < C; ++ci) {
        T* plane = dst + static_cast<std::size_t>(ci) * P;
        for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
                const T* row = dcols + (static_cast<std::size_t>(ci) * 9 + ki * 3 + kj) * P;
                const int sy = ki - 1;
                const int sx = kj - 1;
                for (int y = 0; y < H; ++y) {
                    const int yy = y + sy;
                    if (yy < 0 || yy >= H) continue;
                    const T* srow = row + static_cast<std::size_t>(y) * W;
                    T* drow = plane + static_cast<std::size_t>(yy) * W;
                    const int x0 = sx < 0 ? 1 : 0;
                    const int x1 = sx > 0 ? W - 1 : W;
                    for (int x = x0; x < x1; ++x) drow[x + sx] += srow[x];
                }
            }
        }
    }
}

template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    NumVec<T> value;
    NumVec<T> grad;

    void init(std::string n, std::vector<int> s) {
        name = std::move(n);
        shape = std::move(s);
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        value.assign(total, T(0));
        grad.assign(total, T(0));
    }
};

// Per-worker / per-sample scratch shared by the layers. prepare() must run
// before any parallel region so workers only touch their own inner vector.
template <typename T>
struct Workspace {
    std::vector<NumVec<T>> cols;      // per worker: im2col / gather buffers
    std::vector<NumVec<T>> scratch;   // per worker: secondary buffer
    NumVec<T> dw_slots;               // per sample parameter-gradient slots
    NumVec<T> db_slots;

    void prepare(int workers) {
        if (cols.size() < static_cast<std::size_t>(workers)) cols.resize(workers);
        if (scratch.size() < static_cast<std::size_t>(workers)) scratch.resize(workers);
    }
    NumVec<T>& col(int worker, std::size_t n) {
        if (cols[worker].size() < n) cols[worker].resize(n);
        return cols[worker];
    }
    NumVec<T>& tmp(int worker, std::size_t n) {
        if (scratch[worker].size() < n) scratch[worker].resize(n);
        return scratch[worker];
    }
    void slots(std::size_t w_per_sample, std::size_t b_per_sample, int batch) {
        if (dw_slots.size() < w_per_sample * batch) dw_slots.resize(w_per_sample * batch);
        if (db_slots.size() < b_per_sample * batch) db_slots.resize(b_per_sample * batch);
    }
};

// ---------------------------------------------------------------------------

template <typename T>
struct Conv3x3 {
    int in_ch = 0, out_ch = 0;
    Param<T> w, b; // w: [out_ch, in_ch*9]

    void configure(const std::string& name, int in, int out) {
        in_ch = in;
        out_ch = out;
        w.init(name + ".weight", {out, in, 3, 3});
        b.init(name + ".bias", {out});
    }

    void forward(const Tensor4<T>& x, Tensor4<T>& y, Workspace<T>& ws) {
        const int H = x.h, W = x.w;
        const std::size_t P = static_cast<std::size_t>(H) * W;
        const std::size_t K = static_cast<std::size_t>(in_ch) * 9;
        y.ensure(x.n, out_ch, H, W);
        ws.prepare(parallel_workers(static_cast<std::size_t>(x.n)));
        parallel_for(static_cast<std::size_t>(x.n), [&](int worker, std::size_t nb, std::size_t ne) {
            auto& cols = ws.col(worker, K * P);
            for (std::size_t i = nb; i < ne; ++i) {
                im2col3(x.sample(static_cast<int>(i)), in_ch, H, W, cols.data());
                CMapRow<T> Wm(w.value.data(), out_ch, K);
                CMapRow<T> Xc(cols.data(), K, P);
                MapRow<T> Y(y.sample(static_cast<int>(i)), out_ch, P);
                Y.noalias() = Wm * Xc;
                for (int co = 0; co < out_ch; ++co) Y.row(co).array() += b.value[co];
            }
        });
    }

    // dy -> (dw, db, dx). dx may be null when the input gradient is unused.
    void backward(const Tensor4<T>& x, const Tensor4<T>& dy, Tensor4<T>* dx, Workspace<T>& ws) {
        const int H = x.h, W = x.w;
        const std::size_t P = static_cast<std::size_t>(H) * W;
        const std::size_t K = static_cast<std::size_t>(in_ch) * 9;
        const std::size_t wsz = static_cast<std::size_t>(out_ch) * K;
        ws.slots(wsz, static_cast<std::size_t>(out_ch), x.n);
        ws.prepare(parallel_workers(static_cast<std::size_t>(x.n)));
        if (dx) dx->ensure(x.n, in_ch, H, W);

        parallel_for(static_cast<std::size_t>(x.n), [&](int worker, std::size_t nb, std::size_t ne) {
            auto& cols = ws.col(worker, K * P);
            auto& dcols = ws.tmp(worker, K * P);
            for (std::size_t i = nb; i < ne; ++i) {
                const int s = static_cast<int>(i);
                im2col3(x.sample(s), in_ch, H, W, cols.data());
                CMapRow<T> dY(dy.sample(s), out_ch, P);
                CMapRow<T> Xc(cols.data(), K, P);
                MapRow<T> dWi(ws.dw_slots.data() + i * wsz, out_ch, K);
                dWi.noalias() = dY * Xc.transpose();
                T* dbi = ws.db_slots.data() + i * out_ch;
                for (int co = 0; co < out_ch; ++co) dbi[co] = dY.row(co).sum();
                if (dx) {
                    CMapRow<T> Wm(w.value.data(), out_ch, K);
                    MapRow<T> dXc(dcols.data(), K, P);
                    dXc.noalias() = Wm.transpose() * dY;
                    col2im3(dcols.data(), in_ch, H, W, dx->sample(s));
                }
            }
        });
        // Sample-ordered reduction keeps results thread-count independent.
        for (int i = 0; i < x.n; ++i) {
            const T* dwi = ws.dw_slots.data() + static_cast<std::size_t>(i) * wsz;
            for (std::size_t k = 0; k < wsz; ++k) w.grad[k] += dwi[k];
            const T* dbi = ws.db_slots.data() + static_cast<std::size_t>(i) * out_ch;
            for (int co = 0; co < out_ch; ++co) b.grad[co] += dbi[co];
        }
    }
};

// 2x2 transposed convolution, stride 2. w: [in_ch, out_ch, 2, 2].
template <typename T>
struct UpConv2x2 {
    int in_ch = 0, out_ch = 0;
    Param<T> w, b;

    void configure(const std::string& name, int in, int out) {
        in_ch = in;
        out_ch = out;
        w.init(name + ".weight", {in, out, 2, 2});
        b.init(name + ".bias", {out});
    }

    T wsub(int ci, int co, int dr, int dc) const {
        return w.value[((static_cast<std::size_t>(ci) * out_ch + co) * 2 + dr) * 2 + dc];
    }

    void forward(const Tensor4<T>& x, Tensor4<T>& y, Workspace<T>& ws) {
        const int Hi = x.h, Wi = x.w;
        const std::size_t P = static_cast<std::size_t>(Hi) * Wi;
        y.ensure(x.n, out_ch, Hi * 2, Wi * 2);
        ws.prepare(parallel_workers(static_cast<std::size_t>(x.n)));
        // Pack the four (in_ch x out_ch) sub-kernels once.
        NumVec<T> subs(4 * static_cast<std::size_t>(in_ch) * out_ch);
        for (int dr = 0; dr < 2; ++dr)
            for (int dc = 0; dc < 2; ++dc)
                for (int ci = 0; ci < in_ch; ++ci)
                    for (int co = 0; co < out_ch; ++co)
                        subs[((dr * 2 + dc) * static_cast<std::size_t>(in_ch) + ci) * out_ch + co] =
                            wsub(ci, co, dr, dc);

        parallel_for(static_cast<std::size_t>(x.n), [&](int worker, std::size_t nb, std::size_t ne) {
            auto& ybuf = ws.col(worker, static_cast<std::size_t>(out_ch) * P);
            for (std::size_t i = nb; i < ne; ++i) {
                const int s = static_cast<int>(i);
                CMapRow<T> X(x.sample(s), in_ch, P);
                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        CMapRow<T> Ws(subs.data() +
                                          (dr * 2 + dc) * static_cast<std::size_t>(in_ch) * out_ch,
                                      in_ch, out_ch);
                        MapRow<T> Ys(ybuf.data(), out_ch, P);
                        Ys.noalias() = Ws.transpose() * X;
                        for (int co = 0; co < out_ch; ++co) {
                            const T bias = b.value[co];
                            const T* src = ybuf.data() + static_cast<std::size_t>(co) * P;
                            T* plane = y.sample(s) + static_cast<std::size_t>(co) * y.plane();
                            for (int yy = 0; yy < Hi; ++yy) {
                                T* drow = plane + (static_cast<std::size_t>(2 * yy + dr)) * (Wi * 2);
                                const T* srow = src + static_cast<std::size_t>(yy) * Wi;
                                for (int xx = 0; xx < Wi; ++xx) drow[2 * xx + dc] = srow[xx] + bias;
                            }
                        }
                    }
                }
            }
        });
    }

    void backward(const Tensor4<T>& x, const Tensor4<T>& dy, Tensor4<T>* dx, Workspace<T>& ws) {
        const int Hi = x.h, Wi = x.w;
        const std::size_t P = static_cast<std::size_t>(Hi) * Wi;
        const std::size_t wsz = w.value.size();
        ws.slots(wsz, static_cast<std::size_t>(out_ch), x.n);
        ws.prepare(parallel_workers(static_cast<std::size_t>(x.n)));
        if (dx) dx->ensure(x.n, in_ch, Hi, Wi);

        NumVec<T> subs(4 * static_cast<std::size_t>(in_ch) * out_ch);
        for (int dr = 0; dr < 2; ++dr)
            for (int dc = 0; dc < 2; ++dc)
                for (int ci = 0; ci < in_ch; ++ci)
                    for (int co = 0; co < out_ch; ++co)
                        subs[((dr * 2 + dc) * static_cast<std::size_t>(in_ch) + ci) * out_ch + co] =
                            wsub(ci, co, dr, dc);

        parallel_for(static_cast<std::size_t>(x.n), [&](int worker, std::size_t nb, std::size_t ne) {
            auto& gather = ws.col(worker, static_cast<std::size_t>(out_ch) * P);
            auto& dsub = ws.tmp(worker, static_cast<std::size_t>(in_ch) * out_ch);
            for (std::size_t i = nb; i < ne; ++i) {
                const int s = static_cast<int>(i);
                CMapRow<T> X(x.sample(s), in_ch, P);
                T* dwi = ws.dw_slots.data() + i * wsz;
                std::memset(dwi, 0, sizeof(T) * wsz);
                T* dbi = ws.db_slots.data() + i * out_ch;
                std::memset(dbi, 0, sizeof(T) * out_ch);
                if (dx) std::memset(dx->sample(s), 0, sizeof(T) * in_ch * P);

                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        // Gather strided dy into a dense (out_ch x P) matrix.
                        for (int co = 0; co < out_ch; ++co) {
                            const T* plane =
                                dy.sample(s) + static_cast<std::size_t>(co) * dy.plane();
                            T* grow = gather.data() + static_cast<std::size_t>(co) * P;
                            T acc = T(0);
                            for (int yy = 0; yy < Hi; ++yy) {
                                const T* srow =
                                    plane + (static_cast<std::size_t>(2 * yy + dr)) * (Wi * 2);
                                T* gdst = grow + static_cast<std::size_t>(yy) * Wi;
                                for (int xx = 0; xx < Wi; ++xx) {
                                    gdst[xx] = srow[2 * xx + dc];
                                    acc += gdst[xx];
                                }
                            }
                            dbi[co] += acc;
                        }
                        CMapRow<T> dYs(gather.data(), out_ch, P);
                        MapRow<T> dWs(dsub.data(), in_ch, out_ch);
                        dWs.noalias() = X * dYs.transpose();
                        for (int ci = 0; ci < in_ch; ++ci)
                            for (int co = 0; co < out_ch; ++co)
                                dwi[((static_cast<std::size_t>(ci) * out_ch + co) * 2 + dr) * 2 +
                                    dc] += dsub[static_cast<std::size_t>(ci) * out_ch + co];
                        if (dx) {
                            CMapRow<T> Ws(subs.data() + (dr * 2 + dc) *
                                                            static_cast<std::size_t>(in_ch) *
                                                            out_ch,
                                          in_ch, out_ch);
                            MapRow<T> dX(dx->sample(s), in_ch, P);
                            dX.noalias() += Ws * dYs;
                        }
                    }
                }
            }
        });
        for (int i = 0; i < x.n; ++i) {
            const T* dwi = ws.dw_slots.data() + static_cast<std::size_t>(i) * wsz;
            for (std::size_t k = 0; k < wsz; ++k) w.grad[k] += dwi[k];
            const T* dbi = ws.db_slots.data() + static_cast<std::size_t>(i) * out_ch;
            for (int co = 0; co < out_ch; ++co) b.grad[co] += dbi[co];
        }
    }
};

template <typename T>
struct BatchNorm {
    int ch = 0;
    Param<T> gamma, beta;
    NumVec<T> running_mean, running_var;
    std::vector<double> inv_std, batch_mean; // last forward statistics
    Tensor4<T> xhat;
    NetMode last_mode = NetMode::train;

    void configure(const std::string& name, int channels) {
        ch = channels;
        gamma.init(name + ".weight", {channels});
        beta.init(name + ".bias", {channels});
        std::fill(gamma.value.begin(), gamma.value.end(), T(1));
        running_mean.assign(channels, T(0));
        running_var.assign(channels, T(1));
    }

    void forward(Tensor4<T>& x, NetMode mode) { // in place, xhat retained
        last_mode = mode;
        const std::size_t plane = x.plane();
        const std::size_t M = static_cast<std::size_t>(x.n) * plane;
        xhat.ensure(x.n, ch, x.h, x.w);
        inv_std.assign(ch, 0.0);
        batch_mean.assign(ch, 0.0);

        parallel_for(static_cast<std::size_t>(ch), [&](int, std::size_t cb, std::size_t ce) {
            for (std::size_t c = cb; c < ce; ++c) {
                double mean, var;
                if (mode == NetMode::eval) {
                    mean = static_cast<double>(running_mean[c]);
                    var = static_cast<double>(running_var[c]);
                } else {
                    double sum = 0.0, ss = 0.0;
                    for (int i = 0; i < x.n; ++i) {
                        const T* p = x.sample(i) + c * plane;
                        for (std::size_t k = 0; k < plane; ++k) {
                            const double v = static_cast<double>(p[k]);
                            sum += v;
                            ss += v * v;
                        }
                    }
                    mean = sum / static_cast<double>(M);
                    var = std::max(0.0, ss / static_cast<double>(M) - mean * mean);
                    if (mode == NetMode::train) {
                        running_mean[c] = static_cast<T>((1.0 - kBnMomentum) *
                                                             static_cast<double>(running_mean[c]) +
                                                         kBnMomentum * mean);
                        running_var[c] = static_cast<T>((1.0 - kBnMomentum) *
                                                            static_cast<double>(running_var[c]) +
                                                        kBnMomentum * var);
                    }
                }
                const double istd = 1.0 / std::sqrt(var + kBnEps);
                inv_std[c] = istd;
                batch_mean[c] = mean;
                const T g = gamma.value[c];
                const T bt = beta.value[c];
                for (int i = 0; i < x.n; ++i) {
                    T* p = x.sample(i) + c * plane;
                    T* xh = xhat.sample(i) + c * plane;
                    for (std::size_t k = 0; k < plane; ++k) {
                        const T h = static_cast<T>((static_cast<double>(p[k]) - mean) * istd);
                        xh[k] = h;
                        p[k] = g * h + bt;
                    }
                }
            }
        });
    }

    void backward(const Tensor4<T>& dy, Tensor4<T>& dx) {
        const std::size_t plane = dy.plane();
        const std::size_t M = static_cast<std::size_t>(dy.n) * plane;
        dx.ensure(dy.n, ch, dy.h, dy.w);
        const bool batch_stats = last_mode != NetMode::eval;

        parallel_for(static_cast<std::size_t>(ch), [&](int, std::size_t cb, std::size_t ce) {
            for (std::size_t c = cb; c < ce; ++c) {
                double dbeta = 0.0, dgamma = 0.0;
                for (int i = 0; i < dy.n; ++i) {
                    const T* d = dy.sample(i) + c * plane;
                    const T* xh = xhat.sample(i) + c * plane;
                    for (std::size_t k = 0; k < plane; ++k) {
                        dbeta += static_cast<double>(d[k]);
                        dgamma += static_cast<double>(d[k]) * static_cast<double>(xh[k]);
                    }
                }
                gamma.grad[c] += static_cast<T>(dgamma);
                beta.grad[c] += static_cast<T>(dbeta);

                const double g = static_cast<double>(gamma.value[c]);
                const double istd = inv_std[c];
                if (batch_stats) {
                    const double k1 = dbeta / static_cast<double>(M);
                    const double k2 = dgamma / static_cast<double>(M);
                    for (int i = 0; i < dy.n; ++i) {
                        const T* d = dy.sample(i) + c * plane;
                        const T* xh = xhat.sample(i) + c * plane;
                        T* o = dx.sample(i) + c * plane;
                        for (std::size_t k = 0; k < plane; ++k)
                            o[k] = static_cast<T>(
                                g * istd *
                                (static_cast<double>(d[k]) - k1 -
                                 static_cast<double>(xh[k]) * k2));
                    }
                } else {
                    for (int i = 0; i < dy.n; ++i) {
                        const T* d = dy.sample(i) + c * plane;
                        T* o = dx.sample(i) + c * plane;
                        for (std::size_t k = 0; k < plane; ++k)
                            o[k] = static_cast<T>(g * istd * static_cast<double>(d[k]));
                    }
                }
            }
        });
    }
};

template <typename T>
void relu_inplace(Tensor4<T>& x) {
    parallel_for(static_cast<std::size_t>(x.n), [&](int, std::size_t nb, std::size_t ne) {
        T* base = x.data.data();
        const std::size_t stride = x.sample_stride();
        for (std::size_t i = nb; i < ne; ++i) {
            T* p = base + i * stride;
            for (std::size_t k = 0; k < stride; ++k)
                if (p[k] < T(0)) p[k] = T(0);
        }
    });
}

// dx = dy where act > 0 (in place on dy).
template <typename T>
void relu_backward_inplace(const Tensor4<T>& act, Tensor4<T>& dy) {
    parallel_for(static_cast<std::size_t>(act.n), [&](int, std::size_t nb, std::size_t ne) {
        const std::size_t stride = act.sample_stride();
        for (std::size_t i = nb; i < ne; ++i) {
            const T* a = act.data.data() + i * stride;
            T* d = dy.data.data() + i * stride;
            for (std::size_t k = 0; k < stride; ++k)
                if (a[k] <= T(0)) d[k] = T(0);
        }
    });
}

template <typename T>
struct MaxPool2x2 {
    Tensor4<T> out;
    std::vector<std::uint8_t> argmax;

    void forward(const Tensor4<T>& x) {
        const int Ho = x.h / 2, Wo = x.w / 2;
        out.ensure(x.n, x.c, Ho, Wo);
        argmax.resize(out.size());
        parallel_for(static_cast<std::size_t>(x.n), [&](int, std::size_t nb, std::size_t ne) {
            for (std::size_t i = nb; i < ne; ++i) {
                for (int c = 0; c < x.c; ++c) {
                    const T* plane =
                        x.sample(static_cast<int>(i)) + static_cast<std::size_t>(c) * x.plane();
                    T* oplane = out.sample(static_cast<int>(i)) +
                                static_cast<std::size_t>(c) * out.plane();
                    std::uint8_t* amax =
                        argmax.data() +
                        (i * x.c + c) * out.plane();
                    for (int y = 0; y < Ho; ++y) {
                        for (int xx = 0; xx < Wo; ++xx) {
                            T best = plane[(2 * y) * x.w + 2 * xx];
                            std::uint8_t arg = 0;
                            for (std::uint8_t a = 1; a < 4; ++a) {
                                const int dy = a >> 1, dx = a & 1;
                                const T v = plane[(2 * y + dy) * x.w + 2 * xx + dx];
                                if (v > best) {
                                    best = v;
                                    arg = a;
                                }
                            }
                            oplane[y * Wo + xx] = best;
                            amax[y * Wo + xx] = arg;
                        }
                    }
                }
            }
        });
    }

    void backward(const Tensor4<T>& dy, Tensor4<T>& dx, int Hi, int Wi) {
        dx.ensure(dy.n, dy.c, Hi, Wi);
        dx.zero();
        parallel_for(static_cast<std::size_t>(dy.n), [&](int, std::size_t nb, std::size_t ne) {
            for (std::size_t i = nb; i < ne; ++i) {
                for (int c = 0; c < dy.c; ++c) {
                    const T* dplane =
                        dy.sample(static_cast<int>(i)) + static_cast<std::size_t>(c) * dy.plane();
                    T* xplane =
                        dx.sample(static_cast<int>(i)) + static_cast<std::size_t>(c) * dx.plane();
                    const std::uint8_t* amax = argmax.data() + (i * dy.c + c) * dy.plane();
                    for (int y = 0; y < dy.h; ++y) {
                        for (int xx = 0; xx < dy.w; ++xx) {
                            const std::uint8_t a = amax[y * dy.w + xx];
                            xplane[(2 * y + (a >> 1)) * Wi + 2 * xx + (a & 1)] +=
                                dplane[y * dy.w + xx];
                        }
                    }
                }
            }
        });
    }
};

template <typename T>
void concat_channels(const Tensor4<T>& a, const Tensor4<T>& b, Tensor4<T>& out) {
    out.ensure(a.n, a.c + b.c, a.h, a.w);
    parallel_for(static_cast<std::size_t>(a.n), [&](int, std::size_t nb, std::size_t ne) {
        for (std::size_t i = nb; i < ne; ++i) {
            const int s = static_cast<int>(i);
            std::memcpy(out.sample(s), a.sample(s), sizeof(T) * a.sample_stride());
            std::memcpy(out.sample(s) + a.sample_stride(), b.sample(s),
                        sizeof(T) * b.sample_stride());
        }
    });
}

template <typename T>
void split_channels(const Tensor4<T>& dcat, Tensor4<T>& da, Tensor4<T>& db, int ca) {
    da.ensure(dcat.n, ca, dcat.h, dcat.w);
    db.ensure(dcat.n, dcat.c - ca, dcat.h, dcat.w);
    parallel_for(static_cast<std::size_t>(dcat.n), [&](int, std::size_t nb, std::size_t ne) {
        for (std::size_t i = nb; i < ne; ++i) {
            const int s = static_cast<int>(i);
            std::memcpy(da.sample(s), dcat.sample(s), sizeof(T) * da.sample_stride());
            std::memcpy(db.sample(s), dcat.sample(s) + da.sample_stride(),
                        sizeof(T) * db.sample_stride());
        }
    });
}

} // namespace

// ---------------------------------------------------------------------------

template <typename T>
struct UNet<T>::Impl {
    UNetConfig cfg;

    std::vector<Conv3x3<T>> enc_conv;
    std::vector<BatchNorm<T>> enc_bn;
    std::vector<MaxPool2x2<T>> pool;
    std::vector<UpConv2x2<T>> upconv;
    std::vector<BatchNorm<T>> up_bn;
    std::vector<Conv3x3<T>> dec_conv;
    std::vector<BatchNorm<T>> dec_bn;
    Conv3x3<T> final_conv;

    Workspace<T> ws;

    // forward activations
    Tensor4<T> x0;
    std::vector<Tensor4<T>> enc_act;  // post conv/bn/relu, pre pool (skip source)
    std::vector<Tensor4<T>> up_act;   // post upconv/bn/relu
    std::vector<Tensor4<T>> cat;      // concat(up_act, enc_act)
    std::vector<Tensor4<T>> dec_act;  // post dec conv/bn/relu
    Tensor4<T> residual, refined;

    // gradients
    Tensor4<T> d_input;
    Tensor4<T> d_a, d_b, d_c; // rotating general-purpose gradient buffers
    Tensor4<T> d_residual;

    int channels_at(int level) const {
        return level < 0 ? cfg.input_channels
                         : cfg.filters_at(std::min(level, cfg.depth - 1));
    }

    explicit Impl(const UNetConfig& config) : cfg(config) {
        cfg.validate();
        const int D = cfg.depth;
        enc_conv.resize(D);
        enc_bn.resize(D);
        pool.resize(D);
        upconv.resize(D);
        up_bn.resize(D);
        dec_conv.resize(D);
        dec_bn.resize(D);
        enc_act.resize(D);
        up_act.resize(D);
        cat.resize(D);
        dec_act.resize(D);

        for (int k = 0; k < D; ++k) {
            enc_conv[k].configure("enc" + std::to_string(k) + ".conv", channels_at(k - 1),
                                  channels_at(k));
            enc_bn[k].configure("enc" + std::to_string(k) + ".bn", channels_at(k));
        }
        for (int k = D - 1; k >= 0; --k) {
            upconv[k].configure("dec" + std::to_string(k) + ".upconv", channels_at(k + 1),
                                channels_at(k));
            up_bn[k].configure("dec" + std::to_string(k) + ".upbn", channels_at(k));
            dec_conv[k].configure("dec" + std::to_string(k) + ".conv", 2 * channels_at(k),
                                  channels_at(k));
            dec_bn[k].configure("dec" + std::to_string(k) + ".bn", channels_at(k));
        }
        final_conv.configure("head.conv", channels_at(0), 1);
    }

    std::vector<Param<T>*> param_list() {
        std::vector<Param<T>*> out;
        const int D = cfg.depth;
        for (int k = 0; k < D; ++k) {
            out.push_back(&enc_conv[k].w);
            out.push_back(&enc_conv[k].b);
            out.push_back(&enc_bn[k].gamma);
            out.push_back(&enc_bn[k].beta);
        }
        for (int k = D - 1; k >= 0; --k) {
            out.push_back(&upconv[k].w);
            out.push_back(&upconv[k].b);
            out.push_back(&up_bn[k].gamma);
            out.push_back(&up_bn[k].beta);
            out.push_back(&dec_conv[k].w);
            out.push_back(&dec_conv[k].b);
            out.push_back(&dec_bn[k].gamma);
            out.push_back(&dec_bn[k].beta);
        }
        out.push_back(&final_conv.w);
        out.push_back(&final_conv.b);
        return out;
    }

    void init_weights(std::uint64_t seed) {
        Rng rng(seed);
        for (Param<T>* p : param_list()) {
            const bool is_conv_weight = p->shape.size() == 4;
            if (!is_conv_weight) continue; // biases and BN affine keep defaults
            if (p == &final_conv.w) continue;
            // He initialization; transposed kernels use shape [in, out, 2, 2],
            // regular ones [out, in, 3, 3]; fan-in = (channels into the
            // layer) * kernel area either way.
            const bool transposed = p->shape[2] == 2;
            const int fan_in = transposed ? p->shape[0] * 4 : p->shape[1] * 9;
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& v : p->value) v = static_cast<T>(rng.normal() * std);
        }
        // Final conv stays exactly zero: the untrained network is the
        // identity on the DSM channel.
    }

    void forward(const Tensor4<T>& x, NetMode mode) {
        if (x.c != cfg.input_channels)
            throw ConfigError("forward: batch has " + std::to_string(x.c) +
                              " channels, config expects " + std::to_string(cfg.input_channels));
        if (x.h != cfg.tile || x.w != cfg.tile)
            throw ConfigError("forward: batch is " + std::to_string(x.h) + "x" +
                              std::to_string(x.w) + ", config tile is " + std::to_string(cfg.tile));
        const int D = cfg.depth;

        x0.ensure(x.n, x.c, x.h, x.w);
        std::memcpy(x0.data.data(), x.data.data(), sizeof(T) * x.size());

        const Tensor4<T>* cur = &x0;
        for (int k = 0; k < D; ++k) {
            enc_conv[k].forward(*cur, enc_act[k], ws);
            enc_bn[k].forward(enc_act[k], mode);
            relu_inplace(enc_act[k]);
            pool[k].forward(enc_act[k]);
            cur = &pool[k].out;
        }
        for (int k = D - 1; k >= 0; --k) {
            upconv[k].forward(*cur, up_act[k], ws);
            up_bn[k].forward(up_act[k], mode);
            relu_inplace(up_act[k]);
            concat_channels(up_act[k], enc_act[k], cat[k]);
            dec_conv[k].forward(cat[k], dec_act[k], ws);
            dec_bn[k].forward(dec_act[k], mode);
            relu_inplace(dec_act[k]);
            cur = &dec_act[k];
        }
        final_conv.forward(dec_act[0], residual, ws);

        refined.ensure(x.n, 1, x.h, x.w);
        parallel_for(static_cast<std::size_t>(x.n), [&](int, std::size_t nb, std::size_t ne) {
            const std::size_t plane = refined.plane();
            for (std::size_t i = nb; i < ne; ++i) {
                const T* dsm = x0.sample(static_cast<int>(i)); // channel 0
                const T* res = residual.sample(static_cast<int>(i));
                T* out = refined.sample(static_cast<int>(i));
                for (std::size_t k = 0; k < plane; ++k) out[k] = dsm[k] + res[k];
            }
        });
    }

    void backward(const Tensor4<T>& d_refined) {
        const int D = cfg.depth;
        if (d_refined.n != x0.n || d_refined.h != x0.h || d_refined.w != x0.w ||
            d_refined.c != 1)
            throw ConfigError("backward: d_refined shape does not match the last forward batch");

        d_residual.ensure(x0.n, 1, x0.h, x0.w);
        std::memcpy(d_residual.data.data(), d_refined.data.data(),
                    sizeof(T) * d_refined.size());

        d_input.ensure(x0.n, x0.c, x0.h, x0.w);
        d_input.zero();
        // Long residual connection: d(loss)/d(dsm channel) picks up d_refined.
        parallel_for(static_cast<std::size_t>(x0.n), [&](int, std::size_t nb, std::size_t ne) {
            const std::size_t plane = x0.plane();
            for (std::size_t i = nb; i < ne; ++i) {
                T* d = d_input.sample(static_cast<int>(i));
                const T* s = d_refined.sample(static_cast<int>(i));
                for (std::size_t k = 0; k < plane; ++k) d[k] = s[k];
            }
        });

        // Head.
        final_conv.backward(dec_act[0], d_residual, &d_a, ws); // d_a = d(dec_act[0])

        // Decoder, shallow to deep.
        for (int k = 0; k < D; ++k) {
            relu_backward_inplace(dec_act[k], d_a);
            dec_bn[k].backward(d_a, d_b);                  // d_b = d(dec conv out)
            dec_conv[k].backward(cat[k], d_b, &d_a, ws);   // d_a = d(cat)
            split_channels(d_a, d_b, d_c, up_act[k].c);    // d_b = d(up_act), d_c = d(enc_act skip)
            relu_backward_inplace(up_act[k], d_b);
            up_bn[k].backward(d_b, d_a);                   // d_a = d(upconv out)
            const Tensor4<T>& up_in = (k == D - 1) ? pool[D - 1].out : dec_act[k + 1];
            upconv[k].backward(up_in, d_a, &d_a2_storage, ws); // d(up input)

            // Gradient flowing into enc_act[k]: skip path now, pool path
            // joins when the encoder sweep reaches this level.
            d_skip[k] = std::move(d_c);
            d_c = Tensor4<T>();
            if (k == D - 1) {
                d_pool_out = std::move(d_a2_storage);
            } else {
                // d_a2_storage is d(dec_act[k+1]); feed decoder loop above.
                d_a = std::move(d_a2_storage);
            }
            d_a2_storage = Tensor4<T>();
        }

        // Encoder, deep to shallow. d_pool_out holds d(pool[D-1].out).
        Tensor4<T> d_cur = std::move(d_pool_out);
        for (int k = D - 1; k >= 0; --k) {
            pool[k].backward(d_cur, d_a, enc_act[k].h, enc_act[k].w); // d_a = d(enc_act pre-skip)
            // add skip gradient
            parallel_for(static_cast<std::size_t>(d_a.n), [&](int, std::size_t nb, std::size_t ne) {
                const std::size_t stride = d_a.sample_stride();
                for (std::size_t i = nb; i < ne; ++i) {
                    T* dst = d_a.data.data() + i * stride;
                    const T* add = d_skip[k].data.data() + i * stride;
                    for (std::size_t j = 0; j < stride; ++j) dst[j] += add[j];
                }
            });
            relu_backward_inplace(enc_act[k], d_a);
            enc_bn[k].backward(d_a, d_b);
            const Tensor4<T>& conv_in = (k == 0) ? x0 : pool[k - 1].out;
            if (k == 0) {
                enc_conv[k].backward(conv_in, d_b, &d_a, ws);
                // accumulate into d_input (which already holds the long skip)
                parallel_for(static_cast<std::size_t>(d_a.n),
                             [&](int, std::size_t nb, std::size_t ne) {
                                 const std::size_t stride = d_a.sample_stride();
                                 for (std::size_t i = nb; i < ne; ++i) {
                                     T* dst = d_input.data.data() + i * stride;
                                     const T* add = d_a.data.data() + i * stride;
                                     for (std::size_t j = 0; j < stride; ++j) dst[j] += add[j];
                                 }
                             });
            } else {
                enc_conv[k].backward(conv_in, d_b, &d_cur, ws);
            }
        }
    }

    std::vector<Tensor4<T>> d_skip;
    Tensor4<T> d_pool_out, d_a2_storage;
};

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : impl_(std::make_unique<Impl>(config)) {
    impl_->d_skip.resize(config.depth);
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config, std::uint64_t seed) : UNet(config) {
    impl_->init_weights(seed);
}

template <typename T>
UNet<T>::~UNet() = default;
template <typename T>
UNet<T>::UNet(UNet&&) noexcept = default;
template <typename T>
UNet<T>& UNet<T>::operator=(UNet&&) noexcept = default;

template <typename T>
const UNetConfig& UNet<T>::config() const {
    return impl_->cfg;
}

template <typename T>
typename UNet<T>::ForwardResult UNet<T>::forward(const Tensor4<T>& x, NetMode mode) {
    impl_->forward(x, mode);
    return {&impl_->residual, &impl_->refined};
}

template <typename T>
void UNet<T>::backward(const Tensor4<T>& d_refined) {
    impl_->backward(d_refined);
}

template <typename T>
const Tensor4<T>& UNet<T>::input_grad() const {
    return impl_->d_input;
}

template <typename T>
void UNet<T>::zero_grad() {
    for (Param<T>* p : impl_->param_list()) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <typename T>
std::vector<ParamRef<T>> UNet<T>::parameters() {
    std::vector<ParamRef<T>> out;
    for (Param<T>* p : impl_->param_list())
        out.push_back({p->name, p->shape, &p->value, &p->grad});
    return out;
}

template <typename T>
std::vector<BufferRef<T>> UNet<T>::buffers() {
    std::vector<BufferRef<T>> out;
    const int D = impl_->cfg.depth;
    auto add = [&](BatchNorm<T>& bn, const std::string& name) {
        out.push_back({name + ".running_mean", &bn.running_mean});
        out.push_back({name + ".running_var", &bn.running_var});
    };
    for (int k = 0; k < D; ++k) add(impl_->enc_bn[k], "enc" + std::to_string(k) + ".bn");
    for (int k = D - 1; k >= 0; --k) {
        add(impl_->up_bn[k], "dec" + std::to_string(k) + ".upbn");
        add(impl_->dec_bn[k], "dec" + std::to_string(k) + ".bn");
    }
    return out;
}

template <typename T>
std::int64_t UNet<T>::count_parameters(const UNetConfig& config) {
    config.validate();
    auto filters = [&](int level) {
        return level < 0 ? config.input_channels
                         : config.filters_at(std::min(level, config.depth - 1));
    };
    std::int64_t total = 0;
    for (int k = 0; k < config.depth; ++k) {
        const std::int64_t cin = filters(k - 1), cout = filters(k);
        total += cout * cin * 9 + cout; // conv
        total += 2 * cout;              // bn affine
    }
    for (int k = config.depth - 1; k >= 0; --k) {
        const std::int64_t cin = filters(k + 1), cout = filters(k);
        total += cin * cout * 4 + cout; // upconv
        total += 2 * cout;
        total += cout * (2 * cout) * 9 + cout; // decoder conv
        total += 2 * cout;
    }
    total += filters(0) * 9 + 1; // head
    return total;
}

template class UNet<float>;
template class UNet<double>;

} // namespace resdepth
