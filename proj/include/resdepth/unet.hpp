#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "resdepth/aligned.hpp"
#include "resdepth/tensor.hpp"
#include "resdepth/unet_config.hpp"

namespace resdepth {

enum class NetMode {
    train,              // batch statistics, running stats updated
    train_frozen_stats, // batch statistics, running stats untouched
    eval                // running statistics
};

template <typename T>
struct ParamRef {
    std::string name;
    std::vector<int> shape;
    NumVec<T>* value;
    NumVec<T>* grad;
};

template <typename T>
struct BufferRef {
    std::string name;
    NumVec<T>* value;
};

// Encoder-decoder residual regressor. Encoder levels are
// [3x3 conv -> BN -> ReLU -> 2x2 max pool]; the decoder mirrors them with
// 2x2 transposed convolutions (BN + ReLU) in place of pooling and
// concatenates the encoder feature of equal resolution before each decoder
// conv. A final 3x3 convolution emits a 1-channel residual that is added
// to the input DSM channel.
//
// One instance owns its weights and activation workspace; run one
// forward/backward at a time per instance.
template <typename T>
class UNet {
public:
    explicit UNet(const UNetConfig& config);           // zero-filled weights
    UNet(const UNetConfig& config, std::uint64_t seed); // variance-scaled init
    ~UNet();
    UNet(UNet&&) noexcept;
    UNet& operator=(UNet&&) noexcept;
    UNet(const UNet&) = delete;
    UNet& operator=(const UNet&) = delete;

    const UNetConfig& config() const;

    struct ForwardResult {
        const Tensor4<T>* residual;
        const Tensor4<T>* refined;
    };
    ForwardResult forward(const Tensor4<T>& x, NetMode mode);

    // Gradients of a scalar loss given d(loss)/d(refined). Parameter
    // gradients accumulate until zero_grad(); the input gradient is
    // rewritten each call.
    void backward(const Tensor4<T>& d_refined);
    const Tensor4<T>& input_grad() const;

    void zero_grad();

    std::vector<ParamRef<T>> parameters();
    std::vector<BufferRef<T>> buffers(); // batch-norm running statistics

    static std::int64_t count_parameters(const UNetConfig& config);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

extern template class UNet<float>;
extern template class UNet<double>;

} // namespace resdepth
