#pragma once

#include <string>
#include <utility>
#include <vector>

#include "resdepth/normalization.hpp"
#include "resdepth/unet.hpp"
#include "resdepth/unet_config.hpp"

namespace resdepth {

// Versioned binary container for a trained model: architecture config,
// learnable weights, batch-norm running statistics, normalization stats,
// and (optionally) optimizer state. File layout ("RDCK", version 1):
//
//   bytes 0..3   magic "RDCK"
//   u32  LE      format version (1)
//   u64  LE      JSON header length in bytes
//   ...          JSON header: config, norm stats, tensor directory
//                [{"name", "kind": "param"|"buffer"|"opt", "size"}]
//   ...          tensor payloads, float64 little-endian, directory order
struct Checkpoint {
    UNetConfig config;
    NormStats stats;
    std::vector<std::pair<std::string, std::vector<double>>> params;
    std::vector<std::pair<std::string, std::vector<double>>> buffers;
    std::vector<std::pair<std::string, std::vector<double>>> optimizer;

    template <typename T>
    static Checkpoint capture(UNet<T>& net, const NormStats& stats);

    // Copies weights and running stats into an existing net (shapes must match).
    template <typename T>
    void restore(UNet<T>& net) const;

    template <typename T>
    UNet<T> build() const {
        UNet<T> net(config);
        restore(net);
        return net;
    }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace resdepth
