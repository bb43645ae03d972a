#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "resdepth/error.hpp"

namespace resdepth {

// Architecture hyperparameters of the residual regressor. input_channels:
// 1 = DSM only, 2 = DSM + one view, 3 = DSM + stereo views.
struct UNetConfig {
    int input_channels = 3;
    int depth = 5;
    int base_filters = 64;
    int max_filters = 512;
    int tile = 256;

    int filters_at(int level) const {
        return std::min(base_filters << level, max_filters);
    }

    void validate() const {
        if (input_channels < 1 || input_channels > 3)
            throw ConfigError("input_channels must be 1, 2, or 3");
        if (depth < 1) throw ConfigError("depth must be >= 1");
        if (base_filters < 1) throw ConfigError("base_filters must be >= 1");
        if (max_filters < base_filters)
            throw ConfigError("max_filters must be >= base_filters");
        if (tile < 1) throw ConfigError("tile must be >= 1");
        if (tile % (1 << depth) != 0)
            throw ConfigError("tile " + std::to_string(tile) + " not divisible by 2^depth = " +
                              std::to_string(1 << depth));
    }

    std::string to_json() const;
    static UNetConfig from_json(const std::string& text);
};

} // namespace resdepth
