#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "resdepth/error.hpp"

namespace resdepth {

inline constexpr double kDefaultNodata = -9999.0;

// Placement of a raster in planar (UTM-like) coordinates. origin_x/origin_y
// is the upper-left corner of the upper-left cell; rows run north to south.
struct GridHeader {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell_size = 1.0;
    int rows = 0;
    int cols = 0;

    bool same_grid(const GridHeader& other) const {
        return origin_x == other.origin_x && origin_y == other.origin_y &&
               cell_size == other.cell_size && rows == other.rows && cols == other.cols;
    }

    // Planar coordinates of a cell center.
    double cell_x(int col) const { return origin_x + (col + 0.5) * cell_size; }
    double cell_y(int row) const { return origin_y - (row + 0.5) * cell_size; }

    std::int64_t cell_count() const {
        return static_cast<std::int64_t>(rows) * cols;
    }
};

// Georeferenced grid of 64-bit reals with a nodata sentinel. Every stored
// value is either finite or exactly the sentinel.
class Raster2D {
public:
    Raster2D() = default;
    Raster2D(GridHeader header, double fill, double nodata = kDefaultNodata);
    Raster2D(GridHeader header, std::vector<double> values, double nodata = kDefaultNodata);

    const GridHeader& header() const { return header_; }
    int rows() const { return header_.rows; }
    int cols() const { return header_.cols; }
    double cell_size() const { return header_.cell_size; }
    double nodata() const { return nodata_; }

    double at(int row, int col) const { return values_[idx(row, col)]; }
    double& at(int row, int col) { return values_[idx(row, col)]; }
    bool is_nodata(int row, int col) const { return values_[idx(row, col)] == nodata_; }
    void set_nodata_at(int row, int col) { values_[idx(row, col)] = nodata_; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool in_bounds(int row, int col) const {
        return row >= 0 && row < header_.rows && col >= 0 && col < header_.cols;
    }

    std::int64_t valid_count() const;

    // Throws StructuralError if any value is non-finite and not the sentinel.
    void validate() const;

private:
    std::size_t idx(int row, int col) const {
        return static_cast<std::size_t>(row) * header_.cols + col;
    }

    GridHeader header_;
    std::vector<double> values_;
    double nodata_ = kDefaultNodata;
};

// Boolean annotation sharing the grid header of the raster it describes.
class Mask {
public:
    Mask() = default;
    Mask(GridHeader header, bool fill = false);

    const GridHeader& header() const { return header_; }
    int rows() const { return header_.rows; }
    int cols() const { return header_.cols; }

    bool at(int row, int col) const { return values_[idx(row, col)] != 0; }
    void set(int row, int col, bool v) { values_[idx(row, col)] = v ? 1 : 0; }

    const std::vector<std::uint8_t>& values() const { return values_; }

    std::int64_t count_true() const;

private:
    std::size_t idx(int row, int col) const {
        return static_cast<std::size_t>(row) * header_.cols + col;
    }

    GridHeader header_;
    std::vector<std::uint8_t> values_;
};

// ASCII grid interchange (six "KEY value" header lines, then rows of
// space-separated decimal values, north to south). Round-trips bit-exactly.
Raster2D read_ascii_grid(const std::string& path);
void write_ascii_grid(const Raster2D& raster, const std::string& path);

// Masks ride the same format with 0/1 cell values.
Mask read_mask(const std::string& path);
void write_mask(const Mask& mask, const std::string& path);

Mask mask_from_raster(const Raster2D& raster);
Raster2D mask_to_raster(const Mask& mask);

// True at cell c iff any input-true cell lies within Chebyshev distance
// radius of c (square structuring element).
Mask dilate_mask(const Mask& mask, int radius);

// size x size window copy with the origin shifted accordingly.
Raster2D extract_tile(const Raster2D& raster, int row0, int col0, int size);

// Contiguous disjoint column ranges covering [0, cols); widths differ by at
// most one, remainder going to the leftmost stripes. Ranges are [begin, end).
struct ColRange {
    int begin = 0;
    int end = 0;
    int width() const { return end - begin; }
};
std::vector<ColRange> stripe_split(int rows, int cols, int k);

} // namespace resdepth
