#include "resdepth/raster.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace resdepth {

namespace {

void check_header(const GridHeader& h) {
    if (h.rows < 1 || h.cols < 1)
        throw StructuralError("grid must have rows >= 1 and cols >= 1, got " +
                              std::to_string(h.rows) + "x" + std::to_string(h.cols));
    if (!(h.cell_size > 0.0))
        throw StructuralError("cell_size must be > 0, got " + std::to_string(h.cell_size));
}

// Shortest round-trip decimal form (std::to_chars general).
std::string format_value(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_value(const char* begin, const char* end, int line_no) {
    double v = 0.0;
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse value '" +
                         std::string(begin, end) + "'");
    return v;
}

} // namespace

Raster2D::Raster2D(GridHeader header, double fill, double nodata)
    : header_(header), nodata_(nodata) {
    check_header(header_);
    values_.assign(static_cast<std::size_t>(header_.cell_count()), fill);
}

Raster2D::Raster2D(GridHeader header, std::vector<double> values, double nodata)
    : header_(header), values_(std::move(values)), nodata_(nodata) {
    check_header(header_);
    if (values_.size() != static_cast<std::size_t>(header_.cell_count()))
        throw StructuralError("value count " + std::to_string(values_.size()) +
                              " does not match grid " + std::to_string(header_.rows) + "x" +
                              std::to_string(header_.cols));
}

std::int64_t Raster2D::valid_count() const {
    std::int64_t n = 0;
    for (double v : values_)
        if (v != nodata_) ++n;
    return n;
}

void Raster2D::validate() const {
    for (double v : values_) {
        if (!std::isfinite(v) && v != nodata_)
            throw StructuralError("raster holds a non-finite value that is not the nodata sentinel");
    }
}

Mask::Mask(GridHeader header, bool fill) : header_(header) {
    check_header(header_);
    values_.assign(static_cast<std::size_t>(header_.cell_count()), fill ? 1 : 0);
}

std::int64_t Mask::count_true() const {
    std::int64_t n = 0;
    for (auto v : values_)
        if (v) ++n;
    return n;
}

Raster2D read_ascii_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");

    struct HeaderField {
        const char* key;
        double value;
    };
    HeaderField fields[6] = {{"NCOLS", 0},     {"NROWS", 0},    {"XLLCORNER", 0},
                             {"YLLCORNER", 0}, {"CELLSIZE", 0}, {"NODATA_VALUE", 0}};

    std::string line;
    int line_no = 0;
    for (auto& field : fields) {
        if (!std::getline(in, line))
            throw ParseError("line " + std::to_string(line_no + 1) + ": missing header line (" +
                             field.key + ")");
        ++line_no;
        const auto space = line.find(' ');
        if (space == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'KEY value', got '" +
                             line + "'");
        std::string key = line.substr(0, space);
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return std::toupper(c); });
        if (key != field.key)
            throw ParseError("line " + std::to_string(line_no) + ": expected header key " +
                             field.key + ", got '" + line.substr(0, space) + "'");
        field.value = parse_value(line.c_str() + space + 1, line.c_str() + line.size(), line_no);
    }

    const double ncols_f = fields[0].value;
    const double nrows_f = fields[1].value;
    if (ncols_f < 1 || nrows_f < 1 || ncols_f != std::floor(ncols_f) || nrows_f != std::floor(nrows_f))
        throw ParseError("NCOLS/NROWS must be positive integers, got " +
                         format_value(ncols_f) + "/" + format_value(nrows_f));

    GridHeader h;
    h.cols = static_cast<int>(ncols_f);
    h.rows = static_cast<int>(nrows_f);
    h.cell_size = fields[4].value;
    if (!(h.cell_size > 0.0))
        throw ParseError("CELLSIZE must be > 0, got " + format_value(h.cell_size));
    h.origin_x = fields[2].value;
    h.origin_y = fields[3].value + h.rows * h.cell_size;
    const double nodata = fields[5].value;

    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(h.cell_count()));
    for (int r = 0; r < h.rows; ++r) {
        if (!std::getline(in, line))
            throw StructuralError("expected " + std::to_string(h.rows) + " value rows, file ends after " +
                                  std::to_string(r));
        ++line_no;
        const char* p = line.c_str();
        const char* end = p + line.size();
        int count = 0;
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            const char* tok = p;
            while (p < end && *p != ' ') ++p;
            if (count >= h.cols)
                throw StructuralError("line " + std::to_string(line_no) + ": more than " +
                                      std::to_string(h.cols) + " values in row");
            values.push_back(parse_value(tok, p, line_no));
            ++count;
        }
        if (count != h.cols)
            throw StructuralError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(h.cols) + " values, got " + std::to_string(count));
    }

    Raster2D raster(h, std::move(values), nodata);
    raster.validate();
    return raster;
}

void write_ascii_grid(const Raster2D& raster, const std::string& path) {
    raster.validate();
    std::ofstream out(path, std::ios::binary); // '\n' line ends on all platforms
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    const GridHeader& h = raster.header();
    out << "NCOLS " << h.cols << '\n';
    out << "NROWS " << h.rows << '\n';
    out << "XLLCORNER " << format_value(h.origin_x) << '\n';
    out << "YLLCORNER " << format_value(h.origin_y - h.rows * h.cell_size) << '\n';
    out << "CELLSIZE " << format_value(h.cell_size) << '\n';
    out << "NODATA_VALUE " << format_value(raster.nodata()) << '\n';

    std::string row;
    for (int r = 0; r < h.rows; ++r) {
        row.clear();
        for (int c = 0; c < h.cols; ++c) {
            if (c) row.push_back(' ');
            row += format_value(raster.at(r, c));
        }
        row.push_back('\n');
        out << row;
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
}

Mask read_mask(const std::string& path) {
    const Raster2D raster = read_ascii_grid(path);
    return mask_from_raster(raster);
}

void write_mask(const Mask& mask, const std::string& path) {
    write_ascii_grid(mask_to_raster(mask), path);
}

Mask mask_from_raster(const Raster2D& raster) {
    Mask mask(raster.header());
    for (int r = 0; r < raster.rows(); ++r)
        for (int c = 0; c < raster.cols(); ++c)
            mask.set(r, c, !raster.is_nodata(r, c) && raster.at(r, c) != 0.0);
    return mask;
}

Raster2D mask_to_raster(const Mask& mask) {
    Raster2D raster(mask.header(), 0.0);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c)
            if (mask.at(r, c)) raster.at(r, c) = 1.0;
    return raster;
}

Mask dilate_mask(const Mask& mask, int radius) {
    if (radius < 0) throw BoundsError("dilation radius must be >= 0");
    if (radius == 0) return mask;
    const int rows = mask.rows();
    const int cols = mask.cols();

    // Chebyshev balls are separable: horizontal window-or, then vertical.
    Mask horiz(mask.header());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            bool any = false;
            const int lo = std::max(0, c - radius);
            const int hi = std::min(cols - 1, c + radius);
            for (int cc = lo; cc <= hi && !any; ++cc) any = mask.at(r, cc);
            horiz.set(r, c, any);
        }
    }
    Mask out(mask.header());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            bool any = false;
            const int lo = std::max(0, r - radius);
            const int hi = std::min(rows - 1, r + radius);
            for (int rr = lo; rr <= hi && !any; ++rr) any = horiz.at(rr, c);
            out.set(r, c, any);
        }
    }
    return out;
}

Raster2D extract_tile(const Raster2D& raster, int row0, int col0, int size) {
    if (size < 1) throw BoundsError("tile size must be >= 1");
    if (row0 < 0 || col0 < 0 || row0 + size > raster.rows() || col0 + size > raster.cols()) {
        std::ostringstream msg;
        msg << "tile [" << row0 << ".." << row0 + size << ") x [" << col0 << ".." << col0 + size
            << ") exceeds raster extent " << raster.rows() << "x" << raster.cols();
        throw BoundsError(msg.str());
    }
    GridHeader h = raster.header();
    h.origin_x += col0 * h.cell_size;
    h.origin_y -= row0 * h.cell_size;
    h.rows = size;
    h.cols = size;
    Raster2D tile(h, 0.0, raster.nodata());
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            tile.at(r, c) = raster.at(row0 + r, col0 + c);
    return tile;
}

std::vector<ColRange> stripe_split(int rows, int cols, int k) {
    (void)rows;
    if (k < 1) throw BoundsError("stripe count must be >= 1");
    if (cols < k)
        throw BoundsError("cannot split " + std::to_string(cols) + " columns into " +
                          std::to_string(k) + " stripes");
    std::vector<ColRange> stripes;
    stripes.reserve(static_cast<std::size_t>(k));
    const int base = cols / k;
    const int rem = cols % k;
    int begin = 0;
    for (int i = 0; i < k; ++i) {
        const int width = base + (i < rem ? 1 : 0);
        stripes.push_back({begin, begin + width});
        begin += width;
    }
    return stripes;
}

} // namespace resdepth
