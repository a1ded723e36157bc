#pragma once

// Binary netpbm rasters: P6 (RGB) and P5 (grey), maxval up to 65535.
//
// Files are written with the minimal header "P6\n<w> <h>\n<maxval>\n" (or P5).
// Samples wider than one byte (maxval > 255) are stored big-endian, most
// significant byte first. Readers accept '#' comments and arbitrary whitespace
// in the header, then exactly one whitespace byte before the payload.

#include <hobj/types.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hobj {

struct Raster {
    Index width = 0;
    Index height = 0;
    int channels = 1;  // 1 (P5) or 3 (P6)
    int maxval = 255;  // 1..65535
    std::vector<std::uint16_t> samples; // row-major, channels interleaved

    std::size_t sample_count() const { return static_cast<std::size_t>(width * height * channels); }
    bool operator==(const Raster&) const = default;
};

std::string encode_netpbm(const Raster& r);
/// Throws ParseError with the byte offset of the first malformed or missing byte.
Raster decode_netpbm(std::string_view bytes);

void write_netpbm(const std::string& path, const Raster& r);
/// Throws IoError if the file cannot be read, ParseError if it is malformed.
Raster read_netpbm(const std::string& path);

/// Planar [C x H x W] values in [0, 1] -> samples round(v * maxval), clamped.
Raster quantize(const Eigen::ArrayXd& planar, int channels, Index height, Index width, int maxval = 255);
/// Samples / maxval in planar [C x H x W] order.
Eigen::ArrayXd dequantize(const Raster& r);

} // namespace hobj
