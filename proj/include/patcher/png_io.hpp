#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace patcher {

// 8-bit image buffer, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageU8 {
    int64_t width = 0;
    int64_t height = 0;
    int64_t channels = 0;
    std::vector<uint8_t> pixels;

    uint8_t at(int64_t y, int64_t x, int64_t c) const {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
};

// Decodes an 8-bit PNG; palette/gray-alpha/RGBA inputs are expanded and
// alpha is dropped. Throws DataError on unreadable files.
ImageU8 read_png(const std::filesystem::path& path);

// Encodes 1- or 3-channel 8-bit PNG.
void write_png(const std::filesystem::path& path, const ImageU8& image);

}  // namespace patcher
