#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "appledet/data/image.hpp"

namespace appledet::data {

/// Binary netpbm: P6 (RGB) and P5 (gray), maxval 255. Errors carry the byte
/// offset where parsing failed.
Image decode_netpbm(std::string_view bytes);
std::string encode_netpbm(const Image& image);

Image read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const Image& image);

}  // namespace appledet::data
