#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "appledet/boxloss/box.hpp"

namespace appledet::data {

/// One object per line, "class cx cy w h", coordinates normalized to [0, 1].
/// Only classes 0 (apple) and 1 (block) are accepted.
std::vector<boxloss::Box> parse_labels(std::string_view text);
/// Six decimal places per coordinate.
std::string format_labels(const std::vector<boxloss::Box>& normalized);

std::vector<boxloss::Box> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<boxloss::Box>& normalized);

boxloss::Box to_pixels(const boxloss::Box& normalized, int width, int height);
boxloss::Box to_normalized(const boxloss::Box& pixels, int width, int height);

}  // namespace appledet::data
