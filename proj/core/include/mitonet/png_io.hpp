#pragma once

#include <filesystem>

#include "mitonet/image.hpp"

namespace mitonet {

// Decodes an 8-bit PNG. Grayscale is expanded to RGB; images with an alpha
// channel or 16-bit samples raise UnsupportedFormat.
Patch read_png(const std::filesystem::path& path);

// Writes an 8-bit RGB PNG with fixed compression settings and no timestamp
// chunk, so identical patches produce identical bytes.
void write_png(const std::filesystem::path& path, const Patch& patch);

}  // namespace mitonet
