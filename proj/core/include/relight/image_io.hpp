#pragma once

#include <string>

#include "relight/imaging.hpp"

namespace relight {

// Decodes a PNG or JPEG file (dispatched on magic bytes) into a [0,1] RGB
// image. Grayscale sources are replicated to three channels; alpha is
// dropped. Throws IoError on unreadable/undecodable files.
PixelImage read_image(const std::string& path);

// Encodes an 8-bit RGB PNG. Values are rounded from [0,1]; parent directory
// must exist. Throws IoError on failure.
void write_png(const std::string& path, const PixelImage& img);

// Encodes an 8-bit RGB JPEG (lossy).
void write_jpeg(const std::string& path, const PixelImage& img, int quality = 95);

bool looks_like_image_file(const std::string& filename);

}  // namespace relight
