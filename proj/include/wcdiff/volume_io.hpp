#pragma once

#include <string>

#include "wcdiff/volume.hpp"

namespace wcdiff {

// On-disk volume container: magic "VXV1", u32 LE depth/height/width, one unit
// byte (0 = SUV, 1 = normalized, 2 = arbitrary), then float32 LE voxels in
// row-major order with width fastest.
Volume read_volume(const std::string& path);
void write_volume(const std::string& path, const Volume& vol);

}  // namespace wcdiff
