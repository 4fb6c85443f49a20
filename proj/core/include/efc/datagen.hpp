#pragma once

#include <cstdint>
#include <string>

namespace efc {

// Writes a synthetic ten-class dataset in the CIFAR-10 binary format
// (3073-byte records). Classes are geometric patterns (disk, ring, square,
// frame, plus, cross, stripes, checker, triangle) with randomized colors,
// position, scale and pixel noise, so labels depend on spatial structure
// rather than color statistics. Classes are balanced (label = i mod 10)
// and the stream is fully determined by the seed.
void write_synthetic_cifar10(const std::string& path, int64_t count, uint64_t seed);

}  // namespace efc
