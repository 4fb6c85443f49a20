#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "efc/rng.hpp"
#include "efc/tensor.hpp"

namespace efc {

// CIFAR-10 binary format: records of 3073 bytes, one label byte (0..9)
// followed by 3072 bytes of channel-major 32x32 RGB.
struct Cifar10 {
    static constexpr int64_t kRecordBytes = 3073;
    static constexpr int64_t kImageBytes = 3072;
    static constexpr int kSide = 32;

    int64_t count = 0;
    std::vector<uint8_t> labels;  // count
    std::vector<uint8_t> pixels;  // count * 3072
};

// Throws data_error on a truncated file or a label byte > 9.
Cifar10 load_cifar10_binary(const std::string& path);

// Per-channel normalization constants on the [0,1] pixel scale.
struct NormStats {
    std::array<float, 3> mean{0.4914f, 0.4822f, 0.4465f};
    std::array<float, 3> stddev{0.2470f, 0.2435f, 0.2616f};
};

// Writes the normalized (3,32,32) image of record `idx` into dst.
void write_image(const Cifar10& ds, int64_t idx, const NormStats& norm, float* dst);

// Random horizontal flip + 4-pixel pad-and-crop. Padding is zero in
// normalized space (the per-channel mean color).
void write_image_augmented(const Cifar10& ds, int64_t idx, const NormStats& norm, Rng& rng,
                           float* dst);

struct Batch {
    Tensor images;            // (B,3,32,32), normalized
    std::vector<int> labels;  // B values in [0,K)
};

Batch make_batch(const Cifar10& ds, const std::vector<int64_t>& indices, const NormStats& norm,
                 bool augment, Rng& rng);

}  // namespace efc
