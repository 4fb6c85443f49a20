#include "efc/dataset.hpp"

#include <cstring>
#include <fstream>

#include "efc/errors.hpp"

namespace efc {

Cifar10 load_cifar10_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw io_error("cannot open dataset file " + path);
    const std::streamoff size = f.tellg();
    if (size % Cifar10::kRecordBytes != 0)
        throw data_error("dataset file " + path + " is truncated: " + std::to_string(size) +
                         " bytes is not a multiple of 3073");
    f.seekg(0);

    Cifar10 ds;
    ds.count = size / Cifar10::kRecordBytes;
    ds.labels.resize(static_cast<size_t>(ds.count));
    ds.pixels.resize(static_cast<size_t>(ds.count * Cifar10::kImageBytes));
    std::vector<uint8_t> record(Cifar10::kRecordBytes);
    for (int64_t i = 0; i < ds.count; ++i) {
        f.read(reinterpret_cast<char*>(record.data()), Cifar10::kRecordBytes);
        if (!f) throw data_error("dataset file " + path + " ended mid-record");
        if (record[0] > 9)
            throw data_error("record " + std::to_string(i) + " has label byte " +
                             std::to_string(record[0]) + " > 9");
        ds.labels[static_cast<size_t>(i)] = record[0];
        std::memcpy(ds.pixels.data() + i * Cifar10::kImageBytes, record.data() + 1,
                    Cifar10::kImageBytes);
    }
    return ds;
}

void write_image(const Cifar10& ds, int64_t idx, const NormStats& norm, float* dst) {
    if (idx < 0 || idx >= ds.count) throw config_error("image index out of range");
    const uint8_t* src = ds.pixels.data() + idx * Cifar10::kImageBytes;
    constexpr int64_t plane = Cifar10::kSide * Cifar10::kSide;
    for (int c = 0; c < 3; ++c) {
        const float mean = norm.mean[static_cast<size_t>(c)];
        const float inv_std = 1.0f / norm.stddev[static_cast<size_t>(c)];
        const uint8_t* sp = src + c * plane;
        float* dp = dst + c * plane;
        for (int64_t i = 0; i < plane; ++i)
            dp[i] = (static_cast<float>(sp[i]) * (1.0f / 255.0f) - mean) * inv_std;
    }
}

void write_image_augmented(const Cifar10& ds, int64_t idx, const NormStats& norm, Rng& rng,
                           float* dst) {
    constexpr int side = Cifar10::kSide;
    constexpr int64_t plane = static_cast<int64_t>(side) * side;
    float base[3 * plane];
    write_image(ds, idx, norm, base);

    const bool flip = rng.uniform01() < 0.5f;
    const int dx = static_cast<int>(rng.next_u32() % 9) - 4;  // [-4,4]
    const int dy = static_cast<int>(rng.next_u32() % 9) - 4;

    for (int c = 0; c < 3; ++c) {
        const float* sp = base + c * plane;
        float* dp = dst + c * plane;
        for (int y = 0; y < side; ++y) {
            const int sy = y + dy;
            for (int x = 0; x < side; ++x) {
                int sx = x + dx;
                if (flip) sx = side - 1 - sx;
                float v = 0.0f;  // normalized zero = mean color
                if (sy >= 0 && sy < side && sx >= 0 && sx < side) v = sp[sy * side + sx];
                dp[y * side + x] = v;
            }
        }
    }
}

Batch make_batch(const Cifar10& ds, const std::vector<int64_t>& indices, const NormStats& norm,
                 bool augment, Rng& rng) {
    if (indices.empty()) throw config_error("make_batch: empty index list");
    const int64_t b = static_cast<int64_t>(indices.size());
    Batch batch;
    batch.images = Tensor({b, 3, Cifar10::kSide, Cifar10::kSide});
    batch.labels.resize(static_cast<size_t>(b));
    constexpr int64_t stride = 3 * Cifar10::kSide * Cifar10::kSide;
    for (int64_t i = 0; i < b; ++i) {
        const int64_t idx = indices[static_cast<size_t>(i)];
        if (augment)
            write_image_augmented(ds, idx, norm, rng, batch.images.data() + i * stride);
        else
            write_image(ds, idx, norm, batch.images.data() + i * stride);
        batch.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(idx)];
    }
    return batch;
}

}  // namespace efc
