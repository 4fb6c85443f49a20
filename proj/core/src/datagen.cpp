#include "efc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "efc/dataset.hpp"
#include "efc/errors.hpp"
#include "efc/rng.hpp"

namespace efc {
namespace {

constexpr int kSide = 32;

struct Shape {
    float cx, cy, r, thick, period, phase_x, phase_y;
};

// Soft membership of pixel (x,y) in the class pattern, in [0,1].
float pattern(int cls, float x, float y, const Shape& s) {
    const float dx = x - s.cx;
    const float dy = y - s.cy;
    const float dist = std::sqrt(dx * dx + dy * dy);
    const float box = std::max(std::fabs(dx), std::fabs(dy));
    auto soft = [](float signed_dist) {  // >0 inside
        return std::clamp(0.5f + signed_dist / 1.5f, 0.0f, 1.0f);
    };
    switch (cls) {
        case 0:  // filled disk
            return soft(s.r - dist);
        case 1:  // ring
            return soft(s.thick - std::fabs(dist - s.r));
        case 2:  // filled square
            return soft(0.8f * s.r - box);
        case 3:  // square frame
            return soft(s.thick - std::fabs(box - 0.8f * s.r));
        case 4: {  // plus
            const float arm = soft(s.r - std::fabs(dx)) * soft(s.thick - std::fabs(dy));
            const float arm2 = soft(s.r - std::fabs(dy)) * soft(s.thick - std::fabs(dx));
            return std::max(arm, arm2);
        }
        case 5: {  // diagonal cross
            const float d1 = std::fabs(dx - dy) * 0.70710678f;
            const float d2 = std::fabs(dx + dy) * 0.70710678f;
            const float inside = soft(s.r - box);
            return inside * std::max(soft(s.thick - d1), soft(s.thick - d2));
        }
        case 6: {  // horizontal stripes in a square window
            const float m = std::fmod(y + s.phase_y + 64.0f, s.period);
            const float on = m < 0.5f * s.period ? 1.0f : 0.0f;
            return on * soft(s.r - box);
        }
        case 7: {  // vertical stripes
            const float m = std::fmod(x + s.phase_x + 64.0f, s.period);
            const float on = m < 0.5f * s.period ? 1.0f : 0.0f;
            return on * soft(s.r - box);
        }
        case 8: {  // checkerboard
            const int ix = static_cast<int>(std::floor((x + s.phase_x + 64.0f) / s.period));
            const int iy = static_cast<int>(std::floor((y + s.phase_y + 64.0f) / s.period));
            const float on = ((ix + iy) & 1) ? 1.0f : 0.0f;
            return on * soft(s.r - box);
        }
        case 9: {  // upward triangle
            const float top = s.cy - s.r;
            const float h = y - top;
            if (h < 0.0f || h > 1.8f * s.r) return 0.0f;
            return soft(0.62f * h - std::fabs(dx));
        }
        default:
            throw config_error("pattern class out of range");
    }
}

void render(int cls, Rng& rng, uint8_t* rgb) {
    Shape s;
    s.cx = 16.0f + rng.uniform(-4.0f, 4.0f);
    s.cy = 16.0f + rng.uniform(-4.0f, 4.0f);
    s.r = rng.uniform(8.0f, 13.0f);
    s.thick = rng.uniform(2.2f, 3.6f);
    s.period = rng.uniform(5.5f, 10.0f);
    s.phase_x = rng.uniform(0.0f, 8.0f);
    s.phase_y = rng.uniform(0.0f, 8.0f);

    // overlapping color ranges: contrast varies from strong to faint
    float bg[3], fg[3];
    for (int c = 0; c < 3; ++c) bg[c] = rng.uniform(20.0f, 140.0f);
    for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(105.0f, 245.0f);
    const float noise_sigma = rng.uniform(10.0f, 30.0f);
    const float speckle = rng.uniform(0.0f, 0.03f);

    // low-frequency luminance gradient across the background
    const float gx = rng.uniform(-1.5f, 1.5f);
    const float gy = rng.uniform(-1.5f, 1.5f);

    for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
            const float m = pattern(cls, static_cast<float>(x), static_cast<float>(y), s);
            const float grad = gx * (x - 16.0f) + gy * (y - 16.0f);
            const bool spk = rng.uniform01() < speckle;
            for (int c = 0; c < 3; ++c) {
                float v = bg[c] + grad + m * (fg[c] - bg[c]) + rng.normal(0.0f, noise_sigma);
                if (spk) v = rng.uniform(0.0f, 255.0f);
                rgb[c * kSide * kSide + y * kSide + x] =
                    static_cast<uint8_t>(std::clamp(v, 0.0f, 255.0f));
            }
        }
    }
}

}  // namespace

void write_synthetic_cifar10(const std::string& path, int64_t count, uint64_t seed) {
    if (count <= 0) throw config_error("dataset size must be positive");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");

    Rng rng(seed);
    std::vector<uint8_t> record(Cifar10::kRecordBytes);
    for (int64_t i = 0; i < count; ++i) {
        const int cls = static_cast<int>(i % 10);
        record[0] = static_cast<uint8_t>(cls);
        render(cls, rng, record.data() + 1);
        f.write(reinterpret_cast<const char*>(record.data()), Cifar10::kRecordBytes);
    }
    if (!f) throw io_error("short write to " + path);
}

}  // namespace efc
