#pragma once

#include <vector>

#include "efc/codec.hpp"
#include "efc/dataset.hpp"

namespace efc {

struct EvalRecord {
    int64_t index = 0;
    int label = 0;
    int predicted = 0;
    int64_t bits = 0;  // full CompressedFeature size (header + payload)
};

struct EvalResult {
    double bpp = 0;   // mean over images of bits / (H*W)
    double top1 = 0;  // fraction in [0,1]
    int64_t clamped_symbols = 0;
    std::vector<EvalRecord> records;
};

// Rounds + range-codes every image through the real bitstream, decodes it
// back and classifies. Deterministic; requires frozen tables.
// limit > 0 evaluates only the first `limit` images.
EvalResult evaluate(const ModelBundle& bundle, const Cifar10& dataset, const NormStats& norm,
                    int64_t limit = 0);

}  // namespace efc
