#pragma once

#include "efc/bitstream.hpp"
#include "efc/model.hpp"
#include "efc/range_coder.hpp"

namespace efc {

struct CompressResult {
    CompressedFeature cf;
    int64_t clamped = 0;  // out-of-support symbols clamped during encoding
};

// image (3,H,W) normalized -> encoder -> round -> range code. Requires frozen
// tables. The header digest is the bundle's model_digest().
CompressResult compress(const ModelBundle& bundle, const Tensor& image);

// Inverse: exact integer latent (M,h,w) as a float tensor. Throws
// format_error on malformed input and config_error("incompatible model")
// on digest mismatch.
Tensor decompress(const ModelBundle& bundle, const CompressedFeature& cf);

// Shared pieces, used by the batched evaluator and the server:
// round + clamp to the per-channel support, flattening to channel-major
// symbols; returns clamp count.
int64_t latent_to_symbols(const Tensor& latent_single, const CdfTableSet& tables,
                          std::vector<int32_t>& symbols);
// channel index per symbol position for a (C,h,w) latent
std::vector<int32_t> symbol_channels(int64_t channels, int64_t hw);
Tensor symbols_to_latent(const std::vector<int32_t>& symbols, int64_t channels, int64_t h, int64_t w);

}  // namespace efc
