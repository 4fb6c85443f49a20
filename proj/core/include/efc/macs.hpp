#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "efc/errors.hpp"

namespace efc {

// Architecture-only complexity model. Costs depend on layer kinds and shapes,
// never on weight values:
//   conv:       k*k*C_in*C_out*H'*W'
//   dense:      K*C (after global pooling)
//   gdn:        C*C*H*W plus one MAC each for the per-element sqrt and divide
//   activation: 1 MAC per element
//   upsample2x / add: 0 MACs (copies), upsample doubles H,W
enum class LayerKind { conv, dense, gdn, activation, upsample2x, add };

struct LayerInfo {
    LayerKind kind = LayerKind::conv;
    int64_t c_in = 0;
    int64_t c_out = 0;
    int64_t kernel = 0;
    int64_t stride = 1;
    int64_t padding = 0;
};

struct InputShape {
    int64_t c = 0, h = 0, w = 0;
};

int64_t count_macs(const std::vector<LayerInfo>& layers, InputShape input);

inline int64_t flops_from_macs(int64_t macs) { return 2 * macs; }

}  // namespace efc
