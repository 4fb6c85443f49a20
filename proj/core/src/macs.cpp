#include "efc/macs.hpp"

namespace efc {

int64_t count_macs(const std::vector<LayerInfo>& layers, InputShape s) {
    int64_t macs = 0;
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerKind::conv: {
                if (l.c_in != s.c)
                    throw config_error("count_macs: conv expects C_in=" + std::to_string(s.c) +
                                       ", layer says " + std::to_string(l.c_in));
                const int64_t ho = (s.h + 2 * l.padding - l.kernel) / l.stride + 1;
                const int64_t wo = (s.w + 2 * l.padding - l.kernel) / l.stride + 1;
                if (ho <= 0 || wo <= 0) throw config_error("count_macs: conv output would be empty");
                macs += l.kernel * l.kernel * l.c_in * l.c_out * ho * wo;
                s = {l.c_out, ho, wo};
                break;
            }
            case LayerKind::dense: {
                macs += l.c_out * s.c;
                s = {l.c_out, 1, 1};
                break;
            }
            case LayerKind::gdn: {
                macs += s.c * s.c * s.h * s.w + 2 * s.c * s.h * s.w;
                break;
            }
            case LayerKind::activation: {
                macs += s.c * s.h * s.w;
                break;
            }
            case LayerKind::upsample2x: {
                s.h *= 2;
                s.w *= 2;
                break;
            }
            case LayerKind::add: {
                break;
            }
            default:
                throw config_error("count_macs: unknown layer kind");
        }
    }
    return macs;
}

}  // namespace efc
