#include "efc/eval.hpp"

#include <algorithm>

#include "efc/parallel.hpp"

namespace efc {

EvalResult evaluate(const ModelBundle& bundle, const Cifar10& dataset, const NormStats& norm,
                    int64_t limit) {
    if (!bundle.has_tables()) throw config_error("evaluate: bundle has no frozen tables");
    const int64_t n = limit > 0 ? std::min(limit, dataset.count) : dataset.count;
    if (n == 0) throw config_error("evaluate: empty dataset");
    const auto& arch = bundle.arch;
    const int64_t pixels = static_cast<int64_t>(arch.input_h) * arch.input_w;
    const int64_t lat_hw = static_cast<int64_t>(arch.latent_h()) * arch.latent_w();
    const int64_t m = arch.bottleneck_ch;
    const auto chan_of_symbol = symbol_channels(m, lat_hw);

    EvalResult res;
    res.records.resize(static_cast<size_t>(n));

    constexpr int64_t kChunk = 128;
    std::vector<int64_t> clamp_counts(static_cast<size_t>(n), 0);
    for (int64_t base = 0; base < n; base += kChunk) {
        const int64_t bs = std::min(kChunk, n - base);

        Tensor images({bs, 3, arch.input_h, arch.input_w});
        for (int64_t i = 0; i < bs; ++i)
            write_image(dataset, base + i, norm, images.data() + i * 3 * pixels);

        const Tensor latents = encoder_forward(bundle, images, nullptr);

        // per image: round/clamp -> range code -> decode back
        Tensor decoded({bs, m, arch.latent_h(), arch.latent_w()});
        std::vector<int64_t> bits(static_cast<size_t>(bs));
        parallel_for(bs, [&](int64_t i0, int64_t i1) {
            std::vector<int32_t> symbols;
            for (int64_t i = i0; i < i1; ++i) {
                Tensor one = Tensor::from({m, arch.latent_h(), arch.latent_w()},
                                          std::vector<float>(latents.data() + i * m * lat_hw,
                                                             latents.data() + (i + 1) * m * lat_hw));
                clamp_counts[static_cast<size_t>(base + i)] =
                    latent_to_symbols(one, *bundle.tables, symbols);
                const auto payload = range_encode(symbols, *bundle.tables, chan_of_symbol);
                bits[static_cast<size_t>(i)] =
                    static_cast<int64_t>(CompressedFeature::kHeaderSize + payload.size()) * 8;
                const auto back =
                    range_decode(payload, m * lat_hw, *bundle.tables, chan_of_symbol);
                float* dst = decoded.data() + i * m * lat_hw;
                for (size_t k = 0; k < back.size(); ++k) dst[k] = static_cast<float>(back[k]);
            }
        });

        const Tensor feature = decoder_forward(bundle, decoded, nullptr);
        const Tensor logits = classifier_forward(bundle, feature, nullptr);

        for (int64_t i = 0; i < bs; ++i) {
            const float* row = logits.data() + i * arch.classes;
            int arg = 0;
            for (int k = 1; k < arch.classes; ++k) {
                if (row[k] > row[arg]) arg = k;
            }
            auto& rec = res.records[static_cast<size_t>(base + i)];
            rec.index = base + i;
            rec.label = dataset.labels[static_cast<size_t>(base + i)];
            rec.predicted = arg;
            rec.bits = bits[static_cast<size_t>(i)];
        }
    }

    double bpp_sum = 0;
    int64_t correct = 0;
    for (const auto& r : res.records) {
        bpp_sum += static_cast<double>(r.bits) / static_cast<double>(pixels);
        correct += r.predicted == r.label ? 1 : 0;
    }
    for (int64_t c : clamp_counts) res.clamped_symbols += c;
    res.bpp = bpp_sum / static_cast<double>(n);
    res.top1 = static_cast<double>(correct) / static_cast<double>(n);
    return res;
}

}  // namespace efc
