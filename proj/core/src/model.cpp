#include "efc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "efc/md5.hpp"
#include "efc/ops.hpp"
#include "efc/rng.hpp"

namespace efc {
namespace {

int teacher_mid_width(const ArchConfig& a) { return std::max(a.dec_width / 2, 8); }

float softplus_inv(float y) { return std::log(std::expm1(y)); }

Tensor he_conv(Rng& rng, int64_t cout, int64_t cin, int64_t k) {
    Tensor w({cout, cin, k, k});
    const float std = std::sqrt(2.0f / static_cast<float>(cin * k * k));
    for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.normal(0.0f, std);
    return w;
}

void add_conv(ParamSet& ps, Rng& rng, const std::string& prefix, int64_t cout, int64_t cin,
              int64_t k) {
    ps.add(prefix + ".w", he_conv(rng, cout, cin, k));
    ps.add(prefix + ".b", Tensor::zeros({cout}));
}

void add_block(ParamSet& ps, Rng& rng, const std::string& prefix, int64_t ch) {
    add_conv(ps, rng, prefix + ".conv1", ch, ch, 3);
    // zero-init second conv: blocks start as the identity, which keeps
    // activation variance flat through deep stacks
    ps.add(prefix + ".conv2.w", Tensor::zeros({ch, ch, 3, 3}));
    ps.add(prefix + ".conv2.b", Tensor::zeros({ch}));
}

void add_gdn(ParamSet& ps, const std::string& prefix, int64_t ch) {
    // effective beta ~= 1, gamma ~= 0.1 on the diagonal
    Tensor beta = Tensor::full({ch}, softplus_inv(1.0f));
    Tensor gamma = Tensor::full({ch, ch}, softplus_inv(1e-4f));
    for (int64_t i = 0; i < ch; ++i) gamma.data()[i * ch + i] = softplus_inv(0.1f);
    ps.add(prefix + ".beta_raw", std::move(beta));
    ps.add(prefix + ".gamma_raw", std::move(gamma));
}

void register_prior(ParamSet& ps, FactorizedPrior& prior) {
    for (size_t i = 0; i < prior.raw_h.size(); ++i) {
        ps.add("prior.h" + std::to_string(i), prior.raw_h[i]);
        ps.add("prior.b" + std::to_string(i), prior.raw_b[i]);
        if (i < prior.raw_a.size()) ps.add("prior.a" + std::to_string(i), prior.raw_a[i]);
    }
}

void add_tail(ParamSet& ps, Rng& rng, const std::string& prefix, const ArchConfig& a) {
    const int64_t cd = a.dec_width;
    add_block(ps, rng, prefix + ".block0", cd);
    add_block(ps, rng, prefix + ".block1", cd);
    add_conv(ps, rng, prefix + ".down", cd, cd, 3);
    add_block(ps, rng, prefix + ".block2", cd);
    add_block(ps, rng, prefix + ".block3", cd);
    Tensor hw({static_cast<int64_t>(a.classes), cd});
    const float std = std::sqrt(2.0f / static_cast<float>(cd));
    for (int64_t i = 0; i < hw.numel(); ++i) hw.data()[i] = rng.normal(0.0f, std);
    ps.add(prefix + ".head.w", std::move(hw));
    ps.add(prefix + ".head.b", Tensor::zeros({a.classes}));
}

const Tensor& P(const ParamSet& ps, const std::string& name) { return ps.find(name).tensor; }

Tensor block_forward(const ParamSet& ps, const std::string& prefix, const Tensor& x, Tape* tape) {
    return residual_block(x, P(ps, prefix + ".conv1.w"), P(ps, prefix + ".conv1.b"),
                          P(ps, prefix + ".conv2.w"), P(ps, prefix + ".conv2.b"), tape);
}

Tensor gdn_forward(const ParamSet& ps, const std::string& prefix, const Tensor& x, Tape* tape) {
    Tensor beta = add_const(softplus(P(ps, prefix + ".beta_raw"), tape), 1e-6f, tape);
    Tensor gamma = softplus(P(ps, prefix + ".gamma_raw"), tape);
    return gdn(x, beta, gamma, tape);
}

Tensor tail_forward(const ParamSet& ps, const std::string& prefix, const Tensor& feature,
                    Tape* tape) {
    Tensor h = block_forward(ps, prefix + ".block0", feature, tape);
    h = block_forward(ps, prefix + ".block1", h, tape);
    h = conv2d(h, P(ps, prefix + ".down.w"), P(ps, prefix + ".down.b"), 2, 1, tape);
    h = block_forward(ps, prefix + ".block2", h, tape);
    h = block_forward(ps, prefix + ".block3", h, tape);
    return dense_head(h, P(ps, prefix + ".head.w"), P(ps, prefix + ".head.b"), tape);
}

void append_block_layers(std::vector<LayerInfo>& ls, int64_t ch) {
    ls.push_back({LayerKind::conv, ch, ch, 3, 1, 1});
    ls.push_back({LayerKind::activation});
    ls.push_back({LayerKind::conv, ch, ch, 3, 1, 1});
    ls.push_back({LayerKind::add});
}

void append_tail_layers(std::vector<LayerInfo>& ls, const ArchConfig& a) {
    const int64_t cd = a.dec_width;
    append_block_layers(ls, cd);
    append_block_layers(ls, cd);
    ls.push_back({LayerKind::conv, cd, cd, 3, 2, 1});
    append_block_layers(ls, cd);
    append_block_layers(ls, cd);
    ls.push_back({LayerKind::dense, cd, a.classes});
}

}  // namespace

ModelBundle build_bundle(const ArchConfig& arch, uint64_t seed) {
    arch.validate();
    ModelBundle b;
    b.arch = arch;
    b.seed = seed;
    Rng rng(seed);

    const int64_t ce = arch.enc_width;
    const int64_t m = arch.bottleneck_ch;
    const int64_t cd = arch.dec_width;

    if (arch.encoder_kind == EncoderKind::proposed) {
        add_conv(b.params, rng, "encoder.patch", ce, 3, arch.patch_size);
        for (int i = 0; i < arch.num_res_blocks; ++i)
            add_block(b.params, rng, "encoder.block" + std::to_string(i), ce);
        add_conv(b.params, rng, "encoder.out", m, ce, 1);
    } else {
        add_conv(b.params, rng, "encoder.conv1", ce, 3, 5);
        add_gdn(b.params, "encoder.gdn1", ce);
        add_conv(b.params, rng, "encoder.conv2", m, ce, 5);
        add_gdn(b.params, "encoder.gdn2", m);
    }

    b.prior = FactorizedPrior(m, {3, 3, 3}, 10.0f, rng);
    register_prior(b.params, b.prior);

    add_conv(b.params, rng, "decoder.in", cd, m, 1);
    add_block(b.params, rng, "decoder.block0", cd);
    add_block(b.params, rng, "decoder.block1", cd);
    if (arch.patch_size == 8) add_conv(b.params, rng, "decoder.up", cd, cd, 3);
    add_block(b.params, rng, "decoder.block2", cd);

    add_tail(b.params, rng, "classifier", arch);
    refresh_digest(b);
    return b;
}

TeacherModel build_teacher(const ArchConfig& arch, uint64_t seed) {
    arch.validate();
    TeacherModel t;
    t.arch = arch;
    t.seed = seed;
    Rng rng(seed);
    const int64_t mid = teacher_mid_width(arch);
    const int64_t cd = arch.dec_width;
    add_conv(t.params, rng, "stem.conv1", mid, 3, 3);
    add_block(t.params, rng, "stem.block0", mid);
    add_conv(t.params, rng, "stem.conv2", cd, mid, 3);
    add_block(t.params, rng, "stem.block1", cd);
    add_tail(t.params, rng, "tail", arch);
    return t;
}

void init_classifier_from_teacher(ModelBundle& bundle, const TeacherModel& teacher) {
    for (const auto& p : teacher.params.all()) {
        if (p.name.rfind("tail.", 0) != 0) continue;
        auto& dst = bundle.params.find("classifier." + p.name.substr(5));
        if (dst.tensor.shape() != p.tensor.shape())
            throw config_error("teacher tail / classifier shape mismatch at " + p.name);
        std::copy(p.tensor.data(), p.tensor.data() + p.tensor.numel(), dst.tensor.data());
    }
    refresh_digest(bundle);
}

Tensor residual_block(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                      const Tensor& b2, Tape* tape) {
    if (w1.dim(0) != w1.dim(1) || w1.dim(1) != x.dim(x.ndim() == 4 ? 1 : 0))
        throw config_error("residual_block must preserve the channel count");
    Tensor h = conv2d(x, w1, b1, 1, 1, tape);
    h = gelu(h, tape);
    h = conv2d(h, w2, b2, 1, 1, tape);
    return add(x, h, tape);
}

Tensor encoder_forward(const ModelBundle& bundle, const Tensor& images, Tape* tape) {
    const auto& ps = bundle.params;
    const auto& a = bundle.arch;
    if (a.encoder_kind == EncoderKind::proposed) {
        Tensor h = conv2d(images, P(ps, "encoder.patch.w"), P(ps, "encoder.patch.b"), a.patch_size,
                          0, tape);
        for (int i = 0; i < a.num_res_blocks; ++i)
            h = block_forward(ps, "encoder.block" + std::to_string(i), h, tape);
        return conv2d(h, P(ps, "encoder.out.w"), P(ps, "encoder.out.b"), 1, 0, tape);
    }
    Tensor h = conv2d(images, P(ps, "encoder.conv1.w"), P(ps, "encoder.conv1.b"), 2, 2, tape);
    h = gdn_forward(ps, "encoder.gdn1", h, tape);
    h = conv2d(h, P(ps, "encoder.conv2.w"), P(ps, "encoder.conv2.b"), 2, 2, tape);
    return gdn_forward(ps, "encoder.gdn2", h, tape);
}

Tensor decoder_forward(const ModelBundle& bundle, const Tensor& y_hat, Tape* tape) {
    const auto& ps = bundle.params;
    Tensor h = conv2d(y_hat, P(ps, "decoder.in.w"), P(ps, "decoder.in.b"), 1, 0, tape);
    h = block_forward(ps, "decoder.block0", h, tape);
    h = block_forward(ps, "decoder.block1", h, tape);
    if (bundle.arch.patch_size == 8) {
        h = upsample2x_nearest(h, tape);
        h = conv2d(h, P(ps, "decoder.up.w"), P(ps, "decoder.up.b"), 1, 1, tape);
    }
    return block_forward(ps, "decoder.block2", h, tape);
}

Tensor classifier_forward(const ModelBundle& bundle, const Tensor& feature, Tape* tape) {
    return tail_forward(bundle.params, "classifier", feature, tape);
}

TeacherOutput teacher_forward(const TeacherModel& teacher, const Tensor& images, Tape* tape) {
    Tensor stem = teacher_stem_forward(teacher, images, tape);
    Tensor logits = tail_forward(teacher.params, "tail", stem, tape);
    return {stem, logits};
}

Tensor teacher_stem_forward(const TeacherModel& teacher, const Tensor& images, Tape* tape) {
    const auto& ps = teacher.params;
    Tensor h = conv2d(images, P(ps, "stem.conv1.w"), P(ps, "stem.conv1.b"), 2, 1, tape);
    h = block_forward(ps, "stem.block0", h, tape);
    h = conv2d(h, P(ps, "stem.conv2.w"), P(ps, "stem.conv2.b"), 2, 1, tape);
    return block_forward(ps, "stem.block1", h, tape);
}

std::vector<LayerInfo> encoder_layers(const ArchConfig& a) {
    std::vector<LayerInfo> ls;
    const int64_t ce = a.enc_width;
    const int64_t m = a.bottleneck_ch;
    if (a.encoder_kind == EncoderKind::proposed) {
        ls.push_back({LayerKind::conv, 3, ce, a.patch_size, a.patch_size, 0});
        for (int i = 0; i < a.num_res_blocks; ++i) append_block_layers(ls, ce);
        ls.push_back({LayerKind::conv, ce, m, 1, 1, 0});
    } else {
        ls.push_back({LayerKind::conv, 3, ce, 5, 2, 2});
        ls.push_back({LayerKind::gdn});
        ls.push_back({LayerKind::conv, ce, m, 5, 2, 2});
        ls.push_back({LayerKind::gdn});
    }
    return ls;
}

std::vector<LayerInfo> decoder_layers(const ArchConfig& a) {
    std::vector<LayerInfo> ls;
    const int64_t cd = a.dec_width;
    ls.push_back({LayerKind::conv, a.bottleneck_ch, cd, 1, 1, 0});
    append_block_layers(ls, cd);
    append_block_layers(ls, cd);
    if (a.patch_size == 8) {
        ls.push_back({LayerKind::upsample2x});
        ls.push_back({LayerKind::conv, cd, cd, 3, 1, 1});
    }
    append_block_layers(ls, cd);
    return ls;
}

std::vector<LayerInfo> classifier_layers(const ArchConfig& a) {
    std::vector<LayerInfo> ls;
    append_tail_layers(ls, a);
    return ls;
}

int64_t encoder_macs(const ArchConfig& a) {
    return count_macs(encoder_layers(a), {3, a.input_h, a.input_w});
}

int64_t decoder_macs(const ArchConfig& a) {
    return count_macs(decoder_layers(a), {a.bottleneck_ch, a.latent_h(), a.latent_w()});
}

int64_t classifier_macs(const ArchConfig& a) {
    return count_macs(classifier_layers(a), {a.dec_width, a.feature_h(), a.feature_w()});
}

std::array<uint8_t, 16> model_digest(const ModelBundle& bundle) {
    Md5 md5;
    const std::string cfg = bundle.arch.to_json().dump();
    md5.update(cfg.data(), cfg.size());

    std::vector<const LayerParam*> sorted;
    sorted.reserve(bundle.params.size());
    for (const auto& p : bundle.params.all()) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(),
              [](const LayerParam* a, const LayerParam* b) { return a->name < b->name; });

    std::vector<uint8_t> le;
    for (const LayerParam* p : sorted) {
        md5.update(p->name.data(), p->name.size());
        const int64_t n = p->tensor.numel();
        le.resize(static_cast<size_t>(n) * 4);
        const float* v = p->tensor.data();
        for (int64_t i = 0; i < n; ++i) {
            uint32_t bits;
            std::memcpy(&bits, &v[i], 4);
            le[static_cast<size_t>(4 * i)] = static_cast<uint8_t>(bits);
            le[static_cast<size_t>(4 * i + 1)] = static_cast<uint8_t>(bits >> 8);
            le[static_cast<size_t>(4 * i + 2)] = static_cast<uint8_t>(bits >> 16);
            le[static_cast<size_t>(4 * i + 3)] = static_cast<uint8_t>(bits >> 24);
        }
        md5.update(le.data(), le.size());
    }
    return md5.finish();
}

}  // namespace efc
