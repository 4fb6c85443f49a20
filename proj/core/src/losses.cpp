#include "efc/losses.hpp"

#include <cmath>

#include "efc/ops.hpp"

namespace efc {
namespace {

struct RowView {
    int64_t batch, classes;
};

RowView rows_of(const Tensor& logits, const char* who) {
    if (logits.ndim() == 1) return {1, logits.dim(0)};
    if (logits.ndim() == 2) return {logits.dim(0), logits.dim(1)};
    throw config_error(std::string(who) + " expects (K) or (B,K) logits");
}

// log softmax of one row, stable
void log_softmax_row(const float* lp, int64_t k, float* out) {
    float m = lp[0];
    for (int64_t i = 1; i < k; ++i) m = std::max(m, lp[i]);
    float sum = 0.0f;
    for (int64_t i = 0; i < k; ++i) sum += std::exp(lp[i] - m);
    const float lse = m + std::log(sum);
    for (int64_t i = 0; i < k; ++i) out[i] = lp[i] - lse;
}

}  // namespace

Tensor mse(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape() != b.shape())
        throw config_error("mse shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int64_t n = a.numel();
    std::vector<float> sq(static_cast<size_t>(n));
    const float* ap = a.data();
    const float* bp = b.data();
    for (int64_t i = 0; i < n; ++i) {
        const float d = ap[i] - bp[i];
        sq[static_cast<size_t>(i)] = d * d;
    }
    Tensor out = Tensor::scalar(pairwise_sum(sq.data(), n) / static_cast<float>(n));
    out.ensure_finite("mse");

    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor ac = a, bc = b, y = out;
        tape->record([ac, bc, y, n]() mutable {
            const float scale = 2.0f * y.grad()[0] / static_cast<float>(n);
            const float* ap = ac.data();
            const float* bp = bc.data();
            if (ac.requires_grad()) {
                float* ga = ac.grad();
                for (int64_t i = 0; i < n; ++i) ga[i] += scale * (ap[i] - bp[i]);
            }
            if (bc.requires_grad()) {
                float* gb = bc.grad();
                for (int64_t i = 0; i < n; ++i) gb[i] -= scale * (ap[i] - bp[i]);
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tape* tape) {
    const RowView rv = rows_of(logits, "cross_entropy");
    if (static_cast<int64_t>(labels.size()) != rv.batch)
        throw config_error("cross_entropy: label count != batch size");
    for (int lbl : labels) {
        if (lbl < 0 || lbl >= rv.classes)
            throw data_error("cross_entropy: label " + std::to_string(lbl) + " outside [0," +
                             std::to_string(rv.classes) + ")");
    }

    auto logq = std::make_shared<std::vector<float>>(static_cast<size_t>(rv.batch * rv.classes));
    std::vector<float> nll(static_cast<size_t>(rv.batch));
    for (int64_t b = 0; b < rv.batch; ++b) {
        log_softmax_row(logits.data() + b * rv.classes, rv.classes, logq->data() + b * rv.classes);
        nll[static_cast<size_t>(b)] = -(*logq)[static_cast<size_t>(b * rv.classes + labels[static_cast<size_t>(b)])];
    }
    Tensor out = Tensor::scalar(pairwise_sum(nll.data(), rv.batch) / static_cast<float>(rv.batch));
    out.ensure_finite("cross_entropy");

    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor lc = logits, y = out;
        auto lbls = labels;
        tape->record([lc, y, logq, lbls, rv]() mutable {
            const float g = y.grad()[0] / static_cast<float>(rv.batch);
            float* gl = lc.grad();
            for (int64_t b = 0; b < rv.batch; ++b) {
                const float* lq = logq->data() + b * rv.classes;
                float* row = gl + b * rv.classes;
                for (int64_t k = 0; k < rv.classes; ++k) {
                    const float soft = std::exp(lq[k]);
                    row[k] += g * (soft - (k == lbls[static_cast<size_t>(b)] ? 1.0f : 0.0f));
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy_smoothed(const Tensor& logits, const std::vector<int>& labels, float eps,
                              Tape* tape) {
    if (eps < 0.0f || eps >= 1.0f) throw config_error("label smoothing must be in [0,1)");
    const RowView rv = rows_of(logits, "cross_entropy_smoothed");
    if (static_cast<int64_t>(labels.size()) != rv.batch)
        throw config_error("cross_entropy_smoothed: label count != batch size");
    for (int lbl : labels) {
        if (lbl < 0 || lbl >= rv.classes)
            throw data_error("cross_entropy_smoothed: label " + std::to_string(lbl) +
                             " outside [0," + std::to_string(rv.classes) + ")");
    }
    const float off = eps / static_cast<float>(rv.classes);
    const float on = 1.0f - eps + off;

    auto logq = std::make_shared<std::vector<float>>(static_cast<size_t>(rv.batch * rv.classes));
    std::vector<float> nll(static_cast<size_t>(rv.batch));
    for (int64_t b = 0; b < rv.batch; ++b) {
        log_softmax_row(logits.data() + b * rv.classes, rv.classes, logq->data() + b * rv.classes);
        float s = 0.0f;
        for (int64_t k = 0; k < rv.classes; ++k) {
            const float target = k == labels[static_cast<size_t>(b)] ? on : off;
            s -= target * (*logq)[static_cast<size_t>(b * rv.classes + k)];
        }
        nll[static_cast<size_t>(b)] = s;
    }
    Tensor out = Tensor::scalar(pairwise_sum(nll.data(), rv.batch) / static_cast<float>(rv.batch));
    out.ensure_finite("cross_entropy_smoothed");

    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor lc = logits, y = out;
        auto lbls = labels;
        tape->record([lc, y, logq, lbls, rv, on, off]() mutable {
            const float g = y.grad()[0] / static_cast<float>(rv.batch);
            float* gl = lc.grad();
            for (int64_t b = 0; b < rv.batch; ++b) {
                const float* lq = logq->data() + b * rv.classes;
                float* row = gl + b * rv.classes;
                for (int64_t k = 0; k < rv.classes; ++k) {
                    const float target = k == lbls[static_cast<size_t>(b)] ? on : off;
                    row[k] += g * (std::exp(lq[k]) - target);
                }
            }
        });
    }
    return out;
}

Tensor kl_teacher_student(const Tensor& teacher_logits, const Tensor& student_logits,
                          float temperature, Tape* tape) {
    if (!(temperature > 0.0f)) throw config_error("kl_teacher_student: temperature must be > 0");
    if (teacher_logits.shape() != student_logits.shape())
        throw config_error("kl_teacher_student: shape mismatch");
    const RowView rv = rows_of(student_logits, "kl_teacher_student");

    auto logp = std::make_shared<std::vector<float>>(static_cast<size_t>(rv.batch * rv.classes));
    auto logq = std::make_shared<std::vector<float>>(static_cast<size_t>(rv.batch * rv.classes));
    std::vector<float> scaled(static_cast<size_t>(rv.classes));
    std::vector<float> rowkl(static_cast<size_t>(rv.batch));
    const float inv_t = 1.0f / temperature;
    for (int64_t b = 0; b < rv.batch; ++b) {
        const float* tl = teacher_logits.data() + b * rv.classes;
        const float* sl = student_logits.data() + b * rv.classes;
        for (int64_t k = 0; k < rv.classes; ++k) scaled[static_cast<size_t>(k)] = tl[k] * inv_t;
        log_softmax_row(scaled.data(), rv.classes, logp->data() + b * rv.classes);
        for (int64_t k = 0; k < rv.classes; ++k) scaled[static_cast<size_t>(k)] = sl[k] * inv_t;
        log_softmax_row(scaled.data(), rv.classes, logq->data() + b * rv.classes);
        float s = 0.0f;
        for (int64_t k = 0; k < rv.classes; ++k) {
            const float lp = (*logp)[static_cast<size_t>(b * rv.classes + k)];
            const float lq = (*logq)[static_cast<size_t>(b * rv.classes + k)];
            s += std::exp(lp) * (lp - lq);
        }
        rowkl[static_cast<size_t>(b)] = s;
    }
    Tensor out = Tensor::scalar(pairwise_sum(rowkl.data(), rv.batch) / static_cast<float>(rv.batch));
    out.ensure_finite("kl_teacher_student");

    if (tape && student_logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor sc = student_logits, y = out;
        tape->record([sc, y, logp, logq, rv, inv_t]() mutable {
            const float g = y.grad()[0] * inv_t / static_cast<float>(rv.batch);
            float* gs = sc.grad();
            for (int64_t b = 0; b < rv.batch; ++b) {
                float* row = gs + b * rv.classes;
                for (int64_t k = 0; k < rv.classes; ++k) {
                    const float p = std::exp((*logp)[static_cast<size_t>(b * rv.classes + k)]);
                    const float q = std::exp((*logq)[static_cast<size_t>(b * rv.classes + k)]);
                    row[k] += g * (q - p);
                }
            }
        });
    }
    return out;
}

}  // namespace efc
