#include "efc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "efc/checkpoint.hpp"
#include "efc/codec.hpp"
#include "efc/eval.hpp"
#include "efc/threads.hpp"

namespace efc {
namespace {

uint64_t steady_ns() {
    return static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                     std::chrono::steady_clock::now().time_since_epoch())
                                     .count());
}

// ----- cubic / piecewise-linear accuracy-vs-rate models -----

struct CurveFit {
    FitMethod method;
    // cubic: coefficients in t = r - center
    double center = 0;
    std::array<double, 4> coef{};
    // linear: the curve's own points
    const std::vector<CurvePoint>* pts = nullptr;

    double eval(double r) const {
        if (method == FitMethod::cubic) {
            const double t = r - center;
            return ((coef[3] * t + coef[2]) * t + coef[1]) * t + coef[0];
        }
        const auto& p = *pts;
        if (r <= p.front().bpp) return p.front().top1_pct;
        if (r >= p.back().bpp) return p.back().top1_pct;
        size_t hi = 1;
        while (p[hi].bpp < r) ++hi;
        const auto& a = p[hi - 1];
        const auto& b = p[hi];
        const double t = (r - a.bpp) / (b.bpp - a.bpp);
        return a.top1_pct + t * (b.top1_pct - a.top1_pct);
    }
};

// least-squares cubic via normal equations (exact interpolation at 4 points)
CurveFit fit_cubic(const RateAccuracyCurve& c) {
    const auto& p = c.points;
    double center = 0;
    for (const auto& q : p) center += q.bpp;
    center /= static_cast<double>(p.size());

    double m[4][5] = {};
    for (const auto& q : p) {
        const double t = q.bpp - center;
        double powt[7];
        powt[0] = 1;
        for (int i = 1; i < 7; ++i) powt[i] = powt[i - 1] * t;
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) m[i][j] += powt[i + j];
            m[i][4] += powt[i] * q.top1_pct;
        }
    }
    // gaussian elimination with partial pivoting
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
        if (std::fabs(m[piv][col]) < 1e-12)
            throw config_error("delta_accuracy: degenerate cubic fit (collinear rates)");
        if (piv != col)
            for (int j = 0; j < 5; ++j) std::swap(m[piv][j], m[col][j]);
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int j = col; j < 5; ++j) m[r][j] -= f * m[col][j];
        }
    }
    CurveFit fit;
    fit.method = FitMethod::cubic;
    fit.center = center;
    for (int i = 0; i < 4; ++i) fit.coef[static_cast<size_t>(i)] = m[i][4] / m[i][i];
    return fit;
}

CurveFit make_fit(const RateAccuracyCurve& c, FitMethod method) {
    if (method == FitMethod::cubic) {
        if (c.points.size() < 4)
            throw config_error("delta_accuracy: cubic method needs >= 4 points per curve, '" +
                               c.label + "' has " + std::to_string(c.points.size()));
        return fit_cubic(c);
    }
    if (c.points.size() < 2)
        throw config_error("delta_accuracy: linear method needs >= 2 points per curve");
    CurveFit fit;
    fit.method = FitMethod::linear;
    fit.pts = &c.points;
    return fit;
}

}  // namespace

LatencyStats measure_latency(const std::function<void(int64_t)>& fn, int64_t warmup, int64_t n,
                             ClockFn clock) {
    if (n < 1) throw config_error("latency measurement needs n >= 1");
    if (warmup < 0) throw config_error("warmup must be >= 0");
    if (!clock) clock = steady_ns;

    std::vector<double> us(static_cast<size_t>(n));
    for (int64_t i = 0; i < warmup + n; ++i) {
        const uint64_t t0 = clock();
        fn(i);
        const uint64_t t1 = clock();
        if (i >= warmup) us[static_cast<size_t>(i - warmup)] = static_cast<double>(t1 - t0) / 1e3;
    }

    LatencyStats s;
    s.n = n;
    s.warmup = warmup;
    double sum = 0;
    for (double v : us) sum += v;
    s.mean_us = sum / static_cast<double>(n);
    double sq = 0;
    for (double v : us) sq += (v - s.mean_us) * (v - s.mean_us);
    s.stddev_us = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;

    std::vector<double> sorted = us;
    std::sort(sorted.begin(), sorted.end());
    s.median_us = n % 2 == 1 ? sorted[static_cast<size_t>(n / 2)]
                             : 0.5 * (sorted[static_cast<size_t>(n / 2 - 1)] +
                                      sorted[static_cast<size_t>(n / 2)]);
    const int64_t rank = static_cast<int64_t>(std::ceil(0.95 * static_cast<double>(n))) - 1;
    s.p95_us = sorted[static_cast<size_t>(std::clamp<int64_t>(rank, 0, n - 1))];
    return s;
}

LatencyStats measure_encoding_latency(const ModelBundle& bundle, const Cifar10& dataset,
                                      const NormStats& norm, int64_t warmup, int64_t n) {
    if (!bundle.has_tables()) throw config_error("latency: bundle has no frozen tables");
    if (dataset.count == 0) throw config_error("latency: empty dataset");

    // image prep is not encoder work; build the inputs up front
    const int64_t distinct = std::min<int64_t>(dataset.count, warmup + n);
    std::vector<Tensor> images;
    images.reserve(static_cast<size_t>(distinct));
    for (int64_t i = 0; i < distinct; ++i) {
        Tensor img({3, Cifar10::kSide, Cifar10::kSide});
        write_image(dataset, i, norm, img.data());
        images.push_back(std::move(img));
    }

    SingleThreadGuard single_thread;
    return measure_latency(
        [&](int64_t i) { compress(bundle, images[static_cast<size_t>(i % distinct)]); }, warmup,
        n);
}

RateAccuracyCurve make_curve(std::string label, std::vector<CurvePoint> points) {
    if (points.size() < 2)
        throw config_error("curve '" + label + "' needs >= 2 points, got " +
                           std::to_string(points.size()));
    std::sort(points.begin(), points.end(),
              [](const CurvePoint& a, const CurvePoint& b) { return a.bpp < b.bpp; });
    for (size_t i = 1; i < points.size(); ++i) {
        if (points[i].bpp - points[i - 1].bpp <= 1e-6)
            throw config_error("curve '" + label + "' has duplicate bpp " +
                               std::to_string(points[i].bpp));
    }
    for (const auto& p : points) {
        if (!(p.bpp > 0)) throw config_error("curve '" + label + "' has non-positive bpp");
        if (p.top1_pct < 0 || p.top1_pct > 100)
            throw config_error("curve '" + label + "' accuracy must be a percentage");
    }
    return RateAccuracyCurve{std::move(label), std::move(points)};
}

RateAccuracyCurve collect_curve(const std::string& label,
                                const std::vector<std::string>& checkpoint_paths,
                                const Cifar10& dataset, const NormStats& norm,
                                int64_t eval_limit) {
    if (checkpoint_paths.empty()) throw config_error("collect_curve: no checkpoints");
    std::vector<CurvePoint> pts;
    std::optional<ArchConfig> arch;
    for (const auto& path : checkpoint_paths) {
        const ModelBundle b = load_bundle(path);
        if (arch && !(*arch == b.arch))
            throw config_error("collect_curve: checkpoints disagree on ArchConfig (" + path + ")");
        arch = b.arch;
        const EvalResult r = evaluate(b, dataset, norm, eval_limit);
        pts.push_back({r.bpp, r.top1 * 100.0});
    }
    return make_curve(label, std::move(pts));
}

double delta_accuracy(const RateAccuracyCurve& test, const RateAccuracyCurve& baseline,
                      FitMethod method) {
    const RateAccuracyCurve tc = make_curve(test.label, test.points);  // canonical ordering
    const RateAccuracyCurve bc = make_curve(baseline.label, baseline.points);

    const double r_lo = std::max(tc.points.front().bpp, bc.points.front().bpp);
    const double r_hi = std::min(tc.points.back().bpp, bc.points.back().bpp);
    if (!(r_lo < r_hi))
        throw config_error("delta_accuracy: curves have no overlapping bit-rate interval");

    const CurveFit ft = make_fit(tc, method);
    const CurveFit fb = make_fit(bc, method);

    // composite Simpson, 10,000 intervals
    constexpr int64_t kIntervals = 10000;
    const double h = (r_hi - r_lo) / static_cast<double>(kIntervals);
    auto diff = [&](double r) { return ft.eval(r) - fb.eval(r); };
    double sum = diff(r_lo) + diff(r_hi);
    for (int64_t i = 1; i < kIntervals; ++i) {
        const double r = r_lo + h * static_cast<double>(i);
        sum += (i % 2 == 1 ? 4.0 : 2.0) * diff(r);
    }
    const double integral = sum * h / 3.0;
    return integral / (r_hi - r_lo);
}

RateAccuracyCurve load_curve_csv(const std::string& path, const std::string& label) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open curve file " + path);
    std::vector<CurvePoint> pts;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b))
            throw data_error("curve file " + path + ": expected 'bpp,top1' rows");
        try {
            pts.push_back({std::stod(a), std::stod(b)});
        } catch (...) {
            if (pts.empty() && (a == "bpp" || a == "# bpp")) continue;  // header row
            throw data_error("curve file " + path + ": cannot parse row '" + line + "'");
        }
    }
    return make_curve(label, std::move(pts));
}

RacReport rac_report(const std::vector<BenchConfigSpec>& specs, const Cifar10& dataset,
                     const NormStats& norm, const std::string& baseline_label,
                     const LatencyOptions& lat, int64_t eval_limit) {
    if (specs.empty()) throw config_error("rac_report: no configurations");
    const auto base_it = std::find_if(specs.begin(), specs.end(), [&](const BenchConfigSpec& s) {
        return s.name == baseline_label;
    });
    if (base_it == specs.end())
        throw config_error("rac_report: unknown baseline label '" + baseline_label + "'");

    RacReport report;
    report.baseline = baseline_label;

    const int64_t lat_n = lat.n > 0 ? lat.n : std::min<int64_t>(dataset.count, 1000);
    std::vector<RateAccuracyCurve> curves;
    for (const auto& spec : specs) {
        RacConfigReport cr;
        cr.name = spec.name;
        cr.curve = collect_curve(spec.name, spec.checkpoints, dataset, norm, eval_limit);
        const ModelBundle first = load_bundle(spec.checkpoints.front());
        cr.encoder_macs = encoder_macs(first.arch);
        cr.latency = measure_encoding_latency(first, dataset, norm, lat.warmup, lat_n);
        report.configs.push_back(std::move(cr));
    }

    const RateAccuracyCurve& base_curve =
        report.configs[static_cast<size_t>(base_it - specs.begin())].curve;
    for (auto& cr : report.configs) {
        const bool cubic_ok = cr.curve.points.size() >= 4 && base_curve.points.size() >= 4;
        cr.fit = cubic_ok ? "cubic" : "linear";
        if (cr.name == baseline_label) {
            cr.delta_acc = 0.0;  // by definition
            continue;
        }
        cr.delta_acc = delta_accuracy(cr.curve, base_curve,
                                      cubic_ok ? FitMethod::cubic : FitMethod::linear);
    }
    return report;
}

nlohmann::json rac_report_to_json(const RacReport& report) {
    nlohmann::json configs = nlohmann::json::array();
    for (const auto& c : report.configs) {
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& p : c.curve.points) curve.push_back({p.bpp, p.top1_pct});
        configs.push_back({{"name", c.name},
                           {"macs", c.encoder_macs},
                           {"latency",
                            {{"n", c.latency.n},
                             {"warmup", c.latency.warmup},
                             {"mean_us", c.latency.mean_us},
                             {"median_us", c.latency.median_us},
                             {"p95_us", c.latency.p95_us},
                             {"stddev_us", c.latency.stddev_us}}},
                           {"curve", curve},
                           {"delta_acc", c.delta_acc},
                           {"fit", c.fit}});
    }
    return nlohmann::json{{"baseline", report.baseline}, {"configs", configs}};
}

std::string rac_report_to_csv(const RacReport& report) {
    std::ostringstream os;
    os.precision(8);
    os << "config,macs,latency_mean_us,latency_p95_us,delta_acc,points\n";
    for (const auto& c : report.configs) {
        os << c.name << ',' << c.encoder_macs << ',' << c.latency.mean_us << ','
           << c.latency.p95_us << ',' << c.delta_acc << ',';
        for (size_t i = 0; i < c.curve.points.size(); ++i) {
            if (i) os << ';';
            os << c.curve.points[i].bpp << ':' << c.curve.points[i].top1_pct;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace efc
