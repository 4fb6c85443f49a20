#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "efc/dataset.hpp"
#include "efc/model.hpp"

namespace efc {

struct LatencyStats {
    int64_t n = 0;       // timed iterations (warmup excluded)
    int64_t warmup = 0;  // discarded leading iterations
    double mean_us = 0;
    double median_us = 0;
    double p95_us = 0;
    double stddev_us = 0;  // sample standard deviation
};

// Core harness: runs fn(i) for warmup+n iterations, keeps the last n timings.
// The clock is injectable (nanoseconds) so harness logic is testable without
// real time. n must be >= 1.
using ClockFn = std::function<uint64_t()>;
LatencyStats measure_latency(const std::function<void(int64_t)>& fn, int64_t warmup, int64_t n,
                             ClockFn clock = {});

// Times encoder forward + quantize + range coding per image, single-threaded
// in the timed region. Images cycle if warmup+n exceeds the dataset.
LatencyStats measure_encoding_latency(const ModelBundle& bundle, const Cifar10& dataset,
                                      const NormStats& norm, int64_t warmup, int64_t n);

struct CurvePoint {
    double bpp = 0;
    double top1_pct = 0;  // percent, [0,100]
};

// Operating points of one model family, strictly increasing in bpp.
struct RateAccuracyCurve {
    std::string label;
    std::vector<CurvePoint> points;
};

// Sorts by bpp and validates: >= 2 points, no duplicates within 1e-6.
RateAccuracyCurve make_curve(std::string label, std::vector<CurvePoint> points);

// One evaluate() per checkpoint; top-1 is reported in percent.
RateAccuracyCurve collect_curve(const std::string& label,
                                const std::vector<std::string>& checkpoint_paths,
                                const Cifar10& dataset, const NormStats& norm,
                                int64_t eval_limit = 0);

enum class FitMethod { cubic, linear };

// Average accuracy difference (test - baseline) over the overlapping bit-rate
// interval, integrated on the plain (non-logarithmic) rate axis with
// 10,000-interval composite Simpson. cubic fits a least-squares cubic
// (exact interpolation at 4 points) and needs >= 4 points per curve; linear
// interpolates piecewise and needs >= 2. Units: accuracy percentage points.
double delta_accuracy(const RateAccuracyCurve& test, const RateAccuracyCurve& baseline,
                      FitMethod method);

// curve file helpers for the delta-acc CLI: CSV with columns bpp,top1
RateAccuracyCurve load_curve_csv(const std::string& path, const std::string& label);

struct BenchConfigSpec {
    std::string name;
    std::vector<std::string> checkpoints;  // one per lambda
};

struct LatencyOptions {
    int64_t warmup = 10;
    int64_t n = 0;  // 0 = min(dataset size, 1000)
};

struct RacConfigReport {
    std::string name;
    int64_t encoder_macs = 0;
    LatencyStats latency;
    RateAccuracyCurve curve;
    double delta_acc = 0;
    std::string fit;  // "cubic" or "linear" (flagged fallback)
};

struct RacReport {
    std::string baseline;
    std::vector<RacConfigReport> configs;
};

RacReport rac_report(const std::vector<BenchConfigSpec>& specs, const Cifar10& dataset,
                     const NormStats& norm, const std::string& baseline_label,
                     const LatencyOptions& lat = {}, int64_t eval_limit = 0);

nlohmann::json rac_report_to_json(const RacReport& report);
// columns: config,macs,latency_mean_us,latency_p95_us,delta_acc,points
std::string rac_report_to_csv(const RacReport& report);

}  // namespace efc
