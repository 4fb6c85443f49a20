#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "efc/bench.hpp"
#include "efc/checkpoint.hpp"
#include "efc/client.hpp"
#include "efc/codec.hpp"
#include "efc/datagen.hpp"
#include "efc/eval.hpp"
#include "efc/md5.hpp"
#include "efc/ops.hpp"
#include "efc/server.hpp"
#include "efc/train.hpp"

namespace {

using namespace efc;

// exit codes: 0 ok, 1 usage, 2 runtime, 3 data/format
constexpr int kExitRuntime = 2;
constexpr int kExitData = 3;

Tensor load_one_image(const std::string& path, int64_t index, const NormStats& norm) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw io_error("cannot open image file " + path);
    const std::streamoff size = f.tellg();
    f.seekg(0);

    Tensor img({3, Cifar10::kSide, Cifar10::kSide});
    if (size == Cifar10::kImageBytes) {
        // raw 3072-byte channel-major RGB
        std::vector<uint8_t> raw(Cifar10::kImageBytes);
        f.read(reinterpret_cast<char*>(raw.data()), Cifar10::kImageBytes);
        if (!f) throw data_error("short read from " + path);
        for (int c = 0; c < 3; ++c) {
            const float mean = norm.mean[static_cast<size_t>(c)];
            const float inv = 1.0f / norm.stddev[static_cast<size_t>(c)];
            for (int i = 0; i < 1024; ++i)
                img.data()[c * 1024 + i] =
                    (static_cast<float>(raw[static_cast<size_t>(c * 1024 + i)]) / 255.0f - mean) * inv;
        }
        return img;
    }
    if (size % Cifar10::kRecordBytes == 0 && size > 0) {
        const Cifar10 ds = load_cifar10_binary(path);
        if (index < 0 || index >= ds.count)
            throw config_error("--index " + std::to_string(index) + " out of range (dataset has " +
                               std::to_string(ds.count) + " records)");
        write_image(ds, index, norm, img.data());
        return img;
    }
    throw data_error("image file must be 3072 raw bytes or CIFAR-10 3073-byte records");
}

std::string pct(double v) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed << v * 100.0 << "%";
    return os.str();
}

int cmd_train_teacher(const std::string& config_path, const std::string& data_dir,
                      const std::string& out, int epochs, int64_t seed) {
    TeacherTrainConfig cfg;
    if (!config_path.empty()) cfg = TeacherTrainConfig::from_json_file(config_path);
    if (!data_dir.empty()) {
        cfg.train_path = data_dir + "/train.bin";
        cfg.test_path = data_dir + "/test.bin";
    }
    if (epochs > 0) cfg.epochs = epochs;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    const double top1 = train_teacher(cfg, out);
    std::cout << "teacher saved to " << out << "  top1=" << pct(top1) << std::endl;
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& teacher, const std::string& out, double lambda,
              const std::string& strategy, const std::string& setting, int epochs, int epochs2,
              int64_t seed, const std::string& csv) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = TrainConfig::from_json_file(config_path);
    if (!data_dir.empty()) {
        cfg.train_path = data_dir + "/train.bin";
        cfg.test_path = data_dir + "/test.bin";
    }
    if (!teacher.empty()) cfg.teacher_path = teacher;
    if (lambda > 0) cfg.lambda_rate = lambda;
    if (!strategy.empty()) cfg.strategy = strategy_from(strategy);
    if (!setting.empty()) cfg.setting = setting_from(setting);
    if (epochs > 0) cfg.epochs_stage1 = epochs;
    if (epochs2 > 0) cfg.epochs_stage2 = epochs2;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    if (!csv.empty()) cfg.metrics_csv = csv;

    const TrainResult r = train(cfg, out);
    if (r.nan_abort)
        std::cerr << "warning: training diverged; saved last good epoch ("
                  << r.completed_epochs << ")" << std::endl;
    std::cout << "checkpoint " << out << "  bpp=" << r.final_bpp << "  top1=" << pct(r.final_top1)
              << std::endl;
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, int64_t count,
             const std::string& records_csv) {
    const ModelBundle bundle = load_bundle(ckpt);
    const Cifar10 ds = load_cifar10_binary(data);
    const EvalResult r = evaluate(bundle, ds, NormStats{}, count);
    if (!records_csv.empty()) {
        std::ofstream f(records_csv, std::ios::trunc);
        if (!f) throw io_error("cannot open " + records_csv);
        f << "index,label,predicted,bits\n";
        for (const auto& rec : r.records)
            f << rec.index << ',' << rec.label << ',' << rec.predicted << ',' << rec.bits << '\n';
    }
    std::cout << "images=" << r.records.size() << "  bpp=" << r.bpp << "  top1=" << pct(r.top1)
              << "  clamped_symbols=" << r.clamped_symbols << std::endl;
    return 0;
}

int cmd_encode(const std::string& ckpt, const std::string& image, int64_t index,
               const std::string& out) {
    const ModelBundle bundle = load_bundle(ckpt);
    const Tensor img = load_one_image(image, index, NormStats{});
    const CompressResult res = compress(bundle, img);
    const auto bytes = res.cf.serialize();
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + out + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    std::cout << "wrote " << bytes.size() << " bytes (" << res.cf.bpp() << " bpp, "
              << res.clamped << " clamped symbols) to " << out << std::endl;
    return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& in) {
    const ModelBundle bundle = load_bundle(ckpt);
    std::ifstream f(in, std::ios::binary);
    if (!f) throw io_error("cannot open " + in);
    const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    const CompressedFeature cf = CompressedFeature::parse(bytes);
    const Tensor latent = decompress(bundle, cf);
    const Tensor feature = decoder_forward(bundle, latent, nullptr);
    const Tensor logits = classifier_forward(bundle, feature, nullptr);
    const Tensor probs = softmax(logits);
    std::vector<int> order(static_cast<size_t>(probs.numel()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return probs.data()[a] != probs.data()[b] ? probs.data()[a] > probs.data()[b] : a < b;
    });
    std::cout << "class=" << order[0] << std::endl;
    std::cout << "top5:";
    for (int i = 0; i < 5 && i < static_cast<int>(order.size()); ++i)
        std::cout << " " << order[static_cast<size_t>(i)] << ":" << probs.data()[order[static_cast<size_t>(i)]];
    std::cout << std::endl;
    return 0;
}

int cmd_classify(const std::string& addr, const std::string& ckpt, const std::string& images,
                 int64_t count) {
    const ModelBundle bundle = load_bundle(ckpt);
    const Cifar10 ds = load_cifar10_binary(images);
    const int64_t n = count > 0 ? std::min(count, ds.count) : ds.count;
    const auto [host, port] = split_address(addr);
    Client client(host, port, bundle);

    int64_t correct = 0;
    int64_t encode_total = 0, rtt_total = 0, bytes_total = 0;
    for (int64_t i = 0; i < n; ++i) {
        Tensor img({3, Cifar10::kSide, Cifar10::kSide});
        write_image(ds, i, NormStats{}, img.data());
        const auto [pred, t] = client.classify(img);
        correct += pred.top1() == ds.labels[static_cast<size_t>(i)] ? 1 : 0;
        encode_total += t.encode_us;
        rtt_total += t.rtt_us;
        bytes_total += t.transfer_bytes;
    }
    std::cout << "images=" << n << "  top1=" << pct(static_cast<double>(correct) / n)
              << "  mean_encode_us=" << encode_total / n << "  mean_rtt_us=" << rtt_total / n
              << "  mean_transfer_bytes=" << bytes_total / n << std::endl;
    return 0;
}

int cmd_bench(const std::string& configs_path, const std::string& data_dir,
              const std::string& baseline, const std::string& out_json,
              const std::string& out_csv, int64_t lat_n, int64_t warmup, int64_t eval_limit) {
    std::ifstream f(configs_path);
    if (!f) throw io_error("cannot open " + configs_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("bench config is not valid JSON: ") + e.what());
    }
    std::vector<BenchConfigSpec> specs;
    try {
        for (const auto& c : j.at("configs")) {
            specs.push_back({c.at("name").get<std::string>(),
                             c.at("checkpoints").get<std::vector<std::string>>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("bad bench config: ") + e.what());
    }
    std::string base = baseline;
    if (base.empty() && j.contains("baseline")) base = j.at("baseline").get<std::string>();
    if (base.empty()) throw config_error("bench needs --baseline or a baseline field");

    const Cifar10 ds = load_cifar10_binary(data_dir + "/test.bin");
    LatencyOptions lat;
    if (lat_n > 0) lat.n = lat_n;
    if (warmup >= 0) lat.warmup = warmup;
    const RacReport report = rac_report(specs, ds, NormStats{}, base, lat, eval_limit);

    const std::string json_text = rac_report_to_json(report).dump(2);
    if (!out_json.empty()) {
        std::ofstream jf(out_json, std::ios::trunc);
        if (!jf) throw io_error("cannot open " + out_json);
        jf << json_text << '\n';
    } else {
        std::cout << json_text << std::endl;
    }
    if (!out_csv.empty()) {
        std::ofstream cf(out_csv, std::ios::trunc);
        if (!cf) throw io_error("cannot open " + out_csv);
        cf << rac_report_to_csv(report);
    }
    return 0;
}

int cmd_delta_acc(const std::string& a, const std::string& b, const std::string& method) {
    const RateAccuracyCurve test = load_curve_csv(a, "test");
    const RateAccuracyCurve base = load_curve_csv(b, "baseline");
    FitMethod m;
    if (method == "cubic")
        m = FitMethod::cubic;
    else if (method == "linear")
        m = FitMethod::linear;
    else if (method == "auto")
        m = (test.points.size() >= 4 && base.points.size() >= 4) ? FitMethod::cubic
                                                                 : FitMethod::linear;
    else
        throw config_error("--method must be cubic, linear or auto");
    std::cout << delta_accuracy(test, base, m) << std::endl;
    return 0;
}

int cmd_flops(const std::string& ckpt) {
    const ModelBundle b = load_bundle(ckpt);
    const int64_t enc = encoder_macs(b.arch);
    const int64_t dec = decoder_macs(b.arch);
    const int64_t cls = classifier_macs(b.arch);
    std::cout << "encoder_macs=" << enc << " (" << flops_from_macs(enc) << " FLOPs)\n"
              << "decoder_macs=" << dec << " (" << flops_from_macs(dec) << " FLOPs)\n"
              << "classifier_macs=" << cls << " (" << flops_from_macs(cls) << " FLOPs)\n"
              << "digest=" << hex_digest(b.digest) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"efc: learned feature compression for edge-cloud image classification"};
    app.require_subcommand(1);

    // train-teacher
    auto* tt = app.add_subcommand("train-teacher", "Train the reference teacher network");
    std::string tt_config, tt_data, tt_out;
    int tt_epochs = 0;
    int64_t tt_seed = -1;
    tt->add_option("--config", tt_config, "teacher config JSON");
    tt->add_option("--data", tt_data, "dataset dir with train.bin/test.bin");
    tt->add_option("--out", tt_out, "output checkpoint path")->required();
    tt->add_option("--epochs", tt_epochs, "override epoch count");
    tt->add_option("--seed", tt_seed, "override seed");

    // train
    auto* tr = app.add_subcommand("train", "Train a feature-compression bundle");
    std::string tr_config, tr_data, tr_teacher, tr_out, tr_strategy, tr_setting, tr_csv;
    double tr_lambda = 0;
    int tr_epochs = 0, tr_epochs2 = 0;
    int64_t tr_seed = -1;
    tr->add_option("--config", tr_config, "train config JSON");
    tr->add_option("--data", tr_data, "dataset dir with train.bin/test.bin");
    tr->add_option("--teacher", tr_teacher, "teacher checkpoint");
    tr->add_option("--out", tr_out, "output checkpoint path")->required();
    tr->add_option("--lambda", tr_lambda, "rate weight");
    tr->add_option("--strategy", tr_strategy, "single_stage | two_stage");
    tr->add_option("--setting", tr_setting, "joint | cls_fixed");
    tr->add_option("--epochs", tr_epochs, "stage-1 epochs");
    tr->add_option("--epochs2", tr_epochs2, "stage-2 epochs (two_stage)");
    tr->add_option("--seed", tr_seed, "override seed");
    tr->add_option("--csv", tr_csv, "per-epoch metrics CSV path");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate bpp and top-1 over a dataset");
    std::string ev_ckpt, ev_data, ev_records;
    int64_t ev_count = 0;
    ev->add_option("--ckpt", ev_ckpt, "bundle checkpoint")->required();
    ev->add_option("--data", ev_data, "CIFAR-10-binary file")->required();
    ev->add_option("--count", ev_count, "evaluate only the first N images");
    ev->add_option("--records", ev_records, "write per-image records CSV");

    // encode
    auto* en = app.add_subcommand("encode", "Compress one image to a feature bitstream");
    std::string en_ckpt, en_image, en_out;
    int64_t en_index = 0;
    en->add_option("--ckpt", en_ckpt, "bundle checkpoint")->required();
    en->add_option("--image", en_image, "raw 3072-byte RGB or CIFAR record file")->required();
    en->add_option("--index", en_index, "record index when --image is a dataset");
    en->add_option("--out", en_out, "output bitstream path")->required();

    // decode
    auto* de = app.add_subcommand("decode", "Decode a bitstream and classify it");
    std::string de_ckpt, de_in;
    de->add_option("--ckpt", de_ckpt, "bundle checkpoint")->required();
    de->add_option("--in", de_in, "bitstream file")->required();

    // serve
    auto* sv = app.add_subcommand("serve", "Run the cloud-side decode+classify server");
    std::string sv_addr, sv_ckpt;
    sv->add_option("--addr", sv_addr, "HOST:PORT to bind")->required();
    sv->add_option("--ckpt", sv_ckpt, "bundle checkpoint")->required();

    // classify
    auto* cl = app.add_subcommand("classify", "Send images to a server and report agreement");
    std::string cl_addr, cl_ckpt, cl_images;
    int64_t cl_count = 0;
    cl->add_option("--addr", cl_addr, "server HOST:PORT")->required();
    cl->add_option("--ckpt", cl_ckpt, "bundle checkpoint")->required();
    cl->add_option("--images", cl_images, "CIFAR-10-binary file")->required();
    cl->add_option("--count", cl_count, "send only the first N images");

    // bench
    auto* be = app.add_subcommand("bench", "Measure the rate-accuracy-complexity report");
    std::string be_configs, be_data, be_baseline, be_json, be_csv;
    int64_t be_lat_n = 0, be_warmup = -1, be_eval_limit = 0;
    be->add_option("--configs", be_configs, "bench config JSON")->required();
    be->add_option("--data", be_data, "dataset dir with test.bin")->required();
    be->add_option("--baseline", be_baseline, "baseline config name");
    be->add_option("--out", be_json, "write the JSON report here (default stdout)");
    be->add_option("--csv", be_csv, "write the CSV report here");
    be->add_option("--lat-n", be_lat_n, "timed encode iterations");
    be->add_option("--warmup", be_warmup, "warmup iterations");
    be->add_option("--eval-limit", be_eval_limit, "evaluate only the first N images");

    // delta-acc
    auto* da = app.add_subcommand("delta-acc", "Delta-accuracy between two curve CSVs");
    std::string da_a, da_b, da_method = "auto";
    da->add_option("test_csv", da_a, "test curve (bpp,top1)")->required();
    da->add_option("baseline_csv", da_b, "baseline curve (bpp,top1)")->required();
    da->add_option("--method", da_method, "cubic | linear | auto");

    // flops
    auto* fl = app.add_subcommand("flops", "Print MAC/FLOP counts of a checkpoint");
    std::string fl_ckpt;
    fl->add_option("--ckpt", fl_ckpt, "bundle checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    try {
        if (tt->parsed()) return cmd_train_teacher(tt_config, tt_data, tt_out, tt_epochs, tt_seed);
        if (tr->parsed())
            return cmd_train(tr_config, tr_data, tr_teacher, tr_out, tr_lambda, tr_strategy,
                             tr_setting, tr_epochs, tr_epochs2, tr_seed, tr_csv);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_count, ev_records);
        if (en->parsed()) return cmd_encode(en_ckpt, en_image, en_index, en_out);
        if (de->parsed()) return cmd_decode(de_ckpt, de_in);
        if (sv->parsed()) return efc::serve_forever(sv_addr, sv_ckpt);
        if (cl->parsed()) return cmd_classify(cl_addr, cl_ckpt, cl_images, cl_count);
        if (be->parsed())
            return cmd_bench(be_configs, be_data, be_baseline, be_json, be_csv, be_lat_n,
                             be_warmup, be_eval_limit);
        if (da->parsed()) return cmd_delta_acc(da_a, da_b, da_method);
        if (fl->parsed()) return cmd_flops(fl_ckpt);
    } catch (const efc::data_error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitData;
    } catch (const efc::format_error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitRuntime;
    }
    return 0;
}
