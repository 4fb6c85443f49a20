#include "efc/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace efc {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'E', 'F', 'C', 'K', 'P', 'T', '0', '1'};

std::vector<const LayerParam*> sorted_params(const ParamSet& ps) {
    std::vector<const LayerParam*> v;
    v.reserve(ps.size());
    for (const auto& p : ps.all()) v.push_back(&p);
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->name < b->name; });
    return v;
}

json tables_to_json(const CdfTableSet& set) {
    json ymin = json::array(), ymax = json::array(), cum = json::array();
    for (const auto& t : set.tables) {
        ymin.push_back(t.y_min);
        ymax.push_back(t.y_max);
        cum.push_back(t.cum);
    }
    return json{{"y_min", ymin}, {"y_max", ymax}, {"cum", cum}};
}

CdfTableSet tables_from_json(const json& j) {
    CdfTableSet set;
    const auto& ymin = j.at("y_min");
    const auto& ymax = j.at("y_max");
    const auto& cum = j.at("cum");
    if (ymin.size() != ymax.size() || ymin.size() != cum.size())
        throw format_error("checkpoint: inconsistent cdf table arrays");
    for (size_t c = 0; c < ymin.size(); ++c) {
        CdfTable t;
        t.y_min = ymin[c].get<int32_t>();
        t.y_max = ymax[c].get<int32_t>();
        t.cum = cum[c].get<std::vector<uint32_t>>();
        if (t.cum.size() != static_cast<size_t>(t.y_max - t.y_min + 2) || t.cum.front() != 0 ||
            t.cum.back() != CdfTableSet::kTotal)
            throw format_error("checkpoint: malformed cdf table for channel " + std::to_string(c));
        for (size_t i = 1; i < t.cum.size(); ++i) {
            if (t.cum[i] <= t.cum[i - 1]) throw format_error("checkpoint: cdf table not increasing");
        }
        set.tables.push_back(std::move(t));
    }
    return set;
}

void write_file(const std::string& path, const std::string& kind, const ArchConfig& arch,
                uint64_t seed, const ParamSet& ps, const CdfTableSet* tables) {
    const auto sorted = sorted_params(ps);
    json manifest = json::array();
    uint64_t offset = 0;
    for (const auto* p : sorted) {
        const uint64_t len = static_cast<uint64_t>(p->tensor.numel()) * 4;
        manifest.push_back(json{{"name", p->name},
                                {"shape", p->tensor.shape()},
                                {"byte_offset", offset},
                                {"byte_len", len}});
        offset += len;
    }
    json header{{"format_version", 1},
                {"kind", kind},
                {"arch", arch.to_json()},
                {"seed", seed},
                {"tensors", manifest},
                {"cdf_tables", tables ? tables_to_json(*tables) : json(nullptr)}};
    const std::string hdr = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(kMagic, sizeof(kMagic));
    const uint32_t hlen = static_cast<uint32_t>(hdr.size());
    uint8_t hlen_le[4];
    for (int i = 0; i < 4; ++i) hlen_le[i] = static_cast<uint8_t>(hlen >> (8 * i));
    f.write(reinterpret_cast<const char*>(hlen_le), 4);
    f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));

    std::vector<uint8_t> le;
    for (const auto* p : sorted) {
        const int64_t n = p->tensor.numel();
        le.resize(static_cast<size_t>(n) * 4);
        const float* v = p->tensor.data();
        for (int64_t i = 0; i < n; ++i) {
            uint32_t bits;
            std::memcpy(&bits, &v[i], 4);
            for (int k = 0; k < 4; ++k) le[static_cast<size_t>(4 * i + k)] = static_cast<uint8_t>(bits >> (8 * k));
        }
        f.write(reinterpret_cast<const char*>(le.data()), static_cast<std::streamsize>(le.size()));
    }
    if (!f) throw io_error("short write to " + path);
}

struct FileContents {
    json header;
    std::vector<uint8_t> payload;
};

FileContents read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw format_error("not a checkpoint file: " + path);
    uint8_t hlen_le[4];
    f.read(reinterpret_cast<char*>(hlen_le), 4);
    if (!f) throw format_error("checkpoint header truncated: " + path);
    uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= static_cast<uint32_t>(hlen_le[i]) << (8 * i);
    std::string hdr(hlen, '\0');
    f.read(hdr.data(), hlen);
    if (!f) throw format_error("checkpoint header truncated: " + path);

    FileContents fc;
    try {
        fc.header = json::parse(hdr);
    } catch (const json::exception& e) {
        throw format_error(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    fc.payload.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    return fc;
}

void load_params(const json& header, const std::vector<uint8_t>& payload, ParamSet& ps) {
    const auto& manifest = header.at("tensors");
    size_t matched = 0;
    for (const auto& entry : manifest) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const uint64_t off = entry.at("byte_offset").get<uint64_t>();
        const uint64_t len = entry.at("byte_len").get<uint64_t>();
        if (!ps.contains(name)) throw format_error("checkpoint tensor " + name + " not in this model");
        auto& p = ps.find(name);
        if (p.tensor.shape() != shape)
            throw format_error("checkpoint tensor " + name + " has shape " + shape_str(shape) +
                               ", model expects " + shape_str(p.tensor.shape()));
        if (off + len > payload.size() || len != static_cast<uint64_t>(p.tensor.numel()) * 4)
            throw format_error("checkpoint tensor " + name + " payload out of bounds");
        float* dst = p.tensor.data();
        const uint8_t* src = payload.data() + off;
        for (int64_t i = 0; i < p.tensor.numel(); ++i) {
            uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) bits |= static_cast<uint32_t>(src[4 * i + k]) << (8 * k);
            std::memcpy(&dst[i], &bits, 4);
        }
        ++matched;
    }
    if (matched != ps.size())
        throw format_error("checkpoint is missing " + std::to_string(ps.size() - matched) +
                           " model tensors");
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::string& path) {
    write_file(path, "bundle", bundle.arch, bundle.seed, bundle.params,
               bundle.tables ? &*bundle.tables : nullptr);
}

ModelBundle load_bundle(const std::string& path) {
    FileContents fc = read_file(path);
    if (fc.header.at("kind").get<std::string>() != "bundle")
        throw format_error(path + " is not a bundle checkpoint (kind=" +
                           fc.header.at("kind").get<std::string>() + ")");
    const ArchConfig arch = ArchConfig::from_json(fc.header.at("arch"));
    const uint64_t seed = fc.header.at("seed").get<uint64_t>();
    ModelBundle b = build_bundle(arch, seed);
    load_params(fc.header, fc.payload, b.params);
    if (!fc.header.at("cdf_tables").is_null()) {
        b.tables = tables_from_json(fc.header.at("cdf_tables"));
        b.prior.y_min.clear();
        b.prior.y_max.clear();
        for (const auto& t : b.tables->tables) {
            b.prior.y_min.push_back(t.y_min);
            b.prior.y_max.push_back(t.y_max);
        }
    }
    refresh_digest(b);
    return b;
}

void save_teacher(const TeacherModel& teacher, const std::string& path) {
    write_file(path, "teacher", teacher.arch, teacher.seed, teacher.params, nullptr);
}

TeacherModel load_teacher(const std::string& path) {
    FileContents fc = read_file(path);
    if (fc.header.at("kind").get<std::string>() != "teacher")
        throw format_error(path + " is not a teacher checkpoint");
    const ArchConfig arch = ArchConfig::from_json(fc.header.at("arch"));
    const uint64_t seed = fc.header.at("seed").get<uint64_t>();
    TeacherModel t = build_teacher(arch, seed);
    load_params(fc.header, fc.payload, t.params);
    // the teacher is a frozen reference once loaded
    t.params.set_trainable("", false);
    return t;
}

std::string checkpoint_kind(const std::string& path) {
    return read_file(path).header.at("kind").get<std::string>();
}

}  // namespace efc
