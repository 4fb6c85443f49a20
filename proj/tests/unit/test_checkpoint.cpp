#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "efc/checkpoint.hpp"
#include "efc/rng.hpp"

using namespace efc;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/efc_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ModelBundle tiny_bundle(uint64_t seed) {
    ArchConfig a;
    a.enc_width = 12;
    a.bottleneck_ch = 6;
    a.dec_width = 12;
    a.num_res_blocks = 1;
    return build_bundle(a, seed);
}

}  // namespace

TEST_CASE("bundle checkpoint round-trips weights, arch, seed and digest") {
    TempFile f("bundle.ckpt");
    ModelBundle b = tiny_bundle(31);
    b.prior.compute_support();
    b.tables = freeze(b.prior);
    refresh_digest(b);
    save_bundle(b, f.path);

    ModelBundle back = load_bundle(f.path);
    CHECK(back.arch == b.arch);
    CHECK(back.seed == 31);
    CHECK(back.digest == b.digest);
    REQUIRE(back.has_tables());
    CHECK(back.tables->tables.size() == b.tables->tables.size());
    for (size_t c = 0; c < b.tables->tables.size(); ++c)
        CHECK(back.tables->tables[c].cum == b.tables->tables[c].cum);
    for (const auto& p : b.params.all()) {
        const auto& q = back.params.find(p.name);
        CHECK(std::memcmp(p.tensor.data(), q.tensor.data(), size_t(p.tensor.numel()) * 4) == 0);
    }
    CHECK(checkpoint_kind(f.path) == "bundle");
}

TEST_CASE("file layout: magic, LE header length, JSON header") {
    TempFile f("layout.ckpt");
    ModelBundle b = tiny_bundle(5);
    save_bundle(b, f.path);

    std::ifstream in(f.path, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::memcmp(magic, "EFCKPT01", 8) == 0);
    uint8_t len_le[4];
    in.read(reinterpret_cast<char*>(len_le), 4);
    uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= uint32_t(len_le[i]) << (8 * i);
    std::string hdr(hlen, '\0');
    in.read(hdr.data(), hlen);
    REQUIRE(bool(in));
    const auto j = nlohmann::json::parse(hdr);
    CHECK(j.at("format_version") == 1);
    CHECK(j.at("kind") == "bundle");
    CHECK(j.at("seed") == 5);
    CHECK(j.at("arch").contains("patch_size"));
    CHECK(j.at("cdf_tables").is_null());
    // manifest is sorted by name with contiguous offsets
    uint64_t expect_off = 0;
    std::string prev;
    for (const auto& t : j.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        CHECK(prev < name);
        prev = name;
        CHECK(t.at("byte_offset").get<uint64_t>() == expect_off);
        expect_off += t.at("byte_len").get<uint64_t>();
    }
}

TEST_CASE("teacher checkpoints round-trip and load frozen") {
    TempFile f("teacher.ckpt");
    ArchConfig a;
    a.dec_width = 12;
    TeacherModel t = build_teacher(a, 77);
    save_teacher(t, f.path);
    TeacherModel back = load_teacher(f.path);
    CHECK(back.seed == 77);
    for (const auto& p : t.params.all()) {
        const auto& q = back.params.find(p.name);
        CHECK(std::memcmp(p.tensor.data(), q.tensor.data(), size_t(p.tensor.numel()) * 4) == 0);
        CHECK_FALSE(q.trainable);
    }
    CHECK_THROWS_AS(load_bundle(f.path), format_error);  // wrong kind
}

TEST_CASE("loading corrupted files raises format errors") {
    TempFile f("corrupt.ckpt");
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "definitely not a checkpoint";
    }
    CHECK_THROWS_AS(load_bundle(f.path), format_error);
    CHECK_THROWS_AS(load_bundle("/tmp/efc_missing_file.ckpt"), io_error);

    // valid header, truncated payload
    ModelBundle b = tiny_bundle(3);
    save_bundle(b, f.path);
    std::ifstream in(f.path, std::ios::binary);
    std::vector<char> all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    {
        std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), std::streamsize(all.size() - 64));
    }
    CHECK_THROWS_AS(load_bundle(f.path), format_error);
}

TEST_CASE("checkpoint digest is stable across save/load cycles") {
    TempFile f1("cycle1.ckpt"), f2("cycle2.ckpt");
    ModelBundle b = tiny_bundle(9);
    save_bundle(b, f1.path);
    ModelBundle l1 = load_bundle(f1.path);
    save_bundle(l1, f2.path);
    ModelBundle l2 = load_bundle(f2.path);
    CHECK(l1.digest == l2.digest);
    CHECK(l1.digest == b.digest);
}
