#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "freqvit/core.hpp"

using namespace freqvit;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "freqvit_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Reference vectors from the Random123 test suite.
    auto r0 = Prng::philox4x32_10({0, 0, 0, 0}, {0, 0});
    CHECK(r0[0] == 0x6627e8d5u);
    CHECK(r0[1] == 0xe169c58du);
    CHECK(r0[2] == 0xbc57ac4cu);
    CHECK(r0[3] == 0x9b00dbd8u);

    auto r1 = Prng::philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                  {0xffffffffu, 0xffffffffu});
    CHECK(r1[0] == 0x408f276du);
    CHECK(r1[1] == 0x41c83b0eu);
    CHECK(r1[2] == 0xa20bc7c6u);
    CHECK(r1[3] == 0x6d5451fdu);

    auto r2 = Prng::philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                  {0xa4093822u, 0x299f31d0u});
    CHECK(r2[0] == 0xd16cfe09u);
    CHECK(r2[1] == 0x94fdccebu);
    CHECK(r2[2] == 0x5001e420u);
    CHECK(r2[3] == 0x24126ea1u);
}

TEST_CASE("prng determinism and stream separation") {
    Prng a(42, 7), b(42, 7), c(42, 8);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const uint64_t x = a.next_u64();
        if (x != b.next_u64()) all_equal = false;
        if (x != c.next_u64()) any_diff = true;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("prng uniform range and gaussian moments") {
    Prng rng(123);
    const int n = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum2 += g * g;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(mean > -0.005);
    CHECK(mean < 0.005);
    CHECK(var > 0.995);
    CHECK(var < 1.005);

    Prng u(5);
    for (int i = 0; i < 10000; ++i) {
        const double x = u.uniform();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
}

TEST_CASE("prng uniform_int stays in bounds and covers values") {
    Prng rng(9);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const uint64_t v = rng.uniform_int(2, 8);
        REQUIRE(v >= 2);
        REQUIRE(v <= 8);
        hits[v - 2]++;
    }
    for (int h : hits) CHECK(h > 8000);  // roughly uniform
}

TEST_CASE("derive is collision-free over a million (epoch, index) pairs") {
    std::vector<uint64_t> firsts;
    firsts.reserve(1000000);
    for (uint64_t k = 0; k < 1000000; ++k) {
        Prng rng = Prng::derive(77, k / 1000, k % 1000);
        firsts.push_back(rng.next_u64());
    }
    std::sort(firsts.begin(), firsts.end());
    CHECK(std::adjacent_find(firsts.begin(), firsts.end()) == firsts.end());
    CHECK_THROWS_AS(Prng::derive(1, 1ull << 32, 0), std::invalid_argument);
}

TEST_CASE("tensor file round-trip is bit-identical for ranks 1-4") {
    Prng rng(2024);
    for (int rank = 1; rank <= 4; ++rank) {
        std::vector<uint32_t> dims;
        for (int r = 0; r < rank; ++r)
            dims.push_back(static_cast<uint32_t>(2 + rng.uniform_int(0, 3)));
        size_t count = 1;
        for (uint32_t d : dims) count *= d;
        std::vector<float> payload(count);
        for (auto& x : payload) x = static_cast<float>(rng.gaussian() * 10.0);
        payload[0] = 0.0f;
        if (count > 1) payload[1] = -0.0f;
        if (count > 2) payload[2] = 1e-38f;

        const std::string path = temp_path("tensor_rank" + std::to_string(rank) + ".fvt");
        write_tensor_file(path, dims, payload.data());
        const TensorData back = read_tensor_file(path);
        REQUIRE(back.dims == dims);
        REQUIRE(back.values.size() == payload.size());
        for (size_t i = 0; i < payload.size(); ++i)
            CHECK(std::bit_cast<uint32_t>(back.values[i]) ==
                  std::bit_cast<uint32_t>(payload[i]));
    }
}

TEST_CASE("tensor file magic and payload validation") {
    const std::string path = temp_path("tensor_bad.fvt");
    write_bytes(path, {'F', 'V', 'T', '2', 1});
    CHECK_THROWS_AS(read_tensor_file(path), ParseError);
    write_bytes(path, {'F', 'V', 'T', '1', 1, 2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f});
    CHECK_THROWS_WITH_AS(read_tensor_file(path),
                         doctest::Contains("payload length mismatch"), ParseError);
}

TEST_CASE("ppm decode maps 8-bit values to v/255") {
    // P6 2x1: (255,0,0), (0,0,255)
    std::vector<uint8_t> p6 = {'P', '6', '\n', '2', ' ', '1', '\n', '2', '5', '5', '\n',
                               255, 0,   0,    0,   0,   255};
    ImageTensor img = decode_netpbm(p6);
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.channels == 3);
    CHECK(img.at(0, 0, 0) == 1.0f);
    CHECK(img.at(0, 0, 1) == 0.0f);
    CHECK(img.at(0, 0, 2) == 0.0f);
    CHECK(img.at(0, 1, 2) == 1.0f);

    std::vector<uint8_t> p5 = {'P', '5', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 128};
    ImageTensor gray = decode_netpbm(p5);
    CHECK(gray.channels == 1);
    CHECK(gray.at(0, 0, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
}

TEST_CASE("ppm header errors name a byte offset") {
    std::vector<uint8_t> bad_maxval = {'P', '6', '\n', '1', ' ', '1', '\n',
                                       '6', '5', '5', '3', '5', '\n', 0, 0, 0};
    CHECK_THROWS_WITH_AS(decode_netpbm(bad_maxval), doctest::Contains("unsupported maxval"),
                         ParseError);
    CHECK_THROWS_WITH_AS(decode_netpbm(bad_maxval), doctest::Contains("byte"), ParseError);

    std::vector<uint8_t> truncated = {'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5',
                                      '\n', 1, 2, 3};
    CHECK_THROWS_WITH_AS(decode_netpbm(truncated), doctest::Contains("truncated payload"),
                         ParseError);

    std::vector<uint8_t> no_dims = {'P', '6', '\n'};
    CHECK_THROWS_AS(decode_netpbm(no_dims), ParseError);
}

TEST_CASE("ppm comments in headers are skipped") {
    std::vector<uint8_t> with_comment;
    const std::string header = "P5\n# a comment line\n2 1\n255\n";
    with_comment.assign(header.begin(), header.end());
    with_comment.push_back(10);
    with_comment.push_back(200);
    ImageTensor img = decode_netpbm(with_comment);
    CHECK(img.width == 2);
    CHECK(img.at(0, 1, 0) == doctest::Approx(200.0 / 255.0));
}

TEST_CASE("save_image emits P5 for 1 channel and exact payload size for P6") {
    ImageTensor gray = ImageTensor::constant(2, 3, 1, 0.25f);
    auto bytes = encode_netpbm(gray);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[1] == '5');

    ImageTensor rgb = ImageTensor::constant(224, 224, 3, 0.5f);
    auto rgb_bytes = encode_netpbm(rgb);
    CHECK(rgb_bytes.size() == 15u + 224u * 224u * 3u);

    ImageTensor bad = ImageTensor::constant(2, 2, 2, 0.5f);
    CHECK_THROWS_AS(encode_netpbm(bad), std::invalid_argument);
}

TEST_CASE("ppm round-trip: all-0.5 image quantizes to 128/255") {
    const std::string path = temp_path("half.ppm");
    save_image(ImageTensor::constant(4, 4, 3, 0.5f), path);
    ImageTensor back = load_image(path);
    for (float v : back.data) CHECK(v == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
}

TEST_CASE("ppm round-trip error bounded by quantization half-step") {
    Prng rng(31);
    ImageTensor img = ImageTensor::zeros(8, 8, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    const std::string path = temp_path("roundtrip.ppm");
    save_image(img, path);
    ImageTensor back = load_image(path);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("checksum_dir is deterministic and content-sensitive") {
    namespace fs = std::filesystem;
    const std::string root = temp_path("ckdir");
    fs::remove_all(root);
    fs::create_directories(root + "/a");
    { std::ofstream(root + "/a/x.txt") << "hello"; }
    { std::ofstream(root + "/y.txt") << "world"; }
    const uint64_t h1 = checksum_dir(root);
    const uint64_t h2 = checksum_dir(root);
    CHECK(h1 == h2);
    { std::ofstream(root + "/y.txt") << "world!"; }
    CHECK(checksum_dir(root) != h1);
}
