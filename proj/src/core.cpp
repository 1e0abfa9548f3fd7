#include "freqvit/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace freqvit {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// ImageTensor
// ---------------------------------------------------------------------------

ImageTensor ImageTensor::zeros(int h, int w, int c) {
    ImageTensor img;
    img.height = h;
    img.width = w;
    img.channels = c;
    img.data.assign(static_cast<size_t>(h) * w * c, 0.0f);
    return img;
}

ImageTensor ImageTensor::constant(int h, int w, int c, float v) {
    ImageTensor img = zeros(h, w, c);
    std::fill(img.data.begin(), img.data.end(), v);
    return img;
}

// ---------------------------------------------------------------------------
// Netpbm (P5/P6, maxval 255)
// ---------------------------------------------------------------------------

namespace {

std::vector<uint8_t> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

bool is_pbm_space(uint8_t b) {
    return b == ' ' || b == '\t' || b == '\r' || b == '\n';
}

// Skips whitespace and '#' comments, leaving off at the next token byte.
void skip_separators(const std::vector<uint8_t>& bytes, size_t& off) {
    while (off < bytes.size()) {
        if (is_pbm_space(bytes[off])) {
            ++off;
        } else if (bytes[off] == '#') {
            while (off < bytes.size() && bytes[off] != '\n') ++off;
        } else {
            break;
        }
    }
}

uint64_t parse_uint_token(const std::vector<uint8_t>& bytes, size_t& off,
                          const char* what) {
    skip_separators(bytes, off);
    if (off >= bytes.size())
        throw ParseError(std::string("malformed header: missing ") + what +
                         " at byte " + std::to_string(off));
    if (bytes[off] < '0' || bytes[off] > '9')
        throw ParseError(std::string("malformed header: expected digit for ") + what +
                         " at byte " + std::to_string(off));
    uint64_t v = 0;
    while (off < bytes.size() && bytes[off] >= '0' && bytes[off] <= '9') {
        v = v * 10 + (bytes[off] - '0');
        if (v > 0xffffffffull)
            throw ParseError(std::string("malformed header: ") + what +
                             " overflows at byte " + std::to_string(off));
        ++off;
    }
    return v;
}

}  // namespace

ImageTensor decode_netpbm(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P')
        throw ParseError("malformed header: not a netpbm file at byte 0");
    int channels;
    if (bytes[1] == '6') {
        channels = 3;
    } else if (bytes[1] == '5') {
        channels = 1;
    } else {
        throw ParseError("malformed header: unsupported magic at byte 1");
    }
    size_t off = 2;
    const uint64_t w = parse_uint_token(bytes, off, "width");
    const uint64_t h = parse_uint_token(bytes, off, "height");
    const size_t maxval_off = off;
    const uint64_t maxval = parse_uint_token(bytes, off, "maxval");
    if (maxval != 255)
        throw ParseError("unsupported maxval " + std::to_string(maxval) +
                         " at byte " + std::to_string(maxval_off));
    if (off >= bytes.size() || !is_pbm_space(bytes[off]))
        throw ParseError("malformed header: expected whitespace after maxval at byte " +
                         std::to_string(off));
    ++off;  // exactly one separator byte before payload
    if (w == 0 || h == 0)
        throw ParseError("malformed header: zero dimension at byte " + std::to_string(off));

    const size_t need = static_cast<size_t>(w) * h * channels;
    if (bytes.size() - off < need)
        throw ParseError("truncated payload: need " + std::to_string(need) +
                         " bytes, file ends at byte " + std::to_string(bytes.size()));

    ImageTensor img = ImageTensor::zeros(static_cast<int>(h), static_cast<int>(w), channels);
    for (size_t i = 0; i < need; ++i)
        img.data[i] = static_cast<float>(bytes[off + i]) / 255.0f;
    return img;
}

ImageTensor load_image(const std::string& path) {
    return decode_netpbm(read_all_bytes(path));
}

std::vector<uint8_t> encode_netpbm(const ImageTensor& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("save_image: channels must be 1 or 3, got " +
                                    std::to_string(img.channels));
    std::string header = (img.channels == 3 ? "P6\n" : "P5\n");
    header += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + img.data.size());
    for (float v : img.data) {
        const float c = std::min(1.0f, std::max(0.0f, v));
        bytes.push_back(static_cast<uint8_t>(std::lround(c * 255.0f)));
    }
    return bytes;
}

void save_image(const ImageTensor& img, const std::string& path) {
    const std::vector<uint8_t> bytes = encode_netpbm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// TensorFile
// ---------------------------------------------------------------------------

namespace {

void put_u32_le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32_le(const std::vector<uint8_t>& b, size_t off) {
    return static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
           (static_cast<uint32_t>(b[off + 2]) << 16) |
           (static_cast<uint32_t>(b[off + 3]) << 24);
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<uint32_t>& dims,
                       const float* payload) {
    if (dims.empty() || dims.size() > 255)
        throw std::invalid_argument("tensor rank must be in [1, 255]");
    size_t count = 1;
    for (uint32_t d : dims) count *= d;

    std::vector<uint8_t> bytes;
    bytes.reserve(5 + 4 * dims.size() + 4 * count);
    bytes.insert(bytes.end(), {'F', 'V', 'T', '1'});
    bytes.push_back(static_cast<uint8_t>(dims.size()));
    for (uint32_t d : dims) put_u32_le(bytes, d);
    for (size_t i = 0; i < count; ++i)
        put_u32_le(bytes, std::bit_cast<uint32_t>(payload[i]));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void write_tensor_file(const std::string& path, const TensorData& t) {
    write_tensor_file(path, t.dims, t.values.data());
}

TensorData read_tensor_file(const std::string& path) {
    const std::vector<uint8_t> bytes = read_all_bytes(path);
    if (bytes.size() < 5 || bytes[0] != 'F' || bytes[1] != 'V' || bytes[2] != 'T' ||
        bytes[3] != '1')
        throw ParseError("bad tensor file magic at byte 0: " + path);
    const int rank = bytes[4];
    if (rank == 0) throw ParseError("bad tensor rank 0 at byte 4: " + path);
    size_t off = 5;
    if (bytes.size() < off + 4u * rank)
        throw ParseError("truncated dims at byte " + std::to_string(bytes.size()) + ": " + path);

    TensorData t;
    size_t count = 1;
    for (int i = 0; i < rank; ++i) {
        const uint32_t d = get_u32_le(bytes, off);
        off += 4;
        t.dims.push_back(d);
        count *= d;
    }
    if (bytes.size() - off != 4 * count)
        throw ParseError("payload length mismatch at byte " + std::to_string(off) +
                         ": expected " + std::to_string(4 * count) + " bytes, have " +
                         std::to_string(bytes.size() - off) + ": " + path);
    t.values.resize(count);
    for (size_t i = 0; i < count; ++i) {
        t.values[i] = std::bit_cast<float>(get_u32_le(bytes, off));
        off += 4;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Prng
// ---------------------------------------------------------------------------

std::array<uint32_t, 4> Prng::philox4x32_10(std::array<uint32_t, 4> ctr,
                                            std::array<uint32_t, 2> key) {
    constexpr uint32_t kMul0 = 0xD2511F53u;
    constexpr uint32_t kMul1 = 0xCD9E8D57u;
    constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const uint64_t p0 = static_cast<uint64_t>(kMul0) * ctr[0];
        const uint64_t p1 = static_cast<uint64_t>(kMul1) * ctr[2];
        const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
        const uint32_t lo0 = static_cast<uint32_t>(p0);
        const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
        const uint32_t lo1 = static_cast<uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

Prng::Prng(uint64_t seed, uint64_t stream) : stream_(stream) {
    key_ = {static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)};
}

Prng Prng::derive(uint64_t seed, uint64_t epoch, uint64_t index) {
    if (epoch > 0xffffffffull || index > 0xffffffffull)
        throw std::invalid_argument("Prng::derive: epoch and index must fit in 32 bits");
    return Prng(seed, (epoch << 32) | index);
}

void Prng::refill() {
    const std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(counter_), static_cast<uint32_t>(counter_ >> 32),
        static_cast<uint32_t>(stream_), static_cast<uint32_t>(stream_ >> 32)};
    block_ = philox4x32_10(ctr, key_);
    ++counter_;
    block_pos_ = 0;
}

uint64_t Prng::next_u64() {
    if (block_pos_ >= 4) refill();
    const uint64_t lo = block_[block_pos_];
    const uint64_t hi = block_[block_pos_ + 1];
    block_pos_ += 2;
    return lo | (hi << 32);
}

double Prng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Prng::gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Prng::uniform_int(uint64_t lo, uint64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    const uint64_t range = hi - lo + 1;  // range 0 means the full 2^64 span
    if (range == 0) return next_u64();
    const uint64_t bits = next_u64() >> 11;  // 53 uniform bits
    const uint64_t v = static_cast<uint64_t>(
        (static_cast<unsigned __int128>(bits) * range) >> 53);
    return lo + v;
}

// ---------------------------------------------------------------------------
// FNV-1a
// ---------------------------------------------------------------------------

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a64_str(const std::string& s, uint64_t h) {
    return fnv1a64(s.data(), s.size(), h);
}

uint64_t checksum_file(const std::string& path, uint64_t h) {
    const std::vector<uint8_t> bytes = read_all_bytes(path);
    return fnv1a64(bytes.data(), bytes.size(), h);
}

uint64_t checksum_dir(const std::string& root) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::vector<std::string> rel;
    rel.reserve(files.size());
    for (const auto& p : files) rel.push_back(fs::relative(p, root).generic_string());
    std::sort(rel.begin(), rel.end());

    uint64_t h = kFnvOffset;
    for (const auto& r : rel) {
        h = fnv1a64_str(r, h);
        h = checksum_file((fs::path(root) / r).string(), h);
    }
    return h;
}

}  // namespace freqvit
