// Shared currency types: image tensors, the FVT1 tensor file format, and the
// counter-based PRNG every pipeline stage derives its streams from.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace freqvit {

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// ImageTensor: H x W x C, row-major, channel fastest, values in [0, 1].
// ---------------------------------------------------------------------------
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    static ImageTensor zeros(int h, int w, int c);
    static ImageTensor constant(int h, int w, int c, float v);

    float& at(int y, int x, int ch) {
        return data[(static_cast<size_t>(y) * width + x) * channels + ch];
    }
    float at(int y, int x, int ch) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + ch];
    }
    size_t size() const { return data.size(); }
};

// Binary PPM (P6) / PGM (P5), maxval 255 only. Values map to v/255.
ImageTensor load_image(const std::string& path);
ImageTensor decode_netpbm(const std::vector<uint8_t>& bytes);
void save_image(const ImageTensor& img, const std::string& path);
std::vector<uint8_t> encode_netpbm(const ImageTensor& img);

// ---------------------------------------------------------------------------
// TensorFile ("FVT1"): rank u8, dims u32 LE, payload f32 LE row-major.
// ---------------------------------------------------------------------------
struct TensorData {
    std::vector<uint32_t> dims;
    std::vector<float> values;
};

void write_tensor_file(const std::string& path, const std::vector<uint32_t>& dims,
                       const float* payload);
void write_tensor_file(const std::string& path, const TensorData& t);
TensorData read_tensor_file(const std::string& path);

// ---------------------------------------------------------------------------
// Prng: Philox4x32-10 counter-based generator.
//
// State is one 128-bit counter block; the upper two words carry the stream id
// so distinct streams are distinct counter prefixes. (seed, stream) fully
// determines the output sequence on every platform. derive(seed, epoch, index)
// packs (epoch, index) into the stream id and is injective for
// epoch, index < 2^32.
// ---------------------------------------------------------------------------
class Prng {
public:
    explicit Prng(uint64_t seed, uint64_t stream = 0);

    static Prng derive(uint64_t seed, uint64_t epoch, uint64_t index);

    uint64_t next_u64();
    // [0, 1), 53-bit resolution.
    double uniform();
    // Standard normal via Box-Muller over two uniform draws (no caching).
    double gaussian();
    // Uniform integer in [lo, hi], inclusive.
    uint64_t uniform_int(uint64_t lo, uint64_t hi);

    uint64_t stream_id() const { return stream_; }

    // Raw block function, exposed for known-answer tests.
    static std::array<uint32_t, 4> philox4x32_10(std::array<uint32_t, 4> ctr,
                                                 std::array<uint32_t, 2> key);

private:
    void refill();

    std::array<uint32_t, 2> key_;
    uint64_t stream_ = 0;
    uint64_t counter_ = 0;
    std::array<uint32_t, 4> block_{};
    int block_pos_ = 4;  // empty
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used for config hashes and artifact checksums.
// ---------------------------------------------------------------------------
constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = kFnvOffset);
uint64_t fnv1a64_str(const std::string& s, uint64_t h = kFnvOffset);
uint64_t checksum_file(const std::string& path, uint64_t h = kFnvOffset);
// Hash of relative paths and contents of all regular files under root,
// visited in sorted order.
uint64_t checksum_dir(const std::string& root);

}  // namespace freqvit
