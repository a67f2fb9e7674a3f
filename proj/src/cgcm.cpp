#include "coordgan/coordspace.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace coordgan::coords {

namespace {

constexpr uint32_t kCgcmVersion = 1;

void put_u32le(FILE* f, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("cgcm: short write");
}

uint32_t get_u32le(FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("cgcm: short read");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void write_cgcm(const std::string& path, const CoordinateMapT<float>& map) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cgcm: cannot open for writing: " + path);
    if (std::fwrite("CGCM", 1, 4, f.get()) != 4) throw std::runtime_error("cgcm: short write");
    put_u32le(f.get(), kCgcmVersion);
    put_u32le(f.get(), uint32_t(map.height));
    put_u32le(f.get(), uint32_t(map.width));
    const float* p = map.values.data();
    const int64_t n = map.values.numel();
    for (int64_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &p[i], 4);
        put_u32le(f.get(), bits);
    }
}

CoordinateMapT<float> read_cgcm(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cgcm: cannot open: " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "CGCM", 4) != 0)
        throw std::runtime_error("cgcm: bad magic in " + path);
    const uint32_t version = get_u32le(f.get());
    if (version != kCgcmVersion)
        throw std::runtime_error("cgcm: unsupported version " + std::to_string(version));
    const int64_t h = get_u32le(f.get());
    const int64_t w = get_u32le(f.get());
    TensorT<float> v({h, w, 2});
    float* p = v.data();
    for (int64_t i = 0; i < v.numel(); ++i) {
        const uint32_t bits = get_u32le(f.get());
        std::memcpy(&p[i], &bits, 4);
    }
    return CoordinateMapT<float>(h, w, std::move(v));
}

}  // namespace coordgan::coords
