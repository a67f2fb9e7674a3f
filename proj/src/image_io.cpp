#include "coordgan/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include <jpeglib.h>

namespace coordgan::img {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

ImageU8 read_png(const std::string& path) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&im, path.c_str()))
        throw std::runtime_error("png: cannot read " + path + ": " + im.message);
    const bool gray = (im.format & PNG_FORMAT_FLAG_COLOR) == 0;
    im.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    ImageU8 out;
    out.height = im.height;
    out.width = im.width;
    out.channels = gray ? 1 : 3;
    out.pixels.resize(size_t(PNG_IMAGE_SIZE(im)));
    if (!png_image_finish_read(&im, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&im);
        throw std::runtime_error("png: decode failed for " + path + ": " + im.message);
    }
    return out;
}

struct JpegErr {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_err_exit(j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegErr*>(cinfo->err)->jump, 1);
}

ImageU8 read_jpeg(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("jpeg: cannot open " + path);
    jpeg_decompress_struct cinfo;
    JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_err_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("jpeg: decode failed for " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    ImageU8 out;
    out.height = cinfo.output_height;
    out.width = cinfo.output_width;
    out.channels = 3;
    out.pixels.resize(size_t(out.height * out.width * 3));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.pixels.data() + size_t(cinfo.output_scanline) * out.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

void write_png(const std::string& path, const ImageU8& image, bool gray) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    im.width = png_uint_32(image.width);
    im.height = png_uint_32(image.height);
    im.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&im, path.c_str(), 0, image.pixels.data(), 0, nullptr))
        throw std::runtime_error("png: cannot write " + path + ": " + im.message);
}

}  // namespace

ImageU8 read_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("image: cannot open " + path);
    unsigned char magic[4] = {0, 0, 0, 0};
    const size_t got = std::fread(magic, 1, 4, f.get());
    f.reset();
    if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P') return read_png(path);
    if (got >= 2 && magic[0] == 0xff && magic[1] == 0xd8) return read_jpeg(path);
    throw std::runtime_error("image: unsupported format (need PNG or JPEG): " + path);
}

void write_png_rgb(const std::string& path, const ImageU8& image) {
    if (image.channels != 3) throw std::invalid_argument("write_png_rgb: need 3 channels");
    write_png(path, image, false);
}

void write_png_gray(const std::string& path, const ImageU8& image) {
    if (image.channels != 1) throw std::invalid_argument("write_png_gray: need 1 channel");
    write_png(path, image, true);
}

ImageU8 from_float_hwc(const TensorT<float>& hwc) {
    ImageU8 out;
    out.height = hwc.dim(0);
    out.width = hwc.dim(1);
    out.channels = hwc.dim(2);
    out.pixels.resize(size_t(hwc.numel()));
    const float* p = hwc.data();
    for (int64_t i = 0; i < hwc.numel(); ++i) {
        const float v = std::min(1.0f, std::max(-1.0f, p[i]));
        out.pixels[size_t(i)] = uint8_t(std::lround((v + 1.0f) * 127.5f));
    }
    return out;
}

TensorT<float> to_float_hwc(const ImageU8& image) {
    TensorT<float> t({image.height, image.width, image.channels});
    float* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = float(image.pixels[size_t(i)]) / 127.5f - 1.0f;
    return t;
}

}  // namespace coordgan::img
