#include "liclab/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "liclab/codec.hpp"
#include "liclab/io.hpp"

namespace liclab {

std::uint8_t pixel_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f) * 255.0f;
    return static_cast<std::uint8_t>(std::lround(c));
}

std::vector<std::uint8_t> encode_ppm(const Tensor& img) {
    if (img.ndim() != 3 || img.dims[0] != 3) throw DimensionError("ppm expects a 3xHxW image, got " + img.shape_str());
    const int h = img.dims[1], w = img.dims[2];
    char header[64];
    const int hn = std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", w, h);
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(hn) + static_cast<std::size_t>(3) * h * w);
    out.insert(out.end(), header, header + hn);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c)
                out.push_back(pixel_byte(img.data[(static_cast<std::size_t>(c) * h + i) * w + j]));
    return out;
}

namespace {

int parse_pnm_int(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    // Skip whitespace and '#' comments.
    while (pos < b.size()) {
        if (std::isspace(b[pos])) {
            ++pos;
        } else if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("malformed PNM header");
    int v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) v = v * 10 + (b[pos++] - '0');
    return v;
}

}  // namespace

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a P6 PPM");
    std::size_t pos = 2;
    const int w = parse_pnm_int(bytes, pos);
    const int h = parse_pnm_int(bytes, pos);
    const int maxval = parse_pnm_int(bytes, pos);
    if (maxval != 255) throw FormatError("only 8-bit PPM supported, maxval " + std::to_string(maxval));
    ++pos;  // the single whitespace after maxval
    if (pos + static_cast<std::size_t>(3) * w * h > bytes.size()) throw FormatError("PPM pixel data truncated");
    Tensor img({3, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c)
                img.data[(static_cast<std::size_t>(c) * h + i) * w + j] =
                    static_cast<float>(bytes[pos++]) / 255.0f;
    return img;
}

void write_ppm(const std::string& path, const Tensor& img) { write_file(path, encode_ppm(img)); }

Tensor read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }

std::vector<std::uint8_t> encode_pgm(const Tensor& img) {
    if (img.ndim() != 2) throw DimensionError("pgm expects an HxW image, got " + img.shape_str());
    const int h = img.dims[0], w = img.dims[1];
    char header[64];
    const int hn = std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", w, h);
    std::vector<std::uint8_t> out(header, header + hn);
    for (float v : img.data) out.push_back(pixel_byte(v));
    return out;
}

void write_pgm(const std::string& path, const Tensor& img) { write_file(path, encode_pgm(img)); }

Tensor pad_to_grid(const Tensor& img) {
    if (img.ndim() != 3 || img.dims[0] != 3) throw DimensionError("pad expects 3xHxW, got " + img.shape_str());
    const int f = CodecModel::kDownsampleFactor;
    const int h = img.dims[1], w = img.dims[2];
    const int hp = ((h + f - 1) / f) * f;
    const int wp = ((w + f - 1) / f) * f;
    Tensor out({1, 3, hp, wp});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < hp; ++i) {
            const int si = std::min(i, h - 1);
            for (int j = 0; j < wp; ++j) {
                const int sj = std::min(j, w - 1);
                out.at(0, c, i, j) = img.data[(static_cast<std::size_t>(c) * h + si) * w + sj];
            }
        }
    return out;
}

Tensor crop_image(const Tensor& batch, int h, int w) {
    if (batch.ndim() != 4 || batch.dims[0] != 1 || batch.dims[1] != 3)
        throw DimensionError("crop expects 1x3xHxW, got " + batch.shape_str());
    Tensor out({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out.data[(static_cast<std::size_t>(c) * h + i) * w + j] = batch.at(0, c, i, j);
    return out;
}

}  // namespace liclab
