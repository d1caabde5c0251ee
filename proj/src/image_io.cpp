#include "tsg/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace tsg {

namespace {

constexpr unsigned char kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t read_be32(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_be32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void append_chunk(std::vector<unsigned char>& out, const char type[4], const unsigned char* data, size_t len) {
    write_be32(out, static_cast<uint32_t>(len));
    const size_t type_pos = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + len);
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_pos, static_cast<uInt>(4 + len));
    write_be32(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

Tensor load_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) {
        throw IoError(path.string() + " is not a PNG file");
    }

    uint32_t width = 0, height = 0;
    int color_type = -1;
    std::vector<unsigned char> idat;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = read_be32(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw IoError(path.string() + ": truncated chunk");
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const unsigned char* data = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError(path.string() + ": bad IHDR");
            width = read_be32(data);
            height = read_be32(data + 4);
            const int bit_depth = data[8];
            color_type = data[9];
            if (bit_depth != 8) throw IoError(path.string() + ": only 8-bit PNG supported");
            if (color_type != 0 && color_type != 2 && color_type != 4 && color_type != 6) {
                throw IoError(path.string() + ": unsupported color type " + std::to_string(color_type));
            }
            if (data[12] != 0) throw IoError(path.string() + ": interlaced PNG not supported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width == 0 || height == 0 || idat.empty()) throw IoError(path.string() + ": missing image data");

    const int channels = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 4 ? 2 : 4;
    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<unsigned char> raw(height * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size()) {
        throw IoError(path.string() + ": PNG inflate failed");
    }

    // undo per-row filters in place
    std::vector<unsigned char> pixels(height * stride);
    for (uint32_t y = 0; y < height; ++y) {
        const unsigned char filter = raw[y * (stride + 1)];
        const unsigned char* src = &raw[y * (stride + 1) + 1];
        unsigned char* dst = &pixels[y * stride];
        const unsigned char* up = y > 0 ? &pixels[(y - 1) * stride] : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            const int left = x >= static_cast<size_t>(channels) ? dst[x - channels] : 0;
            const int above = up ? up[x] : 0;
            const int corner = (up && x >= static_cast<size_t>(channels)) ? up[x - channels] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += above; break;
                case 3: v += (left + above) / 2; break;
                case 4: v += paeth(left, above, corner); break;
                default: throw IoError(path.string() + ": bad filter type");
            }
            dst[x] = static_cast<unsigned char>(v & 0xff);
        }
    }

    Tensor image(Shape{3, static_cast<int>(height), static_cast<int>(width)});
    float* out = image.data();
    const size_t plane = static_cast<size_t>(width) * height;
    for (uint32_t y = 0; y < height; ++y) {
        for (uint32_t x = 0; x < width; ++x) {
            const unsigned char* px = &pixels[y * stride + static_cast<size_t>(x) * channels];
            float r, g, b;
            if (channels >= 3) {
                r = px[0] / 255.0f;
                g = px[1] / 255.0f;
                b = px[2] / 255.0f;
            } else {
                r = g = b = px[0] / 255.0f;
            }
            const size_t p = static_cast<size_t>(y) * width + x;
            out[p] = r;
            out[plane + p] = g;
            out[2 * plane + p] = b;
        }
    }
    return image;
}

void save_png(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("save_png: expected [3,H,W] image, got " + shape_str(image.shape()));
    }
    const int h = image.dim(1), w = image.dim(2);
    const size_t stride = static_cast<size_t>(w) * 3;
    const size_t plane = static_cast<size_t>(w) * h;
    const float* data = image.data();

    std::vector<unsigned char> raw(static_cast<size_t>(h) * (stride + 1));
    for (int y = 0; y < h; ++y) {
        raw[static_cast<size_t>(y) * (stride + 1)] = 0;  // filter: none
        unsigned char* row = &raw[static_cast<size_t>(y) * (stride + 1) + 1];
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = data[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * w + x];
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }

    uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_bound);
    if (compress2(comp.data(), &comp_bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw IoError("save_png: deflate failed");
    }
    comp.resize(comp_bound);

    std::vector<unsigned char> out;
    out.insert(out.end(), kSignature, kSignature + 8);
    unsigned char ihdr[13];
    ihdr[0] = static_cast<unsigned char>(w >> 24);
    ihdr[1] = static_cast<unsigned char>(w >> 16);
    ihdr[2] = static_cast<unsigned char>(w >> 8);
    ihdr[3] = static_cast<unsigned char>(w);
    ihdr[4] = static_cast<unsigned char>(h >> 24);
    ihdr[5] = static_cast<unsigned char>(h >> 16);
    ihdr[6] = static_cast<unsigned char>(h >> 8);
    ihdr[7] = static_cast<unsigned char>(h);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // RGB
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    append_chunk(out, "IHDR", ihdr, 13);
    append_chunk(out, "IDAT", comp.data(), comp.size());
    append_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

}  // namespace tsg
